#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace losse {

// Shortest round-trip decimal form; "nan", "inf" and "-inf" for non-finite
// values. Output is locale-independent.
std::string fmt_double(double v);

// Fixed-point with `digits` decimals, locale-independent.
std::string fmt_fixed(double v, int digits);

// Accepts the fmt_double spellings of nan and inf. Throws ValueError on malformed text.
double parse_double(std::string_view text);

}  // namespace losse
