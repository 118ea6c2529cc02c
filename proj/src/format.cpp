#include "losse/format.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>
#include <system_error>

#include "losse/errors.hpp"

namespace losse {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int digits) {
  if (!std::isfinite(v)) return fmt_double(v);
  char buf[128];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  if (text == "nan" || text == "NaN" || text.empty()) return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ValueError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace losse
