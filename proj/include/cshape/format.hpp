#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace cshape {

/// Numbers in CSV and summaries: 12 significant digits, "nan"/"inf" spelled out.
inline std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace cshape
