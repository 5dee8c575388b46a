#pragma once

#include <cstdio>
#include <fstream>
#include <string>

#include "dpr/errors.hpp"

namespace dpr {

// Locale-independent numeric formatting for CSV cells. %.12g keeps reruns
// byte-identical while staying readable.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) throw IoError("write failed: " + path);
}

}  // namespace dpr
