#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <string>

#include "flowreg/error.hpp"

namespace flowreg::io {

/// Writes through `emit` into a sibling temporary file and renames it over
/// `path`, so readers never observe a partial file.
inline void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& emit,
                             bool binary = false) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot open " + tmp.string() + " for writing");
    emit(out);
    out.flush();
    if (!out) throw Error(ErrorCode::InvalidArgument, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_text_atomically(const std::filesystem::path& path, const std::string& text) {
  write_atomically(path, [&](std::ostream& out) { out << text; });
}

}  // namespace flowreg::io
