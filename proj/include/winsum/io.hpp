#pragma once

#include <string>
#include <string_view>

namespace winsum {

// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);
std::string read_file(const std::string& path);

}  // namespace winsum
