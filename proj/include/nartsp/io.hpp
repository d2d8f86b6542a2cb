#pragma once

#include <string>
#include <string_view>

namespace nartsp {

std::string read_file(const std::string& path);

/// Writes via a temporary sibling and rename, so readers never observe a
/// partially written file.
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace nartsp
