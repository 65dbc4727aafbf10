#pragma once

#include <string>
#include <vector>

namespace ape {

// One entry per line, LF or CRLF terminated; a missing trailing newline is
// tolerated. Throws InputError when the file cannot be opened.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

}  // namespace ape
