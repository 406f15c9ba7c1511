#pragma once

#include <map>
#include <string>
#include <vector>

#include "lkreg/common.hpp"

namespace lkreg {

// Flat key=value config text: one pair per line, '#' starts a comment.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

// "160x192x224" -> {160, 192, 224}
std::vector<index_t> parse_extents(const std::string& text);

}  // namespace lkreg
