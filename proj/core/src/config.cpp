#include "lkreg/config.hpp"

#include <fstream>
#include <sstream>

namespace lkreg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: line " + std::to_string(lineno) +
                         " is not key=value: '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty())
      throw config_error("config: empty key on line " + std::to_string(lineno));
    kv[key] = val;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str());
}

std::vector<index_t> parse_extents(const std::string& text) {
  std::vector<index_t> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, 'x')) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(token, &pos);
      if (pos != token.size() || v <= 0) throw std::invalid_argument(token);
      out.push_back(v);
    } catch (const std::exception&) {
      throw config_error("bad extents '" + text + "', expected e.g. 160x192x224");
    }
  }
  if (out.empty()) throw config_error("empty extents");
  return out;
}

}  // namespace lkreg
