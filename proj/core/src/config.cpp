#include "cfbss/config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

namespace cfbss {

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  if (key.empty() || key.find_first_of(" \t\n=#") != std::string::npos)
    throw std::invalid_argument("config key invalid: '" + key + "'");
  if (value.find_first_of(" \t\n#") != std::string::npos)
    throw std::invalid_argument("config value for '" + key + "' must not contain whitespace or '#'");
  if (values_.find(key) == values_.end()) order_.push_back(key);
  values_[key] = value;
}

void KeyValueConfig::set_int(const std::string& key, std::int64_t v) {
  set(key, std::to_string(v));
}

void KeyValueConfig::set_double(const std::string& key, double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  set(key, os.str());
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("config key missing: " + key);
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  const std::string& s = get(key);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("config key '" + key + "' is not an integer: " + s);
  return v;
}

std::int64_t KeyValueConfig::get_int_or(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const {
  const std::string& s = get(key);
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "' is not a number: " + s);
  }
}

double KeyValueConfig::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::string KeyValueConfig::to_line() const {
  std::string out;
  for (const auto& k : order_) {
    if (!out.empty()) out += ' ';
    out += k;
    out += '=';
    out += values_.at(k);
  }
  return out;
}

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string tok;
    while (tokens >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("config token is not key=value: '" + tok + "'");
      cfg.set(tok.substr(0, eq), tok.substr(eq + 1));
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string fnv1a_hex_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for digest: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a_hex(buf.str());
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

}  // namespace cfbss
