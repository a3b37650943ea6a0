#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfbss {

/// File or configuration problem carrying path context in the message.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A sparsity/support configuration that cannot be satisfied.
class ConfigInfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ordered key=value record, the single text dialect shared by config files,
/// dataset headers and checkpoint headers. Keys keep insertion order so that
/// serialization is deterministic.
class KeyValueConfig {
 public:
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, std::int64_t v);
  void set_double(const std::string& key, double v);  // round-trip exact (max_digits10)

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key) const;
  std::int64_t get_int_or(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;

  const std::vector<std::string>& keys() const { return order_; }

  /// Single-line form: "k1=v1 k2=v2 ...". Values must not contain whitespace.
  std::string to_line() const;

  /// Parses whitespace-separated key=value tokens. '#' starts a comment that
  /// runs to end of line. Later duplicates overwrite earlier ones.
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

/// FNV-1a 64-bit digest, hex-encoded; used as the config fingerprint in
/// result records and artifact names.
std::string fnv1a_hex(const std::string& text);

/// Digest of a file's raw bytes; throws IoError when unreadable.
std::string fnv1a_hex_file(const std::filesystem::path& path);

}  // namespace cfbss
