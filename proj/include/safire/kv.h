#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace safire {

/// Validation failure tied to a config key or file.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// Flat `key = value` document. std::map keeps keys sorted, which makes the
/// serialized form canonical.
using KeyValues = std::map<std::string, std::string>;

/// `#` starts a comment; blank lines are ignored; duplicate keys are errors.
KeyValues parse_kv(std::string_view text, std::string_view source = "<config>");
std::string serialize_kv(const KeyValues& kv);

std::string format_double(double v);

/// Typed access that remembers which keys were read, so leftovers can be
/// rejected as unknown.
class KvReader {
 public:
  explicit KvReader(KeyValues kv) : kv_(std::move(kv)) {}

  std::string get_string(const std::string& key, const std::string& fallback);
  std::size_t get_size(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);

  /// Throws ConfigError naming the first key never read.
  void finish() const;

 private:
  const std::string* find(const std::string& key);

  KeyValues kv_;
  std::set<std::string> used_;
};

}  // namespace safire
