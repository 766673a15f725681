#pragma once

// Line-oriented `key = value` configuration with dotted sections:
//
//   # comment
//   search.scheme = build_up
//   experiment.seeds = 1, 2, 3

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace alsubset {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(std::string key, std::string value);
  bool has(std::string_view key) const;

  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<double> get_doubles(std::string_view key) const;
  std::vector<std::uint64_t> get_u64s(std::string_view key) const;
  std::vector<std::string> get_strings(std::string_view key) const;

  /// Keys never read by a getter; used to reject typos.
  std::vector<std::string> unused_keys() const;

  /// Sorted `key = value` lines; the input to the config hash.
  std::string canonical_text() const;
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }

 private:
  const std::string* find(std::string_view key) const;

  std::map<std::string, std::string, std::less<>> entries_;
  mutable std::set<std::string, std::less<>> used_;
};

/// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace alsubset
