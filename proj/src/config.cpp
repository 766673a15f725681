#include "alsubset/config.hpp"

#include <fstream>
#include <sstream>

#include "alsubset/common.hpp"
#include "alsubset/text_util.hpp"

namespace alsubset {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig config;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    auto line = text.substr(start, end == std::string_view::npos ? end : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = detail::trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    if (config.has(key)) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" +
                        std::string(key) + "'");
    }
    config.set(std::string(key), std::string(value));
  }
  return config;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot read config file " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

void KeyValueConfig::set(std::string key, std::string value) {
  entries_.insert_or_assign(std::move(key), std::move(value));
}

bool KeyValueConfig::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string* KeyValueConfig::find(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    return nullptr;
  }
  used_.insert(std::string(key));
  return &it->second;
}

namespace {

template <typename T>
T parse_value(std::string_view key, const std::string& value) {
  try {
    return detail::parse_number<T>(value);
  } catch (const std::invalid_argument&) {
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + value + "'");
  }
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  for (auto& field : detail::split_csv_line(value)) {
    if (!field.empty()) {
      out.push_back(std::move(field));
    }
  }
  return out;
}

}  // namespace

std::string KeyValueConfig::get_string(std::string_view key, std::string_view fallback) const {
  const auto* v = find(key);
  return v ? *v : std::string(fallback);
}

double KeyValueConfig::get_double(std::string_view key, double fallback) const {
  const auto* v = find(key);
  return v ? parse_value<double>(key, *v) : fallback;
}

std::int64_t KeyValueConfig::get_int(std::string_view key, std::int64_t fallback) const {
  const auto* v = find(key);
  return v ? parse_value<std::int64_t>(key, *v) : fallback;
}

std::size_t KeyValueConfig::get_size(std::string_view key, std::size_t fallback) const {
  const auto* v = find(key);
  return v ? parse_value<std::size_t>(key, *v) : fallback;
}

std::uint64_t KeyValueConfig::get_u64(std::string_view key, std::uint64_t fallback) const {
  const auto* v = find(key);
  return v ? parse_value<std::uint64_t>(key, *v) : fallback;
}

bool KeyValueConfig::get_bool(std::string_view key, bool fallback) const {
  const auto* v = find(key);
  if (!v) {
    return fallback;
  }
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
    return true;
  }
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
    return false;
  }
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + *v + "'");
}

std::vector<double> KeyValueConfig::get_doubles(std::string_view key) const {
  std::vector<double> out;
  if (const auto* v = find(key)) {
    for (const auto& field : split_list(*v)) {
      out.push_back(parse_value<double>(key, field));
    }
  }
  return out;
}

std::vector<std::uint64_t> KeyValueConfig::get_u64s(std::string_view key) const {
  std::vector<std::uint64_t> out;
  if (const auto* v = find(key)) {
    for (const auto& field : split_list(*v)) {
      out.push_back(parse_value<std::uint64_t>(key, field));
    }
  }
  return out;
}

std::vector<std::string> KeyValueConfig::get_strings(std::string_view key) const {
  const auto* v = find(key);
  return v ? split_list(*v) : std::vector<std::string>{};
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : entries_) {
    if (!used_.contains(key)) {
      out.push_back(key);
    }
  }
  return out;
}

std::string KeyValueConfig::canonical_text() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  }
  return out;
}

}  // namespace alsubset
