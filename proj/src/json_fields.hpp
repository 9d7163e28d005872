#pragma once

#include <set>
#include <string>

#include "json.hpp"
#include "partmatch/errors.hpp"

namespace partmatch::detail {

// Reads optional fields from one JSON object and rejects anything it was not
// asked about.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& object, std::string section)
      : object_(object), section_(std::move(section)) {
    if (!object_.is_object()) throw ConfigError("section '" + section_ + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      target = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const nlohmann::json* section(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key " + where(it.key()));
    }
  }

  std::string where(const std::string& key) const {
    return section_.empty() ? "'" + key + "'" : "'" + section_ + "." + key + "'";
  }

 private:
  const nlohmann::json& object_;
  std::string section_;
  std::set<std::string> seen_;
};

}  // namespace partmatch::detail
