#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "onlinebev/error.hpp"

namespace obev {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out)
{
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace obev
