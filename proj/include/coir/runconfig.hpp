#pragma once

#include <string>

#include <json.hpp>

namespace coir {

inline constexpr const char* kVersion = "0.1.0";

// Parses a JSON config file; an empty or missing-at-"" path yields {}.
nlohmann::json load_config_file(const std::string& path);

// Resolution order: flags override file values override defaults. The
// defaults object enumerates every known key; file or flag keys outside it
// are an error listing the offenders (nothing is silently ignored).
nlohmann::json resolve_config(const nlohmann::json& defaults, const nlohmann::json& file_values,
                              const nlohmann::json& flag_values);

// FNV-1a over the canonical dump of the resolved config.
std::string config_hash(const nlohmann::json& resolved);

} // namespace coir
