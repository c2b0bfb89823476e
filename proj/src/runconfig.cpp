#include "coir/runconfig.hpp"

#include <fstream>

#include "coir/errors.hpp"

namespace coir {

using nlohmann::json;

json load_config_file(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open config file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (content.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    try {
        return json::parse(content);
    } catch (const json::parse_error& e) {
        throw IngestionError(path + ": bad json: " + e.what());
    }
}

json resolve_config(const json& defaults, const json& file_values, const json& flag_values) {
    auto check_known = [&](const json& values, const char* source) {
        std::string unknown;
        for (const auto& [key, value] : values.items())
            if (!defaults.contains(key)) unknown += (unknown.empty() ? "" : ", ") + key;
        if (!unknown.empty())
            throw ContractError(std::string("unknown config keys from ") + source + ": " + unknown);
    };
    check_known(file_values, "file");
    check_known(flag_values, "flags");
    json resolved = defaults;
    for (const auto& [key, value] : file_values.items()) resolved[key] = value;
    for (const auto& [key, value] : flag_values.items()) resolved[key] = value;
    return resolved;
}

std::string config_hash(const json& resolved) {
    const std::string dump = resolved.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace coir
