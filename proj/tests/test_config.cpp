#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "coir/losses.hpp"
#include "coir/runconfig.hpp"

using namespace coir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const fs::path dir = fs::temp_directory_path() / "coir_config";
    fs::create_directories(dir);
    const fs::path p = dir / name;
    std::ofstream out(p);
    out << content;
    return p.string();
}

} // namespace

TEST_CASE("empty config file resolves to all defaults") {
    json defaults = {{"epochs", 20}, {"batch", 64}, {"loss", "surrogate"}};
    const std::string path = write_temp("empty.json", "  \n");
    json resolved = resolve_config(defaults, load_config_file(path), json::object());
    CHECK(resolved == defaults);
}

TEST_CASE("file values override defaults; flags override file values") {
    json defaults = {{"epochs", 20}, {"batch", 64}};
    json file = {{"epochs", 10}, {"batch", 32}};
    json flags = {{"epochs", 5}};
    json resolved = resolve_config(defaults, file, flags);
    CHECK(resolved["epochs"] == 5);  // flag wins
    CHECK(resolved["batch"] == 32);  // file wins over default
}

TEST_CASE("unknown keys are listed, not ignored") {
    json defaults = {{"epochs", 20}};
    json file = {{"epochz", 10}, {"batchh", 2}};
    CHECK_THROWS_WITH_AS((void)resolve_config(defaults, file, json::object()),
                         doctest::Contains("epochz"), ContractError);
    CHECK_THROWS_WITH_AS((void)resolve_config(defaults, json::object(), json{{"bogus", 1}}),
                         doctest::Contains("bogus"), ContractError);
}

TEST_CASE("config file parse errors carry the path") {
    const std::string path = write_temp("broken.json", "{nope");
    CHECK_THROWS_WITH_AS((void)load_config_file(path), doctest::Contains("broken.json"),
                         IngestionError);
    CHECK(load_config_file("") == json::object());
}

TEST_CASE("config hash is stable and sensitive") {
    json a = {{"epochs", 20}, {"seed", 1}};
    json b = {{"epochs", 20}, {"seed", 2}};
    CHECK(config_hash(a) == config_hash(a));
    CHECK(config_hash(a) != config_hash(b));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("the default surrogate-loss K set is 1,5,10,50") {
    LossConfig cfg;
    CHECK(cfg.k_set == std::vector<int>{1, 5, 10, 50});
    CHECK(cfg.tau1 == doctest::Approx(0.05));
    CHECK(cfg.tau2 == doctest::Approx(0.25));
    CHECK(cfg.temperature == doctest::Approx(0.07));
    CHECK(cfg.variant == LossVariant::Surrogate);
}
