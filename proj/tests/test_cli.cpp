#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* p = std::getenv("WLAB_CLI");
    REQUIRE(p != nullptr);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " > cli_stdout.log 2> cli_stderr.log";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("ap subcommand emits a valid estimate") {
    fs::remove_all("cli_out_ap");
    REQUIRE(run("ap --alpha 0.5 --dim 2 --p 2 --grid 128 --out cli_out_ap") == 0);
    const auto j = nlohmann::json::parse(slurp("cli_out_ap/ap.json"));
    REQUIRE(j["ap"]["value"].get<double>() >= 1.0);
    REQUIRE(j["ap"]["value"].get<double>() <= j["certified_upper_bound"].get<double>());
    REQUIRE(j.contains("config_hash"));
    REQUIRE(j.contains("version"));
}

TEST_CASE("counterexample subcommand reports threshold and verdicts") {
    fs::remove_all("cli_out_cex");
    REQUIRE(run("counterexample --n 3 --alpha 0.25 --p 10,12 --out cli_out_cex") == 0);
    const auto j = nlohmann::json::parse(slurp("cli_out_cex/counterexample.json"));
    REQUIRE(j["p_star"].get<double>() == Catch::Approx(11.0));
    REQUIRE(j["annulus_scans"][0]["verdict"] == "finite");
    REQUIRE(j["annulus_scans"][1]["verdict"] == "infinite");
    REQUIRE(fs::exists("cli_out_cex/annuli.svg"));
}

TEST_CASE("empty config file exits 2") {
    std::ofstream("cli_empty.json").close();
    REQUIRE(run("ap --config cli_empty.json --out cli_out_e") == 2);
}

TEST_CASE("unknown config key exits 2 and names the key") {
    {
        std::ofstream os("cli_bad.json");
        os << "{\"alpha\": 0.5, \"bogus_knob\": 3}\n";
    }
    REQUIRE(run("ap --config cli_bad.json --out cli_out_b") == 2);
    const std::string err = slurp("cli_stderr.log");
    REQUIRE(err.find("bogus_knob") != std::string::npos);
}

TEST_CASE("ladder subcommand is byte-identical across thread counts") {
    fs::remove_all("cli_out_t1");
    fs::remove_all("cli_out_t8");
    REQUIRE(run("ladder --grid 96 --seed 7 --threads 1 --out cli_out_t1") == 0);
    REQUIRE(run("ladder --grid 96 --seed 7 --threads 8 --out cli_out_t8") == 0);
    REQUIRE(slurp("cli_out_t1/ladder.json") == slurp("cli_out_t8/ladder.json"));
    REQUIRE(slurp("cli_out_t1/ladder_terms.csv") == slurp("cli_out_t8/ladder_terms.csv"));
}

TEST_CASE("solve subcommand accepts the canonical config schema") {
    {
        std::ofstream os("cli_solve.json");
        os << R"({"domain": [-1, 1], "mesh": {"m": 24}, "weight": {"kind": "power", "alpha": 0.5},
                 "Lambda": 1.0, "F": {"kind": "smooth"}, "p": 2,
                 "solver": {"tol": 1e-10, "maxit": 4000}})";
    }
    fs::remove_all("cli_out_solve");
    REQUIRE(run("solve --config cli_solve.json --out cli_out_solve") == 0);
    const auto j = nlohmann::json::parse(slurp("cli_out_solve/solve.json"));
    REQUIRE(j["energy_lhs"].get<double>() <= 1.05 * j["energy_rhs"].get<double>());
    REQUIRE(fs::exists("cli_out_solve/solution.csv"));
    REQUIRE(fs::exists("cli_out_solve/gradient.csv"));
}
