#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "canonsys/cli.hpp"
#include "canonsys/errors.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace canonsys;
namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* b = std::getenv("CANONSYS_BIN");
    return b ? b : "";
}

fs::path scratch() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / ("canonsys_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct Result {
    int code;
    std::string err;
};

Result invoke(const std::string& args) {
    fs::path err = scratch() / "stderr.txt";
    std::string cmd = "'" + binary() + "' " + args + " > /dev/null 2> '" + err.string() + "'";
    int status = std::system(cmd.c_str());
    std::ifstream f(err);
    std::stringstream ss;
    ss << f.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("key=value parsing") {
    std::istringstream in("# comment\ncommand = converge\n\nbeta=inf\nE=25, 100\nwindow=-1,2\ntrials=3\n");
    RunConfig c = config_from_map(parse_key_values(in));
    CHECK(c.command == "converge");
    CHECK(std::isinf(c.beta));
    CHECK(c.E == std::vector<double>{25.0, 100.0});
    CHECK(c.window->first == -1.0);
    CHECK(*c.trials == 3);
    CHECK(config_from_map(config_to_map(c)).E == c.E);
    CHECK(config_to_map(c) == config_to_map(config_from_map(config_to_map(c))));

    std::istringstream bad("beta 2\n");
    CHECK_THROWS_AS(parse_key_values(bad), DataError);
    CHECK_THROWS_AS(config_from_map({{"colour", "red"}}), ParameterError);
    CHECK_THROWS_AS(config_from_map({{"beta", "two"}}), ParameterError);
    CHECK_THROWS_AS(config_from_map({{"trials", "-4"}}), ParameterError);
    CHECK_THROWS_AS(config_from_map({{"window", "1"}}), ParameterError);
}

TEST_CASE("validation") {
    RunConfig c;
    c.command = "couple";
    CHECK_NOTHROW(validate(c));
    c.E = {0.5};
    CHECK_THROWS_AS(validate(c), ParameterError);
    c.E = {};
    c.trials = 0;
    CHECK_THROWS_AS(validate(c), ParameterError);
    c.trials.reset();
    c.command = "nope";
    CHECK_THROWS_AS(validate(c), ParameterError);
}

TEST_CASE("exit codes and diagnostics") {
    REQUIRE(!binary().empty());
    CHECK(invoke("--help").code == 0);
    fs::path out = scratch() / "bad";
    Result r = invoke("airy-sim --beta -1 --out '" + out.string() + "'");
    CHECK(r.code == 2);
    auto diag = nlohmann::json::parse(r.err.substr(0, r.err.find('\n')));
    CHECK(diag["exit"] == 2);
    CHECK(diag["kind"] == "ParameterError");
    CHECK(invoke("frobnicate").code == 2);
    CHECK(invoke("airy-sim --unknown-flag 1").code == 2);
    // A boundary value that has not settled by the short horizon is a numeric failure.
    Result n = invoke("sine-sim --beta 2.5 --horizon 4 --seed 3 --out '" + (scratch() / "n").string() + "'");
    CHECK(n.code == 3);
    CHECK(nlohmann::json::parse(n.err.substr(0, n.err.find('\n')))["kind"] == "ConvergenceError");
}

TEST_CASE("reports are byte-identical across runs and manifest replays") {
    fs::path a = scratch() / "a";
    fs::path b = scratch() / "b";
    fs::path c = scratch() / "c";
    std::string args = "converge --beta 2 --E 25,100 --trials 3 --seed 42";
    REQUIRE(invoke(args + " --out '" + a.string() + "'").code == 0);
    REQUIRE(invoke(args + " --out '" + b.string() + "'").code == 0);
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    CHECK(slurp(a / "converge.csv") == slurp(b / "converge.csv"));
    auto rep = nlohmann::json::parse(slurp(a / "report.json"));
    CHECK(rep["trials"] == 3);
    CHECK(rep["seed"] == 42);
    CHECK(rep["ladder"].size() == 2);
    for (const auto& l : rep["ladder"]) CHECK(l["d_phi"]["p25"] <= l["d_phi"]["p75"]);

    REQUIRE(invoke("--manifest '" + (a / "manifest.json").string() + "' --out '" + c.string() + "'").code == 0);
    CHECK(slurp(a / "report.json") == slurp(c / "report.json"));
}

TEST_CASE("config file with flag overrides") {
    fs::path cfg = scratch() / "run.cfg";
    fs::path out = scratch() / "cfg_out";
    {
        std::ofstream f(cfg);
        f << "command=oracle\nbeta=2\ntrials=4\nN=30\nseed=1\nout=" << out.string() << "\n";
    }
    REQUIRE(invoke("--config '" + cfg.string() + "' --trials 6").code == 0);
    auto rep = nlohmann::json::parse(slurp(out / "report.json"));
    CHECK(rep["trials"] == 6);
    CHECK(rep["N"] == 30);
    auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(man["config"]["trials"] == "6");
    CHECK(fs::exists(out / "oracle.csv"));
    CHECK(fs::exists(out / "summary.txt"));
}

TEST_CASE("every command runs at small size") {
    const std::vector<std::string> runs{
        "airy-sim --beta inf --E 10",
        "sine-sim --beta 2 --window -5,5",
        "couple --beta 2 --E 30 --trials 2",
        "spectrum --beta 4 --E 50 --window -6,6",
        "weights --beta 2 --E 50 --trials 2 --window -6,6",
        "asymptotics --beta 2 --trials 8 --horizon 60",
        "oracle --beta 1 --trials 3 --N 50",
    };
    int k = 0;
    for (const auto& r : runs) {
        fs::path out = scratch() / ("cmd" + std::to_string(k++));
        CAPTURE(r);
        CHECK(invoke(r + " --out '" + out.string() + "'").code == 0);
        auto rep = nlohmann::json::parse(slurp(out / "report.json"));
        CHECK(rep["herglotz"]["violations"] == 0);
        CHECK(fs::exists(out / "manifest.json"));
    }
}
