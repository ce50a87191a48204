#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace canonsys {

inline const std::vector<std::string> kCommands{"airy-sim", "sine-sim", "couple",      "converge",
                                                "spectrum", "weights",  "asymptotics", "oracle"};

// Flat configuration. Unset optional fields take per-command defaults.
struct RunConfig {
    std::string command;
    double beta = 2.0;
    std::vector<double> E;
    double alpha = 0.2;
    std::optional<std::size_t> trials;
    std::uint64_t seed = 0;
    std::string out = "out";
    std::optional<double> dt_max;
    std::optional<double> phase_res;
    std::optional<double> horizon;
    std::optional<std::pair<double, double>> window;
    std::size_t N = 400;  // tridiagonal size for `oracle`
};

using KeyValues = std::map<std::string, std::string>;

// key=value lines; blank lines and '#' comments ignored. DataError on malformed lines.
KeyValues parse_key_values(std::istream& in);

// ParameterError on unknown keys or bad values.
RunConfig config_from_map(const KeyValues& kv);
// The same keys as strings, for the manifest; inverse of config_from_map.
KeyValues config_to_map(const RunConfig& cfg);

// Range checks; ParameterError on failure.
void validate(const RunConfig& cfg);

// Runs the command, writes manifest.json, report.json, CSVs and summary.txt
// into cfg.out, and returns the report.
nlohmann::json run(const RunConfig& cfg);

// Full front-end: flags, config file, manifest replay. Returns the exit status
// (0 success, 2 validation error, 3 numeric error).
int cli_main(int argc, char** argv);

}  // namespace canonsys
