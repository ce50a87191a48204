#include "canonsys/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include "CLI11.hpp"
#include "canonsys/airy.hpp"
#include "canonsys/errors.hpp"
#include "canonsys/experiments.hpp"
#include "canonsys/rng.hpp"
#include "canonsys/sine.hpp"
#include "canonsys/stats.hpp"

#ifndef CANONSYS_VERSION
#define CANONSYS_VERSION "unknown"
#endif
#ifndef CANONSYS_GIT
#define CANONSYS_GIT "unknown"
#endif

namespace canonsys {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ParameterError(key + ": not a number: '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(x)) throw ParameterError(key + ": not a finite number: '" + v + "'");
    return x;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw ParameterError(key + ": not a nonnegative integer: '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ParameterError(key + ": integer out of range: '" + v + "'");
    }
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_real(key, trim(item)));
    if (out.empty()) throw ParameterError(key + ": empty list");
    return out;
}

std::string fmt(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    // shortest representation that reads back to the same double
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

json num(double x) { return std::isfinite(x) ? json(x) : json(fmt(x)); }

json quantiles(const std::vector<double>& v) {
    QuantileTriple q = quantile_triple(v);
    return {{"p25", num(q.p25)}, {"p50", num(q.p50)}, {"p75", num(q.p75)}};
}

StepPolicy policy_from(const RunConfig& cfg, StepPolicy p = {}) {
    if (cfg.dt_max) p.dt_max = *cfg.dt_max;
    if (cfg.phase_res) p.phase_resolution = *cfg.phase_res;
    return p;
}

double single_E(const RunConfig& cfg, double fallback) {
    if (cfg.E.empty()) return fallback;
    if (cfg.E.size() != 1) throw ParameterError(cfg.command + ": takes a single E");
    return cfg.E.front();
}

std::vector<double> ladder(const RunConfig& cfg, std::vector<double> fallback) {
    return cfg.E.empty() ? fallback : cfg.E;
}

std::size_t trials_or(const RunConfig& cfg, std::size_t fallback) { return cfg.trials.value_or(fallback); }

std::uint64_t command_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {hash_string(cfg.command)}); }

struct Output {
    std::filesystem::path dir;
    std::vector<std::string> summary;

    void write(const std::string& name, const std::string& text) const {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw DataError("cannot write " + (dir / name).string());
        f << text;
    }
    template <class F>
    void write_with(const std::string& name, F&& body) const {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw DataError("cannot write " + (dir / name).string());
        body(f);
    }
    void line(const std::string& key, const std::string& value) { summary.push_back(key + "\t" + value); }
};

json run_airy_sim(const RunConfig& cfg, Output& out) {
    AiryParams p(cfg.beta, single_E(cfg, 10.0));
    double horizon = cfg.horizon.value_or(5.0);
    if (!(horizon > 0.0)) throw ParameterError("airy-sim: horizon must be positive");
    StepPolicy pol = policy_from(cfg);
    std::uint64_t s = command_seed(cfg);
    BrownianPath driver(derive_seed(s, {1}), horizon, 1.0 / 64.0);
    FundamentalPair direct = simulate_fundamental_direct(p, driver, horizon, pol);
    BrownianPath driver_be(derive_seed(s, {2}), 1.0, 1.0 / 64.0);
    PolarState polar = simulate_polar(p, driver_be, pol);
    out.write_with("fundamental.csv", [&](std::ostream& os) { direct.write_csv(os); });
    out.write_with("polar.csv", [&](std::ostream& os) { polar.write_csv(os); });
    json r{{"E", p.E},
           {"horizon", horizon},
           {"direct", {{"steps", direct.grid.size() - 1},
                       {"blown_up", direct.blown_up},
                       {"wronskian_deviation", num(direct.max_wronskian_deviation())}}},
           {"polar", {{"steps", polar.grid.size() - 1},
                      {"blown_up", polar.blown_up},
                      {"tau", p.tau()},
                      {"wronskian_deviation", num(polar.max_wronskian_deviation())}}}};
    if (p.infinite_beta()) {
        double err = 0.0;
        for (std::size_t i = 0; i < direct.grid.size(); ++i) {
            FundamentalPoint c = beta_infinity_closed_form(p.E, direct.grid[i]);
            const FundamentalPoint& v = direct.values[i];
            err = std::max({err, std::abs(v.f - c.f) / std::max(1.0, std::abs(c.f)),
                            std::abs(v.g - c.g) / std::max(1.0, std::abs(c.g))});
        }
        r["closed_form_error"] = num(err);
        out.line("closed_form_error", fmt(err));
    }
    out.line("wronskian_deviation", fmt(direct.max_wronskian_deviation()));
    return r;
}

json run_sine_sim(const RunConfig& cfg, Output& out) {
    double horizon = cfg.horizon.value_or(kSineHorizon);
    auto [lo, hi] = cfg.window.value_or(std::make_pair(-20.0, 20.0));
    ComplexBrownianPath w(command_seed(cfg), horizon, 1.0 / 64.0);
    HbmPath h = simulate_hbm(cfg.beta, w, horizon, policy_from(cfg, sine_default_policy()));
    out.write_with("hbm.csv", [&](std::ostream& os) {
        os << "s,re,im\n" << std::hexfloat;
        for (std::size_t i = 0; i < h.grid.size(); ++i)
            os << h.grid[i] << ',' << h.values[i].real() << ',' << h.values[i].imag() << '\n';
    });
    SineWeyl m = sine_weyl(h, cplx(0.0, 1.0));
    json r{{"horizon", horizon},
           {"weyl_i", {num(m.m.value.real()), num(m.m.value.imag())}},
           {"weyl_infinite", m.m.infinite},
           {"weyl_stabilization", num(m.stabilization)}};
    if (cfg.beta > 2.0) {
        SineBoundary b = sine_boundary(cfg.beta, h);
        r["boundary"] = {num(b.v(0)), num(b.v(1))};
        r["boundary_stabilization"] = num(b.stabilization);
    } else {
        r["boundary"] = "limit point";
    }
    std::vector<double> ev = sine_eigenvalues(cfg.beta, h, lo, hi);
    json arr = json::array();
    for (double x : ev) arr.push_back(x);
    r["window"] = {lo, hi};
    r["eigenvalues"] = arr;
    out.line("eigenvalues", std::to_string(ev.size()));
    return r;
}

json run_couple(const RunConfig& cfg, Output& out) {
    std::vector<double> Es = ladder(cfg, {100.0, 1000.0, 10000.0});
    std::size_t n = trials_or(cfg, 100);
    std::vector<CouplingLevel> lv = coupling_experiment(cfg.beta, Es, cfg.alpha, n, cfg.seed, policy_from(cfg));
    json arr = json::array();
    for (const auto& l : lv) {
        arr.push_back({{"E", l.E},
                       {"error_sup", quantiles(l.error_sup)},
                       {"gbm_sup", quantiles(l.gbm_sup)},
                       {"re_companion", quantiles(l.re_companion)}});
        out.line("E=" + fmt(l.E), "median error_sup " + fmt(median(l.error_sup)) + ", median gbm " +
                                       fmt(median(l.gbm_sup)));
    }
    out.write_with("couple.csv", [&](std::ostream& os) {
        os << "E,trial,error_sup,gbm_sup,re_companion\n";
        for (const auto& l : lv)
            for (std::size_t i = 0; i < n; ++i)
                os << fmt(l.E) << ',' << i << ',' << fmt(l.error_sup[i]) << ',' << fmt(l.gbm_sup[i]) << ','
                   << fmt(l.re_companion[i]) << '\n';
    });
    return {{"alpha", cfg.alpha}, {"trials", n}, {"ladder", arr}};
}

json run_converge(const RunConfig& cfg, Output& out) {
    ConvergenceConfig cc;
    cc.beta = cfg.beta;
    cc.E_list = ladder(cfg, {25.0, 100.0, 400.0});
    cc.alpha = cfg.alpha;
    cc.trials = trials_or(cfg, 100);
    cc.master_seed = cfg.seed;
    cc.policy = policy_from(cfg);
    if (cfg.window) {
        cc.phi_lo = cfg.window->first;
        cc.phi_hi = cfg.window->second;
    }
    ConvergenceReport rep = convergence_experiment(cc);
    out.write_with("converge.csv", [&](std::ostream& os) {
        os << "E,trial,d_phi,tm_dist,weyl_dist\n";
        for (const auto& l : rep.ladder)
            for (std::size_t i = 0; i < l.trials.size(); ++i)
                os << fmt(l.E) << ',' << i << ',' << fmt(l.trials[i].d_phi) << ',' << fmt(l.trials[i].tm_dist) << ','
                   << fmt(l.trials[i].weyl_dist.front()) << '\n';
    });
    for (const auto& l : rep.ladder)
        out.line("E=" + fmt(l.E), "median d_phi " + fmt(l.d_phi.p50) + ", tm " + fmt(l.tm_dist.p50) + ", weyl " +
                                       fmt(l.weyl_dist.p50));
    return json::parse(rep.to_json());
}

json run_spectrum(const RunConfig& cfg, Output& out) {
    AiryParams p(cfg.beta, single_E(cfg, 100.0));
    auto [lo, hi] = cfg.window.value_or(std::make_pair(-12.0, 12.0));
    if (!(hi > lo)) throw ParameterError("spectrum: empty window");
    SaoShooter sh(cfg.beta, NoiseSource{command_seed(cfg)}, p.E + hi / (2.0 * std::sqrt(p.E)));
    SpectralMeasure mu = stieltjes_invert(airy_weyl_function(p, sh), lo, hi, {0.1, 0.02, 0.004},
                                          StieltjesOptions{0.05, 1e-6, 1e-6});
    out.write_with("atoms.csv", [&](std::ostream& os) {
        os << "lambda,weight\n";
        for (const auto& a : mu.atoms) os << fmt(a.lambda) << ',' << fmt(a.weight) << '\n';
    });
    out.line("atoms", std::to_string(mu.atoms.size()));
    return {{"E", p.E},
            {"window", {lo, hi}},
            {"atoms", json::parse(mu.to_json())},
            {"warnings", mu.warnings},
            {"shooting_horizon", sh.horizon()},
            {"shooting_stabilization", num(sh.stabilization())}};
}

json run_weights(const RunConfig& cfg, Output& out) {
    WeightsConfig wc;
    wc.beta = cfg.beta;
    wc.E = single_E(cfg, 100.0);
    wc.trials = trials_or(cfg, 200);
    wc.master_seed = cfg.seed;
    if (cfg.window) {
        wc.lo = cfg.window->first;
        wc.hi = cfg.window->second;
    }
    WeightsResult res = spectral_weights_experiment(wc);
    out.write_with("weights.csv", [&](std::ostream& os) { res.write_csv(os); });
    std::vector<double> w = res.pooled_weights();
    std::vector<double> loc = res.pooled_locations();
    json r{{"E", wc.E}, {"trials", wc.trials}, {"failures", res.failures}, {"atoms", w.size()}};
    if (w.size() >= 2) {
        double se = std::sqrt(variance(w) / static_cast<double>(w.size()));
        double expected = 2.0;
        double shape = std::isinf(cfg.beta) ? 0.0 : cfg.beta / 2.0;
        r["weight_mean"] = num(mean(w));
        r["weight_se"] = num(se);
        r["weight_expected_mean"] = expected;
        if (shape > 0.0 && w.size() >= 8)
            r["ks_p"] = num(ks_test(w, [&](double x) { return gamma_cdf(x, shape, 4.0 / cfg.beta); }).p_value);
        r["corr_weight_location"] = num(pearson(w, loc));
        r["corr_null_se"] = num(1.0 / std::sqrt(static_cast<double>(w.size())));
        out.line("weight_mean", fmt(mean(w)) + " +- " + fmt(se));
    }
    json errs = json::array();
    for (const auto& t : res.trials)
        if (t.failed) errs.push_back({{"trial", t.trial}, {"error", t.error}});
    r["failed_trials"] = errs;
    return r;
}

json run_asymptotics(const RunConfig& cfg, Output& out) {
    AsymptoticsConfig ac;
    ac.beta = cfg.beta;
    ac.trials = trials_or(cfg, 500);
    ac.master_seed = cfg.seed;
    ac.policy = policy_from(cfg, ac.policy);
    if (cfg.horizon) {
        if (!(*cfg.horizon > 1.0)) throw ParameterError("asymptotics: horizon must exceed 1");
        std::vector<double> t;
        for (double x : ac.times)
            if (x < *cfg.horizon) t.push_back(x);
        t.push_back(*cfg.horizon);
        ac.times = t;
    }
    AsymptoticsResult res = asymptotics_experiment(ac);
    std::vector<double> lt;
    for (double t : res.times) lt.push_back(std::log(t));
    json r{{"times", res.times}, {"blown_up", res.blown_up}, {"trials", ac.trials}};
    json amp = json::array();
    for (double a : res.mean_log_amplitude) amp.push_back(num(a));
    r["mean_log_amplitude"] = amp;
    if (res.times.size() >= 3) {
        SlopeFit f = slope_fit(lt, res.mean_log_amplitude);
        r["slope"] = num(f.slope);
        r["slope_stderr"] = num(f.stderr_slope);
        if (!std::isinf(cfg.beta)) r["slope_expected"] = 1.0 / (2.0 * cfg.beta);
        out.line("slope", fmt(f.slope));
    }
    if (res.final_phase.size() >= 8) {
        TestReport k = circular_uniformity(res.final_phase);
        r["kuiper_statistic"] = num(k.statistic);
        r["kuiper_p"] = num(k.p_value);
        out.line("kuiper_p", fmt(k.p_value));
    }
    out.write_with("phase.csv", [&](std::ostream& os) {
        os << "phase\n";
        for (double x : res.final_phase) os << fmt(x) << '\n';
    });
    return r;
}

json run_oracle(const RunConfig& cfg, Output& out) {
    if (std::isinf(cfg.beta)) throw ParameterError("oracle: beta must be finite");
    std::size_t n = trials_or(cfg, 100);
    std::vector<TridiagonalSample> samples(n);
    std::uint64_t s = cfg.seed;
    for (std::size_t i = 0; i < n; ++i) samples[i] = dumitriu_edelman_oracle(cfg.beta, cfg.N, trial_seed(s, "oracle", i));
    std::vector<double> top_edge, weights;
    std::vector<std::vector<double>> lambda(3);
    for (const auto& t : samples) {
        top_edge.push_back(t.edge_rescaled.back());
        for (std::size_t k = 0; k < 3 && k < cfg.N; ++k) lambda[k].push_back(-t.edge_rescaled[cfg.N - 1 - k]);
        for (std::size_t k = 0; k < 5 && k < cfg.N; ++k)
            weights.push_back(2.0 * static_cast<double>(cfg.N) * t.weights[cfg.N - 1 - k]);
    }
    out.write_with("oracle.csv", [&](std::ostream& os) {
        os << "trial,k,lambda,weight\n";
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < 5 && k < cfg.N; ++k)
                os << i << ',' << k << ',' << fmt(-samples[i].edge_rescaled[cfg.N - 1 - k]) << ','
                   << fmt(samples[i].weights[cfg.N - 1 - k]) << '\n';
    });
    json means = json::array();
    for (const auto& v : lambda) means.push_back(num(mean(v)));
    double shape = cfg.beta / 2.0;
    out.line("edge_mean", fmt(mean(top_edge)));
    json r{{"N", cfg.N}, {"trials", n}, {"largest_edge_mean", num(mean(top_edge))}, {"negated_edge_means", means}};
    if (weights.size() >= 8)
        r["edge_weight_ks_p"] = num(ks_test(weights, [&](double x) { return gamma_cdf(x, shape, 4.0 / cfg.beta); }).p_value);
    return r;
}

void write_json(const Output& out, const std::string& name, const json& j) { out.write(name, j.dump(2) + "\n"); }

}  // namespace

KeyValues parse_key_values(std::istream& in) {
    KeyValues kv;
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw DataError("config line " + std::to_string(lineno) + ": empty key");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

RunConfig config_from_map(const KeyValues& kv) {
    RunConfig c;
    for (const auto& [k, v] : kv) {
        if (k == "command") {
            c.command = v;
        } else if (k == "beta") {
            c.beta = (v == "inf") ? kBetaInfinity : parse_real(k, v);
        } else if (k == "E") {
            c.E = parse_list(k, v);
        } else if (k == "alpha") {
            c.alpha = parse_real(k, v);
        } else if (k == "trials") {
            c.trials = parse_unsigned(k, v);
        } else if (k == "seed") {
            c.seed = parse_unsigned(k, v);
        } else if (k == "out") {
            c.out = v;
        } else if (k == "dt_max") {
            c.dt_max = parse_real(k, v);
        } else if (k == "phase_res") {
            c.phase_res = parse_real(k, v);
        } else if (k == "horizon") {
            c.horizon = parse_real(k, v);
        } else if (k == "window") {
            std::vector<double> w = parse_list(k, v);
            if (w.size() != 2) throw ParameterError("window: expected lo,hi");
            c.window = std::make_pair(w[0], w[1]);
        } else if (k == "N") {
            c.N = parse_unsigned(k, v);
        } else {
            throw ParameterError("unknown configuration key '" + k + "'");
        }
    }
    return c;
}

KeyValues config_to_map(const RunConfig& c) {
    KeyValues kv;
    kv["command"] = c.command;
    kv["beta"] = fmt(c.beta);
    if (!c.E.empty()) {
        std::string s;
        for (std::size_t i = 0; i < c.E.size(); ++i) s += (i ? "," : "") + fmt(c.E[i]);
        kv["E"] = s;
    }
    kv["alpha"] = fmt(c.alpha);
    if (c.trials) kv["trials"] = std::to_string(*c.trials);
    kv["seed"] = std::to_string(c.seed);
    kv["out"] = c.out;
    if (c.dt_max) kv["dt_max"] = fmt(*c.dt_max);
    if (c.phase_res) kv["phase_res"] = fmt(*c.phase_res);
    if (c.horizon) kv["horizon"] = fmt(*c.horizon);
    if (c.window) kv["window"] = fmt(c.window->first) + "," + fmt(c.window->second);
    kv["N"] = std::to_string(c.N);
    return kv;
}

void validate(const RunConfig& c) {
    if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end())
        throw ParameterError("unknown command '" + c.command + "'");
    if (!(c.beta > 0.0)) throw ParameterError("beta must be positive");
    for (double e : c.E)
        if (!(e > 1.0)) throw ParameterError("E values must exceed 1");
    if (!(c.alpha > 0.0 && c.alpha < 0.5)) throw ParameterError("alpha must lie in (0, 1/2)");
    if (c.trials && *c.trials == 0) throw ParameterError("trials must be at least 1");
    if (c.dt_max && !(*c.dt_max > 0.0)) throw ParameterError("dt_max must be positive");
    if (c.phase_res && !(*c.phase_res > 0.0)) throw ParameterError("phase_res must be positive");
    if (c.horizon && !(*c.horizon > 0.0)) throw ParameterError("horizon must be positive");
    if (c.window && !(c.window->second > c.window->first)) throw ParameterError("window must satisfy lo < hi");
    if (c.N < 2) throw ParameterError("N must be at least 2");
    if (c.out.empty()) throw ParameterError("output directory must be given");
}

json run(const RunConfig& cfg) {
    validate(cfg);
    Output out{cfg.out, {}};
    std::filesystem::create_directories(out.dir);

    KeyValues kv = config_to_map(cfg);
    json manifest{{"command", cfg.command},
                  {"config", kv},
                  {"seed", cfg.seed},
                  {"version", CANONSYS_VERSION},
                  {"git", CANONSYS_GIT}};
    write_json(out, "manifest.json", manifest);

    herglotz_reset();
    json report;
    if (cfg.command == "airy-sim") report = run_airy_sim(cfg, out);
    else if (cfg.command == "sine-sim") report = run_sine_sim(cfg, out);
    else if (cfg.command == "couple") report = run_couple(cfg, out);
    else if (cfg.command == "converge") report = run_converge(cfg, out);
    else if (cfg.command == "spectrum") report = run_spectrum(cfg, out);
    else if (cfg.command == "weights") report = run_weights(cfg, out);
    else if (cfg.command == "asymptotics") report = run_asymptotics(cfg, out);
    else report = run_oracle(cfg, out);

    if (!report.contains("beta")) report["beta"] = num(cfg.beta);
    if (!report.contains("seed")) report["seed"] = cfg.seed;
    HerglotzStats hs = herglotz_stats();
    report["herglotz"] = {{"evaluations", hs.evaluations}, {"violations", hs.violations}, {"worst_im", num(hs.worst_im)}};
    write_json(out, "report.json", report);

    std::string table = "command\t" + cfg.command + "\n";
    for (const auto& l : out.summary) table += l + "\n";
    out.write("summary.txt", table);
    std::cout << table;
    return report;
}

namespace {

void diagnostic(const std::string& kind, const std::string& message, int code) {
    json d{{"level", "error"}, {"kind", kind}, {"message", message}, {"exit", code}};
    std::cerr << d.dump() << std::endl;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Canonical systems: stochastic Airy and sine experiments"};
    std::string command, config_file, manifest_file;
    std::map<std::string, std::string> flags;
    const std::vector<std::pair<std::string, std::string>> flag_keys{
        {"--beta", "beta"},       {"--E", "E"},       {"--alpha", "alpha"},   {"--trials", "trials"},
        {"--seed", "seed"},       {"--out", "out"},   {"--dt-max", "dt_max"}, {"--phase-res", "phase_res"},
        {"--horizon", "horizon"}, {"--window", "window"}, {"--N", "N"}};
    app.add_option("command", command, "airy-sim | sine-sim | couple | converge | spectrum | weights | asymptotics | oracle");
    app.add_option("--config", config_file, "key=value configuration file");
    app.add_option("--manifest", manifest_file, "replay the configuration recorded in a manifest.json");
    for (const auto& [flag, key] : flag_keys) app.add_option(flag, flags[key], "override of '" + key + "'");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        diagnostic("ParseError", e.what(), 2);
        return 2;
    }

    try {
        KeyValues kv;
        if (!manifest_file.empty()) {
            std::ifstream f(manifest_file);
            if (!f) throw DataError("cannot read manifest " + manifest_file);
            json m;
            try {
                m = json::parse(f);
            } catch (const json::exception& e) {
                throw DataError(std::string("manifest is not valid JSON: ") + e.what());
            }
            if (!m.contains("config") || !m["config"].is_object()) throw DataError("manifest has no config object");
            for (const auto& [k, v] : m["config"].items()) kv[k] = v.get<std::string>();
        }
        if (!config_file.empty()) {
            std::ifstream f(config_file);
            if (!f) throw DataError("cannot read config " + config_file);
            for (const auto& [k, v] : parse_key_values(f)) kv[k] = v;
        }
        if (!command.empty()) kv["command"] = command;
        for (const auto& [flag, key] : flag_keys)
            if (app.count(flag) > 0) kv[key] = flags[key];
        RunConfig cfg = config_from_map(kv);
        if (cfg.command.empty()) throw ParameterError("no command given");
        run(cfg);
        return 0;
    } catch (const ParameterError& e) {
        diagnostic("ParameterError", e.what(), 2);
        return 2;
    } catch (const DataError& e) {
        diagnostic("DataError", e.what(), 2);
        return 2;
    } catch (const DomainError& e) {
        diagnostic("DomainError", e.what(), 2);
        return 2;
    } catch (const ClassificationError& e) {
        diagnostic("ClassificationError", e.what(), 2);
        return 2;
    } catch (const ConvergenceError& e) {
        diagnostic("ConvergenceError", e.what(), 3);
        return 3;
    } catch (const NumericError& e) {
        diagnostic("NumericError", e.what(), 3);
        return 3;
    } catch (const std::exception& e) {
        diagnostic("InternalError", e.what(), 3);
        return 3;
    }
}

}  // namespace canonsys
