// Acceptance runner: one PASS/FAIL line per criterion. Tolerances are fixed here.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "canonsys/airy.hpp"
#include "canonsys/canonical.hpp"
#include "canonsys/cli.hpp"
#include "canonsys/errors.hpp"
#include "canonsys/experiments.hpp"
#include "canonsys/rng.hpp"
#include "canonsys/sine.hpp"
#include "canonsys/stats.hpp"

using namespace canonsys;
namespace fs = std::filesystem;

namespace {

const double kPi = std::numbers::pi;
constexpr std::uint64_t kSeed = 20240601;

int failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string f(double x, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    return buf;
}

void verdict(int id, const std::string& name, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::printf("%s [%2d] %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
}

// Runs a criterion body; an exception is a FAIL carrying the message.
void criterion(int id, const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    try {
        auto [pass, detail] = body();
        verdict(id, name, pass, detail);
    } catch (const std::exception& e) {
        verdict(id, name, false, std::string("exception: ") + e.what());
    }
}

bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1])) return false;
    return true;
}

std::string list(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + f(v[i]);
    return s + "]";
}

CoefficientMatrix random_sampled(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> grid{0.0};
    for (std::size_t i = 1; i < n; ++i) grid.push_back(grid.back() + 0.2 + u(gen));
    for (double& t : grid) t /= grid.back();
    std::vector<Mat2> vals;
    for (std::size_t i = 0; i < n; ++i) {
        Mat2 a;
        a << u(gen) - 0.5, u(gen) - 0.5, u(gen) - 0.5, u(gen) - 0.5;
        vals.push_back(a * a.transpose() + 0.05 * Mat2::Identity());
    }
    return CoefficientMatrix::sampled(grid, vals);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// run() with its summary table kept off the acceptance output.
void quiet_run(const RunConfig& cfg) {
    std::ostringstream sink;
    auto* old = std::cout.rdbuf(sink.rdbuf());
    try {
        run(cfg);
    } catch (...) {
        std::cout.rdbuf(old);
        throw;
    }
    std::cout.rdbuf(old);
}

}  // namespace

int main() {
    herglotz_reset();
    Timer total;

    criterion(1, "beta=inf clock spectrum", [] {
        Timer t;
        HbmPath flat = simulate_hbm(kBetaInfinity, ComplexBrownianPath(1, kSineHorizon, 1.0 / 64.0), kSineHorizon);
        SineEigenOptions opt;
        opt.boundary = Vec2(1.0, 0.0);
        std::vector<double> ev = sine_eigenvalues(kBetaInfinity, flat, -1.0, 13.0, opt);
        SpectralMeasure mu =
            stieltjes_invert(sine_weyl_function(flat, Vec2(1.0, 0.0)), -1.0, 13.0, {1e-2, 1e-3, 1e-4});
        double secs = t.seconds();
        const std::vector<double> expect{0.0, 2.0 * kPi, 4.0 * kPi};
        double ev_err = ev.size() == 3 ? 0.0 : INFINITY;
        for (std::size_t i = 0; i < std::min<std::size_t>(3, ev.size()); ++i)
            ev_err = std::max(ev_err, std::abs(ev[i] - expect[i]));
        double w_err = mu.atoms.size() == 3 ? 0.0 : INFINITY;
        for (const auto& a : mu.atoms) w_err = std::max(w_err, std::abs(a.weight - 2.0));
        bool pass = ev_err <= 1e-4 && w_err <= 1e-3 && secs < 1.0;
        return std::make_pair(pass, "eigenvalue err " + f(ev_err) + " (tol 1e-4), weight err " + f(w_err) +
                                        " (tol 1e-3), " + f(secs, 3) + " s (limit 1)");
    });

    criterion(2, "beta=inf Airy fundamental solutions", [] {
        Timer t;
        AiryParams p(kBetaInfinity, 10.0);
        FundamentalPair pair = simulate_fundamental_direct(p, BrownianPath(1, 5.0, 1.0 / 64.0), 5.0, StepPolicy{});
        double worst = 0.0;
        for (std::size_t i = 0; i < pair.grid.size(); ++i) {
            FundamentalPoint e = beta_infinity_closed_form(p.E, pair.grid[i]);
            const FundamentalPoint& v = pair.values[i];
            auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
            worst = std::max({worst, rel(v.f, e.f), rel(v.fp, e.fp), rel(v.g, e.g), rel(v.gp, e.gp)});
        }
        double secs = t.seconds();
        return std::make_pair(worst <= 1e-4 && secs < 1.0 && pair.grid.back() == 5.0,
                              "max relative error " + f(worst) + " (tol 1e-4), " + f(secs, 3) + " s (limit 1)");
    });

    criterion(3, "symplectic and Wronskian suite", [] {
        Timer t;
        std::mt19937_64 gen(kSeed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double det_worst = 0.0;
        double wr_ratio_worst = 0.0;  // deviation / (5 dt)
        std::vector<double> ratios;
        const double dt = 1e-3;
        for (int k = 0; k < 50; ++k) {
            double beta = u(gen) < 0.2 ? kBetaInfinity : 0.5 + 7.5 * u(gen);
            double E = 4.0 + 36.0 * u(gen);
            std::uint64_t seed = gen();
            AiryParams p(beta, E);
            PolarState polar = simulate_polar(p, BrownianPath(seed, 1.0, 1.0 / 64.0), StepPolicy{});
            CoefficientMatrix sys = airy_system_timechanged(p, polar);
            for (cplx z : {cplx(0.0, 1.0), cplx(2.0, 0.5), cplx(-3.0, 0.0)})
                det_worst = std::max(det_worst, std::abs(transfer_matrix(sys, sys.b(), z).determinant() - 1.0));

            BrownianPath driver(derive_seed(seed, {7}), 2.0, 1.0 / 64.0);
            StepPolicy pol;
            pol.dt_max = dt;
            FundamentalPair a = simulate_fundamental_direct(p, driver, 2.0, pol);
            wr_ratio_worst = std::max(wr_ratio_worst, a.max_wronskian_deviation() / (5.0 * dt));
            if (!p.infinite_beta()) {
                pol.dt_max = dt / 2.0;
                FundamentalPair b = simulate_fundamental_direct(p, driver, 2.0, pol);
                ratios.push_back(a.max_wronskian_deviation() / b.max_wronskian_deviation());
            }
        }
        double ratio = median(ratios);
        double secs = t.seconds();
        bool pass = det_worst <= 1e-8 && wr_ratio_worst <= 1.0 && ratio >= 1.3 && ratio <= 3.0 && secs < 120.0;
        return std::make_pair(pass, "max |det T - 1| " + f(det_worst) + " (tol 1e-8), max Wronskian dev / (5 dt) " +
                                        f(wr_ratio_worst) + " (<= 1), median halving ratio " + f(ratio) +
                                        " (in [1.3, 3]) over " + std::to_string(ratios.size()) + " SDE configs, " +
                                        f(secs, 3) + " s (limit 120)");
    });

    criterion(4, "polar/direct pathwise equivalence", [] {
        Timer t;
        const double dt = 1e-4;
        double worst = 0.0;
        double worst_em = 0.0;  // plain Euler-Maruyama polar step, reported only
        for (std::uint64_t k = 0; k < 20; ++k) {
            AiryParams p(2.0, 25.0);
            BrownianPath driver(trial_seed(kSeed, "polar-direct", k), 1.0, 1.0 / 64.0);
            StepPolicy pol;
            pol.dt_max = dt;
            FundamentalPair tc = simulate_fundamental_timechanged(p, driver, pol);
            PolarState em = simulate_polar(p, driver, pol);
            pol.milstein = true;
            PolarState polar = simulate_polar(p, driver, pol);
            if (polar.grid.size() != tc.grid.size() || em.grid.size() != tc.grid.size())
                throw StructuralError("grids differ");
            for (std::size_t i = 0; i < polar.grid.size(); ++i) {
                worst = std::max(worst, std::abs(reconstruct(p, polar.grid[i], polar.values[i]).f - tc.values[i].f));
                worst_em = std::max(worst_em, std::abs(reconstruct(p, em.grid[i], em.values[i]).f - tc.values[i].f));
            }
        }
        double secs = t.seconds();
        double tol = 10.0 * std::sqrt(dt);
        return std::make_pair(worst <= tol && secs < 60.0, "max |f_polar - f_direct| " + f(worst) + " (tol " + f(tol) +
                                                               ", Milstein polar step; Euler step " + f(worst_em) +
                                                               "), " + f(secs, 3) + " s (limit 60)");
    });

    std::vector<CouplingLevel> couple;
    double couple_secs = 0.0;
    criterion(5, "coupling decay", [&] {
        Timer t;
        couple = coupling_experiment(2.0, {1e2, 1e3, 1e4}, 0.2, 100, kSeed);
        couple_secs = t.seconds();
        std::vector<double> med;
        for (const auto& l : couple) med.push_back(median(l.error_sup));
        bool pass = strictly_decreasing(med) && med[2] <= 0.5 * med[0] && couple_secs < 600.0;
        return std::make_pair(pass, "median error_sup at E = 1e2, 1e3, 1e4: " + list(med) + ", ratio " +
                                        f(med[2] / med[0]) + " (<= 0.5), " + f(couple_secs, 3) + " s (limit 600)");
    });

    criterion(6, "GBM comparison", [&] {
        if (couple.size() != 3) throw StructuralError("coupling ladder unavailable");
        std::vector<double> med, re;
        for (const auto& l : couple) {
            med.push_back(median(l.gbm_sup));
            re.push_back(median(l.re_companion));
        }
        return std::make_pair(strictly_decreasing(med), "median sup|2 rho_N + log G| " + list(med) +
                                                            "; real-part companion (reported) " + list(re));
    });

    ConvergenceReport conv;
    double conv_secs = 0.0;
    criterion(7, "vague convergence", [&] {
        Timer t;
        ConvergenceConfig cfg;
        cfg.beta = 2.0;
        cfg.trials = 100;
        cfg.master_seed = kSeed;
        conv = convergence_experiment(cfg);
        conv_secs = t.seconds();
        std::vector<double> med;
        for (const auto& l : conv.ladder) med.push_back(l.d_phi.p50);
        ConvergenceConfig flat = cfg;
        flat.beta = kBetaInfinity;
        std::vector<double> det;
        for (double E : flat.E_list) det.push_back(convergence_trial(flat, E, kSeed).d_phi);
        bool pass = strictly_decreasing(med) && strictly_decreasing(det) && conv_secs < 600.0;
        return std::make_pair(pass, "beta=2 median d_phi at E = 25, 100, 400: " + list(med) + "; beta=inf " +
                                        list(det) + ", " + f(conv_secs, 3) + " s (limit 600)");
    });

    criterion(8, "Weyl convergence", [&] {
        if (conv.ladder.size() != 3) throw StructuralError("convergence ladder unavailable");
        std::vector<double> med, tm;
        for (const auto& l : conv.ladder) {
            med.push_back(l.weyl_dist.p50);
            tm.push_back(l.tm_dist.p50);
        }
        return std::make_pair(strictly_decreasing(med) && conv_secs < 600.0,
                              "median |m_Airy(i) - m_sine(i)| " + list(med) + "; transfer-matrix distance (reported) " +
                                  list(tm));
    });

    criterion(9, "spectral weights", [] {
        Timer t;
        WeightsConfig cfg;
        cfg.beta = 2.0;
        cfg.E = 100.0;
        cfg.trials = 200;
        cfg.master_seed = kSeed;
        WeightsResult r = spectral_weights_experiment(cfg);
        std::vector<double> w = r.pooled_weights();
        std::vector<double> loc = r.pooled_locations();
        double n = static_cast<double>(w.size());
        double m = mean(w);
        double se = std::sqrt(variance(w) / n);
        double p = ks_test(w, [](double x) { return exponential_cdf(x, 2.0); }).p_value;
        double corr = pearson(w, loc);
        double corr_se = 1.0 / std::sqrt(n);
        double secs = t.seconds();
        bool pass = std::abs(m - 2.0) <= 2.0 * se && p > 0.01 && std::abs(corr) <= 2.0 * corr_se && secs < 900.0;
        return std::make_pair(pass, "mean " + f(m) + " +- " + f(se) + " (n " + std::to_string(w.size()) +
                                        ", failed trials " + std::to_string(r.failures) + "), KS p " + f(p) +
                                        " (> 0.01), corr " + f(corr) + " (|.| <= " + f(2.0 * corr_se) + "), " +
                                        f(secs, 3) + " s (limit 900)");
    });

    criterion(10, "tridiagonal oracle cross-check", [] {
        Timer t;
        const std::size_t N = 400;
        std::vector<std::vector<double>> de(3), sao(3);
        for (std::size_t i = 0; i < 100; ++i) {
            TridiagonalSample s = dumitriu_edelman_oracle(2.0, N, trial_seed(kSeed, "oracle", i));
            for (std::size_t k = 0; k < 3; ++k) de[k].push_back(-s.edge_rescaled[N - 1 - k]);
        }
        WeightsConfig cfg;
        cfg.beta = 2.0;
        cfg.trials = 100;
        cfg.master_seed = kSeed;
        cfg.shifted = false;
        cfg.lo = -6.0;
        cfg.hi = 14.0;
        WeightsResult r = spectral_weights_experiment(cfg);
        std::size_t short_trials = 0;
        for (const auto& tr : r.trials) {
            if (tr.failed || tr.atoms.size() < 3) {
                ++short_trials;
                continue;
            }
            for (std::size_t k = 0; k < 3; ++k) sao[k].push_back(tr.atoms[k].lambda);
        }
        double worst = 0.0;
        std::vector<double> dm, sm;
        for (std::size_t k = 0; k < 3; ++k) {
            dm.push_back(mean(de[k]));
            sm.push_back(mean(sao[k]));
            worst = std::max(worst, std::abs(dm[k] - sm[k]));
        }
        double secs = t.seconds();
        return std::make_pair(worst <= 0.2 && secs < 900.0,
                              "tridiagonal means " + list(dm) + ", operator means " + list(sm) + ", max gap " +
                                  f(worst) + " (tol 0.2), short trials " + std::to_string(short_trials) + ", " +
                                  f(secs, 3) + " s (limit 900)");
    });

    std::vector<AsymptoticsResult> asym;
    std::vector<double> asym_secs;
    for (double beta : {1.0, 2.0, 4.0}) {
        Timer t;
        AsymptoticsConfig cfg;
        cfg.beta = beta;
        cfg.trials = 500;
        cfg.master_seed = kSeed;
        try {
            asym.push_back(asymptotics_experiment(cfg));
        } catch (const std::exception& e) {
            std::printf("asymptotics at beta %g failed: %s\n", beta, e.what());
        }
        asym_secs.push_back(t.seconds());
    }

    criterion(11, "uniform phase", [&] {
        if (asym.size() != 3) throw StructuralError("asymptotics runs unavailable");
        TestReport k = circular_uniformity(asym[1].final_phase);
        return std::make_pair(k.p_value > 0.01 && asym_secs[1] < 300.0,
                              "Kuiper p " + f(k.p_value) + " (> 0.01) on " + std::to_string(asym[1].final_phase.size()) +
                                  " phases at t = 1000, " + f(asym_secs[1], 3) + " s (limit 300)");
    });

    criterion(12, "amplitude exponent", [&] {
        if (asym.size() != 3) throw StructuralError("asymptotics runs unavailable");
        bool pass = true;
        std::string detail;
        const double betas[] = {1.0, 2.0, 4.0};
        double secs = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<double> lt;
            for (double x : asym[i].times) lt.push_back(std::log(x));
            double slope = slope_fit(lt, asym[i].mean_log_amplitude).slope;
            double expect = 1.0 / (2.0 * betas[i]);
            pass = pass && std::abs(slope - expect) <= 0.05;
            detail += "beta " + f(betas[i]) + ": slope " + f(slope) + " vs " + f(expect) + "; ";
            secs += asym_secs[i];
        }
        pass = pass && secs < 600.0;
        return std::make_pair(pass, detail + "tol 0.05, " + f(secs, 3) + " s (limit 600)");
    });

    criterion(13, "resolvent relation", [] {
        Timer t;
        cplx z(0.0, 1.0);
        auto v = [](double s) { return CVec2(std::sin(3.0 * s), std::cos(s)); };
        CoefficientMatrix constant(0.0, 1.0, [](double) { return (0.5 * Mat2::Identity()).eval(); });
        CoefficientMatrix sampled = random_sampled(kSeed, 30);
        bool pass = true;
        std::string detail;
        for (const auto* sys : {&constant, &sampled}) {
            std::vector<double> res;
            for (std::size_t n : {2001, 4001, 8001})
                res.push_back(resolvent_residual(*sys, z, v, apply_resolvent(*sys, 0.0, z, v, n)));
            pass = pass && res[1] <= 1e-3 && res[2] < res[1];
            detail += (sys == &constant ? "constant " : "sampled ") + list(res) + "; ";
        }
        double secs = t.seconds();
        return std::make_pair(pass && secs < 60.0, detail + "refined residual tol 1e-3, " + f(secs, 3) + " s (limit 60)");
    });

    criterion(14, "Herglotz suite", [] {
        HbmPath h = simulate_hbm(2.0, ComplexBrownianPath(kSeed, kSineHorizon, 1.0 / 64.0), kSineHorizon);
        AiryParams p(2.0, 100.0);
        SaoShooter sh(2.0, NoiseSource{kSeed}, p.E + 12.0 / (2.0 * std::sqrt(p.E)));
        SaoShooter raw(2.0, NoiseSource{kSeed}, 14.0);
        double probe = std::min({herglotz_probe(sine_weyl_function(h)), herglotz_probe(airy_weyl_function(p, sh)),
                                 herglotz_probe(WeylFunction{[&raw](cplx z) { return weyl_sao(raw, z); }, "sao"})});
        HerglotzStats s = herglotz_stats();
        bool pass = s.violations == 0 && probe >= -1e-6 && s.evaluations > 0;
        return std::make_pair(pass, std::to_string(s.evaluations) + " recorded evaluations, " +
                                        std::to_string(s.violations) + " violations, worst Im m " + f(s.worst_im) +
                                        ", probe min " + f(probe) + " (>= -1e-6)");
    });

    criterion(15, "determinism", [] {
        Timer t;
        fs::path root = fs::temp_directory_path() / ("canonsys_acceptance_" + std::to_string(::getpid()));
        fs::remove_all(root);
        const std::vector<std::string> commands{"airy-sim", "sine-sim", "couple",      "converge",
                                                "spectrum", "weights",  "asymptotics", "oracle"};
        std::size_t identical = 0;
        std::string bad;
        for (const auto& cmd : commands) {
            RunConfig c;
            c.command = cmd;
            c.seed = kSeed;
            c.trials = 3;
            if (cmd == "couple" || cmd == "converge") c.E = {30.0, 60.0};
            if (cmd == "spectrum" || cmd == "weights") {
                c.E = {50.0};
                c.window = std::make_pair(-6.0, 6.0);
            }
            if (cmd == "asymptotics") c.horizon = 50.0;
            if (cmd == "oracle") c.N = 60;
            c.out = (root / (cmd + "_a")).string();
            quiet_run(c);
            c.out = (root / (cmd + "_b")).string();
            quiet_run(c);
            // replay from the manifest of the first run
            std::ifstream mf(root / (cmd + "_a") / "manifest.json");
            auto manifest = nlohmann::json::parse(mf);
            KeyValues kv;
            for (const auto& [k, v] : manifest["config"].items()) kv[k] = v.get<std::string>();
            kv["out"] = (root / (cmd + "_c")).string();
            quiet_run(config_from_map(kv));
            std::string a = slurp(root / (cmd + "_a") / "report.json");
            std::string b = slurp(root / (cmd + "_b") / "report.json");
            std::string r = slurp(root / (cmd + "_c") / "report.json");
            if (!a.empty() && hash_string(a) == hash_string(b) && hash_string(a) == hash_string(r) && a == b && a == r)
                ++identical;
            else
                bad += cmd + " ";
        }
        fs::remove_all(root);
        return std::make_pair(identical == commands.size(),
                              std::to_string(identical) + "/" + std::to_string(commands.size()) +
                                  " commands reproduce report.json byte-for-byte (rerun and manifest replay)" +
                                  (bad.empty() ? "" : "; differing: " + bad) + ", " + f(t.seconds(), 3) + " s");
    });

    std::printf("%d of 15 criteria failed; total %.1f s\n", failures, total.seconds());
    return failures == 0 ? 0 : 1;
}
