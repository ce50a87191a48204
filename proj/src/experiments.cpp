#include "canonsys/experiments.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>

#include "canonsys/errors.hpp"
#include "canonsys/parallel.hpp"
#include "canonsys/rng.hpp"
#include "canonsys/stats.hpp"
#include "json.hpp"

namespace canonsys {

double CouplingGrid::interval_variance(std::size_t j) const {
    if (j < 1 || j > N) throw ParameterError("interval_variance: index out of range");
    return upsilon[j] - upsilon[j - 1];
}

CouplingGrid build_grid(double E, double alpha) {
    if (!(E > 1.0) || !std::isfinite(E)) throw ParameterError("build_grid: E must exceed 1");
    if (!(alpha > 0.0 && alpha < 0.5)) throw ParameterError("build_grid: alpha must lie in (0, 1/2)");
    CouplingGrid g;
    g.E = E;
    g.alpha = alpha;
    g.p = 2.0 * alpha;
    const double x = std::pow(E, -g.p);
    g.sigma_sq = std::log1p(x);
    g.N = static_cast<std::size_t>(std::ceil(std::log(E) / (2.0 * g.sigma_sq)));
    if (g.N < 1) g.N = 1;
    g.remaining.resize(g.N + 1);
    g.upsilon.resize(g.N + 1);
    g.remaining[0] = 1.0;
    g.upsilon[0] = 0.0;
    for (std::size_t j = 1; j < g.N; ++j) {
        g.remaining[j] = g.remaining[j - 1] / (1.0 + x);
        g.upsilon[j] = static_cast<double>(j) * g.sigma_sq;
    }
    g.remaining[g.N] = 1.0 / std::sqrt(E);
    g.upsilon[g.N] = 0.5 * std::log(E);
    g.ct.resize(g.N + 1);
    for (std::size_t j = 0; j <= g.N; ++j) g.ct[j] = 1.0 - g.remaining[j];
    for (std::size_t j = 1; j <= g.N; ++j)
        if (!(g.ct[j] > g.ct[j - 1])) throw StructuralError("build_grid: knots not increasing");
    if (static_cast<double>(g.N) > 1.0 + std::pow(E, g.p) * std::log(E) / (2.0 - x) + 1e-9)
        throw StructuralError("build_grid: knot count above its bound");
    return g;
}

double deterministic_phase(const AiryParams& p, double t) {
    double u = 1.0 - p.c() * t;
    return std::numbers::pi / 2.0 - (2.0 / 3.0) * std::pow(p.E, 1.5) * (1.0 - u * u * u);
}

Mat2 sigma_matrix(double E, const CouplingGrid& grid, std::size_t j) {
    if (j < 1 || j >= grid.N) throw ParameterError("sigma_matrix: index must lie in [1, N-1]");
    // With x = (8/3) E^{3/2} (1 - e^{-3 v}), 4 theta = 2 pi - x and dv/dx = 1/(8 E^{3/2} e^{-3 v}).
    const double a = (8.0 / 3.0) * std::pow(E, 1.5);
    auto x_of = [&](double v) { return -a * std::expm1(-3.0 * v); };
    auto dv_dx = [&](double x) { return 1.0 / (3.0 * (a - x)); };
    const double x0 = x_of(grid.upsilon[j - 1]);
    const double x1 = x_of(grid.upsilon[j]);
    auto panels = static_cast<std::size_t>(std::ceil((x1 - x0) / 1.0)) + 1;
    const double w = (x1 - x0) / static_cast<double>(panels);
    double cs = 0.0;
    double sn = 0.0;
    using gl = boost::math::quadrature::gauss<double, 10>;
    for (std::size_t k = 0; k < panels; ++k) {
        double lo = x0 + w * static_cast<double>(k);
        double hi = (k + 1 == panels) ? x1 : lo + w;
        cs += gl::integrate([&](double x) { return std::cos(x) * dv_dx(x); }, lo, hi);
        sn += gl::integrate([&](double x) { return std::sin(x) * dv_dx(x); }, lo, hi);
    }
    if (!std::isfinite(cs) || !std::isfinite(sn)) throw NumericError("sigma_matrix: quadrature failed");
    const double s2 = grid.interval_variance(j);
    // cos 4 theta = cos x, sin 4 theta = -sin x.
    Mat2 m;
    m << s2 + cs, sn, sn, s2 - cs;
    return m;
}

const std::vector<Mat2>& sigma_matrices(const CouplingGrid& grid) {
    static std::mutex mu;
    static std::map<std::pair<std::uint64_t, std::uint64_t>, std::vector<Mat2>> cache;
    auto key = std::make_pair(double_bits(grid.E), double_bits(grid.alpha));
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    std::vector<Mat2> out(grid.N, Mat2::Zero());
    for (std::size_t j = 1; j < grid.N; ++j) out[j] = sigma_matrix(grid.E, grid, j);
    std::lock_guard<std::mutex> lock(mu);
    return cache.emplace(key, std::move(out)).first->second;
}

namespace {

struct Whitening {
    Mat2 m;
    double deviation = 0.0;
    bool fallback = false;
};

// sigma Sigma^{-1/2} through the closed 2x2 square root.
Whitening whitening(const Mat2& sigma_mat, double s2) {
    Whitening out;
    double det = sigma_mat.determinant();
    if (!(det >= 1e-3 * s2 * s2)) {
        out.m = Mat2::Identity();
        out.fallback = true;
        return out;
    }
    double sq = std::sqrt(det);
    Mat2 root = (sigma_mat + sq * Mat2::Identity()) / std::sqrt(sigma_mat.trace() + 2.0 * sq);
    out.m = std::sqrt(s2) * root.inverse();
    Eigen::SelfAdjointEigenSolver<Mat2> es(out.m - Mat2::Identity());
    out.deviation = es.eigenvalues().cwiseAbs().maxCoeff();
    return out;
}

std::uint64_t key_of(const char* s) { return hash_string(s); }

}  // namespace

CouplingResult construct_coupled_W(const AiryParams& p, std::uint64_t seed, const CouplingGrid& grid,
                                   const CouplingOptions& opts) {
    if (std::abs(grid.E - p.E) > 1e-12 * p.E) throw ParameterError("construct_coupled_W: grid built for another E");
    if (opts.snapshots_per_interval < 1) throw ParameterError("construct_coupled_W: need at least one snapshot");
    const double c = p.c();
    const double tau = p.tau();
    const std::vector<Mat2>& sig = sigma_matrices(grid);

    DyadicWalker walker(seed, 1.0 / 64.0, 0.0);
    PolarPoint x = polar_initial();
    PolarState polar;
    if (opts.store_polar) {
        polar.grid.push_back(0.0);
        polar.values.push_back(x);
    }
    std::vector<CouplingSnapshot> snaps;
    snaps.push_back({0.0, cplx(0.0, 0.0), x});
    std::vector<cplx> increments;
    std::vector<double> deviation;
    std::size_t fallbacks = 0;
    std::size_t steps = 0;
    bool blown = false;
    cplx integral(0.0, 0.0);
    const std::size_t m = opts.snapshots_per_interval;

    for (std::size_t j = 1; j <= grid.N; ++j) {
        double t_j = std::min(grid.time(c, j), tau);
        double xi_start = x.xi_n;
        double theta_start = deterministic_phase(p, walker.time());
        std::vector<double> targets;
        for (std::size_t k = 1; k < m; ++k) {
            double v = grid.upsilon[j - 1] + (grid.upsilon[j] - grid.upsilon[j - 1]) * static_cast<double>(k) / m;
            targets.push_back(-std::expm1(-v) / c);
        }
        std::size_t next = 0;
        cplx b_theta(0.0, 0.0);
        auto obs = [&](double t0, const PolarPoint& x0, double, double db, double t1, const PolarPoint& x1) {
            double amp = std::sqrt(2.0 * c / (1.0 - c * t0)) * db;
            integral += std::polar(amp, -2.0 * x0.xi_n);
            b_theta += std::polar(amp, -2.0 * deterministic_phase(p, t0));
            if (opts.store_polar) {
                polar.grid.push_back(t1);
                polar.values.push_back(x1);
            }
            if (next < targets.size() && t1 >= targets[next]) {
                snaps.push_back({t1, integral, x1});
                while (next < targets.size() && t1 >= targets[next]) ++next;
            }
            return true;
        };
        SdeOutcome o = simulate_polar_stream(p, walker, t_j, x, opts.policy, obs);
        steps += o.steps;
        if (o.blown_up) {
            blown = true;
            break;
        }
        if (snaps.back().t != t_j) snaps.push_back({t_j, integral, x});
        if (j < grid.N) {
            Whitening wh = whitening(sig[j], grid.interval_variance(j));
            if (wh.fallback) ++fallbacks;
            deviation.push_back(wh.deviation);
            Vec2 v = wh.m * Vec2(b_theta.real(), b_theta.imag());
            increments.push_back(cplx(v(0), v(1)) * std::polar(1.0, -2.0 * (xi_start - theta_start)));
        }
    }
    if (blown) throw NumericError("construct_coupled_W: polar coordinates blew up");

    FundamentalPair extension;
    if (opts.extend_to && *opts.extend_to > walker.time()) {
        extension = continue_timechanged(p, walker, *opts.extend_to, reconstruct(p, walker.time(), x), opts.policy);
        if (extension.blown_up) throw NumericError("construct_coupled_W: extension blew up");
    }

    std::vector<double> knots(grid.upsilon.begin(), grid.upsilon.begin() + static_cast<std::ptrdiff_t>(grid.N));
    std::vector<std::uint64_t> bridge_seeds;
    for (std::size_t j = 1; j < grid.N; ++j) bridge_seeds.push_back(derive_seed(seed, {key_of("bridge"), j}));
    StitchedComplexPath W(increments, knots, bridge_seeds, derive_seed(seed, {key_of("tail")}));

    // One sampling pass over the union of snapshot times and the log-time grid.
    std::vector<double> snap_v;
    for (const auto& s : snaps) snap_v.push_back(-std::log1p(-c * s.t));
    std::vector<double> hbm_grid;
    auto n_hbm = static_cast<std::size_t>(std::llround(opts.hbm_horizon / opts.hbm_step));
    for (std::size_t k = 0; k <= n_hbm; ++k) hbm_grid.push_back(opts.hbm_step * static_cast<double>(k));
    std::vector<double> all(snap_v);
    all.insert(all.end(), hbm_grid.begin(), hbm_grid.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::vector<cplx> vals = W.sample(all);
    auto lookup = [&](double v) { return vals[static_cast<std::size_t>(std::lower_bound(all.begin(), all.end(), v) - all.begin())]; };

    std::vector<cplx> w_snap;
    double err = 0.0;
    const double limit = 1.0 - std::pow(p.E, -0.5 + grid.alpha);
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        cplx w = lookup(snap_v[i]);
        w_snap.push_back(w);
        if (c * snaps[i].t <= limit + 1e-12) err = std::max(err, std::abs(snaps[i].integral - w));
    }
    std::vector<cplx> w_hbm;
    for (double v : hbm_grid) w_hbm.push_back(lookup(v));

    HbmPath hbm = simulate_hbm(p.beta, std::move(hbm_grid), std::move(w_hbm));
    return CouplingResult{.params = p,
                          .grid = grid,
                          .W = std::move(W),
                          .error_sup = err,
                          .whitening_deviation = std::move(deviation),
                          .fallbacks = fallbacks,
                          .snapshots = std::move(snaps),
                          .w_at_snapshots = std::move(w_snap),
                          .hbm = std::move(hbm),
                          .polar = std::move(polar),
                          .extension = std::move(extension),
                          .polar_steps = steps,
                          .blown_up = false};
}

GbmStatistics gbm_comparison(const CouplingResult& cr) {
    const AiryParams& p = cr.params;
    const double c = p.c();
    const double limit = 1.0 - std::pow(p.E, -0.5 + cr.grid.alpha);
    const double noise = p.noise();
    const double drift = p.infinite_beta() ? 0.0 : 2.0 / p.beta;
    GbmStatistics g;
    for (std::size_t i = 0; i < cr.snapshots.size(); ++i) {
        const CouplingSnapshot& s = cr.snapshots[i];
        if (c * s.t > limit + 1e-12) continue;
        double v = -std::log1p(-c * s.t);
        double stat = 2.0 * s.polar.rho_n + noise * cr.w_at_snapshots[i].imag() - drift * v;
        g.sup = std::max(g.sup, std::abs(stat));
        double re = -std::exp(-(s.polar.rho_n - s.polar.rho_d)) * std::cos(s.polar.xi_n - s.polar.xi_d);
        g.re_companion = std::max(g.re_companion, std::abs(re - cr.hbm.at(v).real()));
    }
    return g;
}

CoupledSystems coupled_systems(const CouplingResult& cr) {
    if (cr.polar.grid.empty()) throw ParameterError("coupled_systems: coupling ran without stored polar path");
    const AiryParams& p = cr.params;
    std::vector<double> grid = cr.polar.grid;
    std::vector<Mat2> vals;
    vals.reserve(grid.size() + cr.extension.grid.size());
    for (const auto& x : cr.polar.values) vals.push_back(airy_matrix_polar(p, x));
    for (std::size_t i = 1; i < cr.extension.grid.size(); ++i) {
        double t = cr.extension.grid[i];
        grid.push_back(t);
        vals.push_back(time_change(p, t).ds_dt * airy_matrix(p.E, cr.extension.values[i].f, cr.extension.values[i].g));
    }
    CoefficientMatrix sine = sine_system_clock(cr.hbm, p.c(), grid);
    return {CoefficientMatrix::sampled(std::move(grid), std::move(vals)), std::move(sine)};
}

QuantileTriple quantile_triple(const std::vector<double>& v) {
    return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& command, std::size_t trial) {
    return derive_seed(master_seed, {hash_string(command), static_cast<std::uint64_t>(trial)});
}

ConvergenceTrial convergence_trial(const ConvergenceConfig& cfg, double E, std::uint64_t seed) {
    AiryParams p(cfg.beta, E);
    CouplingGrid grid = build_grid(E, cfg.alpha);
    CouplingOptions opts;
    opts.policy = cfg.policy;
    opts.store_polar = true;
    double t_need = cfg.phi_hi;
    for (double t : cfg.tm_times) t_need = std::max(t_need, t);
    if (t_need > p.tau()) opts.extend_to = t_need;
    std::uint64_t s = derive_seed(seed, {double_bits(E)});
    CouplingResult cr = construct_coupled_W(p, s, grid, opts);
    CoupledSystems sys = coupled_systems(cr);

    ConvergenceTrial out;
    const double r = 1.0 / std::sqrt(2.0);
    for (const CVec2& dir : {CVec2(1.0, 0.0), CVec2(0.0, 1.0), CVec2(r, r)}) {
        TestFunction phi = TestFunction::hat(cfg.phi_lo, cfg.phi_hi, dir);
        out.d_phi = std::max(out.d_phi, d_phi(sys.airy, sys.sine, phi));
    }
    std::vector<double> times;
    for (double t : cfg.tm_times)
        if (t <= sys.airy.b()) times.push_back(t);
    std::sort(times.begin(), times.end());
    for (cplx z : cfg.tm_z) {
        std::vector<CMat2> a = transfer_path(sys.airy, times, z);
        std::vector<CMat2> b = transfer_path(sys.sine, times, z);
        for (std::size_t i = 0; i < times.size(); ++i) out.tm_dist = std::max(out.tm_dist, (a[i] - b[i]).norm());
    }
    double z_max = 1.0;
    for (cplx z : cfg.weyl_probes) z_max = std::max(z_max, std::abs(z.real()) + 1.0);
    EmbeddedAiryWeyl m_airy(p, cr.polar, NoiseSource{derive_seed(s, {key_of("airy-tail")})}, z_max);
    WeylFunction m_sine = sine_weyl_function(cr.hbm);
    for (cplx z : cfg.weyl_probes) {
        ExtComplex a = m_airy(z);
        ExtComplex b = m_sine(z);
        out.weyl_dist.push_back((a.infinite || b.infinite) ? INFINITY : std::abs(a.value - b.value));
    }
    return out;
}

ConvergenceReport convergence_experiment(const ConvergenceConfig& cfg) {
    if (cfg.trials == 0) throw ParameterError("convergence_experiment: trials must be positive");
    if (cfg.E_list.empty()) throw ParameterError("convergence_experiment: empty E ladder");
    if (cfg.weyl_probes.empty()) throw ParameterError("convergence_experiment: need a Weyl probe");
    const bool lc = cfg.beta > 2.0;
    if (!(cfg.phi_lo >= 0.0 && cfg.phi_hi > cfg.phi_lo && (cfg.phi_hi < 1.0 || (lc && cfg.phi_hi <= 1.0))))
        throw ParameterError("convergence_experiment: test function support outside the admissible interval");
    ConvergenceReport rep;
    rep.beta = cfg.beta;
    rep.alpha = cfg.alpha;
    rep.trials = cfg.trials;
    rep.seed = cfg.master_seed;
    for (double E : cfg.E_list) {
        ConvergenceLevel lvl;
        lvl.E = E;
        lvl.trials.resize(cfg.trials);
        parallel_for(cfg.trials, [&](std::size_t i) {
            lvl.trials[i] = convergence_trial(cfg, E, trial_seed(cfg.master_seed, "converge", i));
        });
        std::vector<double> d, t, w;
        for (const auto& tr : lvl.trials) {
            d.push_back(tr.d_phi);
            t.push_back(tr.tm_dist);
            w.push_back(tr.weyl_dist.front());
        }
        lvl.d_phi = quantile_triple(d);
        lvl.tm_dist = quantile_triple(t);
        lvl.weyl_dist = quantile_triple(w);
        rep.ladder.push_back(std::move(lvl));
    }
    return rep;
}

std::string ConvergenceReport::to_json() const {
    using nlohmann::json;
    auto q = [](const QuantileTriple& x) { return json{{"p25", x.p25}, {"p50", x.p50}, {"p75", x.p75}}; };
    json ladder_json = json::array();
    for (const auto& l : ladder)
        ladder_json.push_back({{"E", l.E}, {"d_phi", q(l.d_phi)}, {"tm_dist", q(l.tm_dist)}, {"weyl_dist", q(l.weyl_dist)}});
    json j;
    j["beta"] = std::isinf(beta) ? json("inf") : json(beta);
    j["alpha"] = alpha;
    j["ladder"] = ladder_json;
    j["trials"] = trials;
    j["seed"] = seed;
    return j.dump(2);
}

std::vector<CouplingLevel> coupling_experiment(double beta, const std::vector<double>& E_list, double alpha,
                                               std::size_t trials, std::uint64_t master_seed,
                                               const StepPolicy& policy) {
    if (trials == 0) throw ParameterError("coupling_experiment: trials must be positive");
    std::vector<CouplingLevel> out;
    for (double E : E_list) {
        AiryParams p(beta, E);
        CouplingGrid grid = build_grid(E, alpha);
        sigma_matrices(grid);
        CouplingLevel lvl;
        lvl.E = E;
        lvl.error_sup.resize(trials);
        lvl.gbm_sup.resize(trials);
        lvl.re_companion.resize(trials);
        CouplingOptions opts;
        opts.policy = policy;
        parallel_for(trials, [&](std::size_t i) {
            std::uint64_t s = derive_seed(trial_seed(master_seed, "couple", i), {double_bits(E)});
            CouplingResult cr = construct_coupled_W(p, s, grid, opts);
            GbmStatistics g = gbm_comparison(cr);
            lvl.error_sup[i] = cr.error_sup;
            lvl.gbm_sup[i] = g.sup;
            lvl.re_companion[i] = g.re_companion;
        });
        out.push_back(std::move(lvl));
    }
    return out;
}

std::vector<double> WeightsResult::pooled_weights() const {
    std::vector<double> w;
    for (const auto& t : trials)
        for (const auto& a : t.atoms) w.push_back(a.weight);
    return w;
}

std::vector<double> WeightsResult::pooled_locations() const {
    std::vector<double> w;
    for (const auto& t : trials)
        for (const auto& a : t.atoms) w.push_back(a.lambda);
    return w;
}

void WeightsResult::write_csv(std::ostream& os) const {
    os << "trial,lambda,weight\n";
    auto flags = os.flags();
    os << std::hexfloat;
    for (const auto& t : trials)
        for (const auto& a : t.atoms) os << t.trial << ',' << a.lambda << ',' << a.weight << '\n';
    os.flags(flags);
}

WeightsResult spectral_weights_experiment(const WeightsConfig& cfg) {
    if (cfg.trials == 0) throw ParameterError("spectral_weights_experiment: trials must be positive");
    if (!(cfg.hi > cfg.lo)) throw ParameterError("spectral_weights_experiment: empty window");
    WeightsResult res;
    res.trials.resize(cfg.trials);
    parallel_for(cfg.trials, [&](std::size_t i) {
        WeightsTrial& tr = res.trials[i];
        tr.trial = i;
        NoiseSource noise{trial_seed(cfg.master_seed, "weights", i)};
        StieltjesOptions so;
        so.scan_step = cfg.scan_step;
        try {
            if (cfg.shifted) {
                AiryParams p(cfg.beta, cfg.E);
                SaoShooter sh(cfg.beta, noise, cfg.E + cfg.hi / (2.0 * std::sqrt(cfg.E)), cfg.shooting);
                tr.atoms = stieltjes_invert(airy_weyl_function(p, sh), cfg.lo, cfg.hi, cfg.eps_schedule, so).atoms;
            } else {
                SaoShooter sh(cfg.beta, noise, cfg.hi, cfg.shooting);
                WeylFunction m{[&sh](cplx z) { return weyl_sao(sh, z); }, "stochastic Airy, shooting"};
                tr.atoms = stieltjes_invert(m, cfg.lo, cfg.hi, cfg.eps_schedule, so).atoms;
            }
        } catch (const std::exception& e) {
            tr.failed = true;
            tr.error = e.what();
        }
    });
    for (const auto& t : res.trials)
        if (t.failed) ++res.failures;
    return res;
}

TridiagonalSample dumitriu_edelman_oracle(double beta, std::size_t N, std::uint64_t seed) {
    if (N < 2) throw ParameterError("dumitriu_edelman_oracle: N must be at least 2");
    if (!(beta > 0.0) || std::isinf(beta)) throw ParameterError("dumitriu_edelman_oracle: beta must be finite and positive");
    SplitMix64 rng(derive_seed(seed, {key_of("tridiagonal")}));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0));
    const double scale = 1.0 / std::sqrt(4.0 * static_cast<double>(N) * beta);
    Eigen::VectorXd diag(N);
    Eigen::VectorXd sub(N - 1);
    for (std::size_t k = 0; k < N; ++k) diag(k) = scale * normal(rng);
    for (std::size_t k = 1; k < N; ++k) {
        std::gamma_distribution<double> chi_sq(0.5 * beta * static_cast<double>(N - k), 2.0);
        sub(k - 1) = scale * std::sqrt(chi_sq(rng));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (es.info() != Eigen::Success) throw NumericError("dumitriu_edelman_oracle: eigensolver failed");
    TridiagonalSample out;
    const double n23 = std::pow(static_cast<double>(N), 2.0 / 3.0);
    for (std::size_t k = 0; k < N; ++k) {
        double lam = es.eigenvalues()(k);
        double q = es.eigenvectors()(0, k);
        out.eigenvalues.push_back(lam);
        out.weights.push_back(q * q);
        out.edge_rescaled.push_back(2.0 * n23 * (lam - 1.0));
    }
    return out;
}

AsymptoticsResult asymptotics_experiment(const AsymptoticsConfig& cfg) {
    if (cfg.trials == 0) throw ParameterError("asymptotics_experiment: trials must be positive");
    if (cfg.times.empty() || !std::is_sorted(cfg.times.begin(), cfg.times.end()) || cfg.times.front() <= 1.0)
        throw ParameterError("asymptotics_experiment: times must be sorted and above 1");
    std::vector<double> rec{1.0};
    rec.insert(rec.end(), cfg.times.begin(), cfg.times.end());
    std::vector<std::vector<double>> amp(cfg.trials);
    std::vector<double> phase(cfg.trials);
    std::vector<char> blown(cfg.trials, 0);
    parallel_for(cfg.trials, [&](std::size_t i) {
        NegAxisPolar path = simulate_negative_axis(cfg.beta, trial_seed(cfg.master_seed, "asymptotics", i),
                                                   cfg.times.back(), cfg.init, cfg.policy, rec);
        blown[i] = (path.blown_up || path.r.size() != rec.size()) ? 1 : 0;
        if (blown[i]) return;
        for (std::size_t k = 1; k < rec.size(); ++k) amp[i].push_back(path.r[k] - path.r[0]);
        double xi = std::fmod(path.xi.back(), 2.0 * std::numbers::pi);
        phase[i] = xi < 0.0 ? xi + 2.0 * std::numbers::pi : xi;
    });
    AsymptoticsResult out;
    out.times = cfg.times;
    for (std::size_t k = 0; k < cfg.times.size(); ++k) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < cfg.trials; ++i) {
            if (blown[i]) continue;
            acc += amp[i][k];
            ++n;
        }
        out.mean_log_amplitude.push_back(n ? acc / static_cast<double>(n) : NAN);
    }
    for (std::size_t i = 0; i < cfg.trials; ++i) {
        if (blown[i]) {
            ++out.blown_up;
            continue;
        }
        out.final_phase.push_back(phase[i]);
    }
    return out;
}

}  // namespace canonsys
