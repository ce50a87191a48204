#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "canonsys/airy.hpp"
#include "canonsys/canonical.hpp"
#include "canonsys/paths.hpp"
#include "canonsys/sine.hpp"

namespace canonsys {

// Geometric grid of the coupling: c t_j = 1 - (1 + E^{-p})^{-j} for j < N,
// c t_N = 1 - E^{-1/2}. Stored in the clock-free variables c t_j.
struct CouplingGrid {
    double E = 0.0;
    double alpha = 0.0;
    double p = 0.0;
    double sigma_sq = 0.0;
    std::size_t N = 0;
    std::vector<double> ct;         // c t_j, j = 0..N
    std::vector<double> remaining;  // 1 - c t_j, computed multiplicatively
    std::vector<double> upsilon;    // -log(1 - c t_j)

    double time(double c, std::size_t j) const { return ct.at(j) / c; }
    // Length of the j-th interval in log time (sigma_sq for j < N).
    double interval_variance(std::size_t j) const;
};

CouplingGrid build_grid(double E, double alpha);

// pi/2 - (2/3) E^{3/2} (1 - (1 - c t)^3)
double deterministic_phase(const AiryParams& p, double t);

// Covariance of (Re, Im) of the j-th oscillatory increment, by Gauss-Legendre
// panels in the variable -log(1 - c s). Depends on E and the grid only.
Mat2 sigma_matrix(double E, const CouplingGrid& grid, std::size_t j);

// Sigma_j for j = 1..N-1 (index 0 unused); cached per (E, alpha).
const std::vector<Mat2>& sigma_matrices(const CouplingGrid& grid);

struct CouplingOptions {
    StepPolicy policy{};
    // Snapshots of the running integral per grid interval (besides the knots).
    std::size_t snapshots_per_interval = 16;
    // Keep every polar step (needed to build the Airy system).
    bool store_polar = false;
    // Continue the solutions past tau up to this time with the direct scheme.
    std::optional<double> extend_to;
    // Log-time grid step and horizon of the coupled hyperbolic Brownian motion.
    double hbm_step = 1.0 / 256.0;
    double hbm_horizon = kSineHorizon;
};

struct CouplingSnapshot {
    double t = 0.0;
    cplx integral{0.0, 0.0};  // running stochastic integral against e^{-2i xi_N}
    PolarPoint polar;
};

struct CouplingResult {
    AiryParams params;
    CouplingGrid grid;
    StitchedComplexPath W;
    // sup |integral - W o upsilon| over c t <= 1 - E^{-1/2 + alpha}
    double error_sup = 0.0;
    // ||sigma Sigma_j^{-1/2} - I|| per interval, and the number of singular fallbacks
    std::vector<double> whitening_deviation;
    std::size_t fallbacks = 0;
    std::vector<CouplingSnapshot> snapshots;
    // W sampled on the snapshot times and on the hyperbolic Brownian motion grid
    std::vector<cplx> w_at_snapshots;
    HbmPath hbm;
    PolarState polar;          // when store_polar
    FundamentalPair extension;  // when extend_to is set and exceeds tau
    std::size_t polar_steps = 0;
    bool blown_up = false;
};

// One coupled pair: polar coordinates on the driver with the given seed, the
// whitened increments W_j, the stitched complex Brownian motion and the
// hyperbolic Brownian motion built from it.
CouplingResult construct_coupled_W(const AiryParams& p, std::uint64_t seed, const CouplingGrid& grid,
                                   const CouplingOptions& opts = {});

struct GbmStatistics {
    // sup |2 rho_N + (2/sqrt beta) Im W o upsilon - (2/beta) upsilon|
    double sup = 0.0;
    // sup |-e^{-(rho_N - rho_D)} cos(xi_N - xi_D) - Re B o upsilon|
    double re_companion = 0.0;
};

// Both statistics over c t <= 1 - E^{-1/2 + alpha}, on the coupling snapshots.
GbmStatistics gbm_comparison(const CouplingResult& coupling);

// The coupled Airy system eta' (R o eta) on [0, max(tau, extend_to)] and the
// sine system in the same clock on the same grid.
struct CoupledSystems {
    CoefficientMatrix airy;
    CoefficientMatrix sine;
};
CoupledSystems coupled_systems(const CouplingResult& coupling);

struct QuantileTriple {
    double p25 = 0.0;
    double p50 = 0.0;
    double p75 = 0.0;
};
QuantileTriple quantile_triple(const std::vector<double>& v);

struct ConvergenceConfig {
    double beta = 2.0;
    std::vector<double> E_list{25.0, 100.0, 400.0};
    double alpha = 0.2;
    std::size_t trials = 100;
    std::uint64_t master_seed = 0;
    // Test functions: hats on [phi_lo, phi_hi] in the directions e1, e2, (e1+e2)/sqrt2.
    double phi_lo = 0.0;
    double phi_hi = 0.9;
    std::vector<cplx> weyl_probes{cplx(0.0, 1.0)};
    std::vector<double> tm_times{0.25, 0.5, 0.75};
    std::vector<cplx> tm_z{cplx(-1.0, 0.0), cplx(1.0, 0.0), cplx(0.0, 1.0)};
    StepPolicy policy{};
};

struct ConvergenceTrial {
    double d_phi = 0.0;
    double tm_dist = 0.0;
    std::vector<double> weyl_dist;  // one per probe
};

struct ConvergenceLevel {
    double E = 0.0;
    std::vector<ConvergenceTrial> trials;
    QuantileTriple d_phi;
    QuantileTriple tm_dist;
    QuantileTriple weyl_dist;  // first probe
};

struct ConvergenceReport {
    double beta = 0.0;
    double alpha = 0.0;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<ConvergenceLevel> ladder;

    std::string to_json() const;
};

// Per-trial seed: hash of (master seed, command, trial index).
std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& command, std::size_t trial);

ConvergenceTrial convergence_trial(const ConvergenceConfig& cfg, double E, std::uint64_t seed);
ConvergenceReport convergence_experiment(const ConvergenceConfig& cfg);

struct CouplingLevel {
    double E = 0.0;
    std::vector<double> error_sup;
    std::vector<double> gbm_sup;
    std::vector<double> re_companion;
};

// error_sup and the GBM statistics over trials for each E.
std::vector<CouplingLevel> coupling_experiment(double beta, const std::vector<double>& E_list, double alpha,
                                               std::size_t trials, std::uint64_t master_seed,
                                               const StepPolicy& policy = {});

struct WeightsConfig {
    double beta = 2.0;
    double E = 100.0;
    std::size_t trials = 200;
    std::uint64_t master_seed = 0;
    // Window in the shifted spectral variable z.
    double lo = -12.0;
    double hi = 12.0;
    // With shifted = false the window is in the unshifted variable zeta and
    // the atoms are those of the operator itself.
    bool shifted = true;
    std::vector<double> eps_schedule{0.1, 0.02, 0.004};
    double scan_step = 0.05;
    ShootingOptions shooting{};
};

struct WeightsTrial {
    std::size_t trial = 0;
    std::vector<Atom> atoms;
    bool failed = false;
    std::string error;
};

struct WeightsResult {
    std::vector<WeightsTrial> trials;
    std::size_t failures = 0;

    std::vector<double> pooled_weights() const;
    std::vector<double> pooled_locations() const;
    // CSV trial,lambda,weight
    void write_csv(std::ostream& os) const;
};

WeightsResult spectral_weights_experiment(const WeightsConfig& cfg);

struct TridiagonalSample {
    std::vector<double> eigenvalues;    // ascending
    std::vector<double> weights;        // squared first components, same order
    std::vector<double> edge_rescaled;  // 2 N^{2/3} (lambda - 1), same order
};

// Tridiagonal beta-Hermite model scaled by (4 N beta)^{-1/2}.
TridiagonalSample dumitriu_edelman_oracle(double beta, std::size_t N, std::uint64_t seed);

struct AsymptoticsConfig {
    double beta = 2.0;
    std::size_t trials = 500;
    std::uint64_t master_seed = 0;
    std::vector<double> times{10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0};
    std::pair<double, double> init{1.0, 0.0};
    StepPolicy policy = [] {
        StepPolicy p;
        p.dt_max = 1e-2;
        return p;
    }();
};

struct AsymptoticsResult {
    std::vector<double> times;
    // mean over trials of r(t) - r(1)
    std::vector<double> mean_log_amplitude;
    // xi(t) mod 2 pi at the last time, per trial
    std::vector<double> final_phase;
    std::size_t blown_up = 0;
};

AsymptoticsResult asymptotics_experiment(const AsymptoticsConfig& cfg);

}  // namespace canonsys
