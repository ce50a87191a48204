#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <utility>
#include <vector>

#include "canonsys/canonical.hpp"
#include "canonsys/integrate.hpp"
#include "canonsys/paths.hpp"

namespace canonsys {

// beta in (0, inf], E > 0.
struct AiryParams {
    double beta;
    double E;

    AiryParams(double beta, double E);

    bool infinite_beta() const { return std::isinf(beta); }
    // Noise amplitude 2/sqrt(beta); zero at beta = inf.
    double noise() const { return infinite_beta() ? 0.0 : 2.0 / std::sqrt(beta); }
    double c() const;
    double tau() const;
    double eps() const;
    // -log(1 - c t)
    double upsilon(double t) const;
};

struct TimeChange {
    double s;
    double ds_dt;
};

// eta_E(t) and eta_E'(t) on [0, tau + 1/sqrt(E)).
TimeChange time_change(const AiryParams& p, double t);

// Values of the Dirichlet-type (f) and Neumann-type (g) solutions and their derivatives.
struct FundamentalPoint {
    double f = 0.0;
    double fp = 0.0;
    double g = 0.0;
    double gp = 0.0;

    double wronskian() const { return f * gp - fp * g; }
};

struct FundamentalPair {
    std::vector<double> grid;
    std::vector<FundamentalPoint> values;
    bool blown_up = false;
    double last_good_time = 0.0;
    std::size_t floor_hits = 0;

    double max_wronskian_deviation() const;
    // CSV t,f,fp,g,gp in hexadecimal float form.
    void write_csv(std::ostream& os) const;
};

// Closed form at beta = inf (shifted Airy functions).
FundamentalPoint beta_infinity_closed_form(double E, double t);

// Joint Euler scheme in the original time on [0, horizon]: symplectic in the
// drift, trapezoid-weighted explicit noise. Classical RK4 with uniform steps at
// beta = inf (the driver is then unused).
FundamentalPair simulate_fundamental_direct(const AiryParams& p, const BrownianPath& driver, double horizon,
                                            const StepPolicy& policy);

// The same solutions in compactified time t in [0, tau]: values are f(eta(t)),
// f'(eta(t)) (derivatives with respect to the original time). Driven by B_E through
// dB(eta) = sqrt(eta') dB_E; RK4 for the drift plus an exact shear for the noise.
FundamentalPair simulate_fundamental_timechanged(const AiryParams& p, const BrownianPath& driver_be,
                                                 const StepPolicy& policy);

// The same scheme from the walker's current time and state to t_end, which may
// lie beyond tau (the logarithmic branch of the time change).
FundamentalPair continue_timechanged(const AiryParams& p, DyadicWalker& walker, double t_end,
                                     const FundamentalPoint& start, const StepPolicy& policy);

struct PolarPoint {
    double rho_d = 0.0;
    double xi_d = 0.0;
    double rho_n = 0.0;
    double xi_n = 0.0;
};

struct PolarState {
    std::vector<double> grid;
    std::vector<PolarPoint> values;
    bool blown_up = false;
    std::size_t floor_hits = 0;

    // sup |e^{rho_d + rho_n} sin(xi_n - xi_d) - 1|
    double max_wronskian_deviation() const;
    void write_csv(std::ostream& os) const;
};

// f(eta(t)), f'(eta(t)), g(eta(t)), g'(eta(t)) from polar coordinates at time t.
FundamentalPoint reconstruct(const AiryParams& p, double t, const PolarPoint& x);

// Initial polar state: rho = 0, xi_d = 0, xi_n = pi/2.
PolarPoint polar_initial();

// Step policy with the singular cap of the polar equations switched on.
StepPolicy polar_policy(const AiryParams& p, StepPolicy base);

// observer(t0, x0, h, dB, t1, x1); returning false stops the walk.
using PolarObserver =
    std::function<bool(double, const PolarPoint&, double, double, double, const PolarPoint&)>;

// Euler-Maruyama for the four coupled polar coordinates from the walker's time
// to t_end, with the deterministic phase advanced exactly.
SdeOutcome simulate_polar_stream(const AiryParams& p, DyadicWalker& walker, double t_end, PolarPoint& state,
                                 const StepPolicy& policy, const PolarObserver& observer);

// Stored polar paths on [0, tau].
PolarState simulate_polar(const AiryParams& p, const BrownianPath& driver_be, const StepPolicy& policy);

// R(s) = (1/(2 sqrt E)) (sqrt E g^2, f g; f g, f^2 / sqrt E).
Mat2 airy_matrix(double E, double f, double g);

// eta' (R o eta) from polar coordinates (outer-product form).
Mat2 airy_matrix_polar(const AiryParams& p, const PolarPoint& x);

// The two terms of the averaging decomposition: the hyperbolic part built from
// the differences (rho_n - rho_d, xi_n - xi_d) and the oscillating remainder.
std::pair<Mat2, Mat2> airy_matrix_polar_split(const AiryParams& p, const PolarPoint& x);

// Sampled systems: on the original-time grid, or time-changed on [0, tau].
CoefficientMatrix airy_system(const AiryParams& p, const FundamentalPair& direct);
CoefficientMatrix airy_system_timechanged(const AiryParams& p, const FundamentalPair& timechanged);
CoefficientMatrix airy_system_timechanged(const AiryParams& p, const PolarState& polar);

// Seeded source of Brownian increments on [0, inf).
struct NoiseSource {
    std::uint64_t seed = 0;
    double base_step = 1.0 / 64.0;
};

struct ShootingOptions {
    // Target phase advance per step in the oscillatory region.
    double phase_step = 0.02;
    // Horizon beyond the largest real spectral parameter.
    double margin = 10.0;
    // Horizon doublings allowed while certifying stabilization.
    int max_doublings = 3;
    double tolerance = 1e-8;
};

// Decaying solution of -f'' + (s + noise) f = zeta f on [s0, inf) by backward
// shooting from a certified horizon. The grid (and its noise) is built once.
class SaoShooter {
public:
    SaoShooter(double beta, NoiseSource noise, double zeta_max, ShootingOptions opts = {}, double s0 = 0.0);

    // (f(s0), f'(s0)) up to a complex factor.
    CVec2 boundary_vector(cplx zeta) const;
    // f'(s0) / f(s0); recorded by the Herglotz monitor.
    ExtComplex weyl(cplx zeta) const;

    double horizon() const { return grid_[end_]; }
    double stabilization() const { return stabilization_; }
    double s0() const { return grid_.front(); }
    double beta() const { return beta_; }

private:
    CVec2 shoot(cplx zeta, std::size_t end) const;

    double beta_;
    double sigma_;
    std::vector<double> grid_;
    std::vector<double> db_;
    std::size_t end_ = 0;
    double stabilization_ = 0.0;
};

// Weyl function of the operator itself: f'(0)/f(0) at spectral parameter zeta.
ExtComplex weyl_sao(const SaoShooter& shooter, cplx zeta);

// Weyl function of the shifted system: m(z) = weyl_sao(E + z/(2 sqrt E)) / sqrt E.
ExtComplex weyl_airy(const AiryParams& p, const SaoShooter& shooter, cplx z);
WeylFunction airy_weyl_function(const AiryParams& p, const SaoShooter& shooter);

// Weyl function of the time-changed sampled system on [0, tau], closed by the
// decaying solution beyond eta = E - 1 (independent tail noise).
class EmbeddedAiryWeyl {
public:
    EmbeddedAiryWeyl(const AiryParams& p, const PolarState& polar, NoiseSource tail, double z_max,
                     ShootingOptions opts = {});

    ExtComplex operator()(cplx z) const;
    const CoefficientMatrix& system() const { return system_; }

private:
    AiryParams params_;
    CoefficientMatrix system_;
    SaoShooter tail_;
    Mat2 frame_inv_;
};

struct NegAxisPolar {
    std::vector<double> grid;
    std::vector<double> r;
    std::vector<double> xi;
    bool blown_up = false;
};

// Polar coordinates of a solution on the negative axis, t = -x in [1, t_max].
// Records at record_times (sorted, inside [1, t_max]); all steps when empty.
NegAxisPolar simulate_negative_axis(double beta, std::uint64_t two_sided_seed, double t_max,
                                    std::pair<double, double> init, const StepPolicy& policy,
                                    const std::vector<double>& record_times = {});

struct NegAxisDirect {
    std::vector<double> grid;
    std::vector<double> f;   // f(-t)
    std::vector<double> fp;  // f'(-t)
};

// The reversed-time equation integrated directly on the same driver.
NegAxisDirect simulate_negative_axis_direct(double beta, std::uint64_t two_sided_seed, double t_max,
                                            std::pair<double, double> init, const StepPolicy& policy,
                                            const std::vector<double>& record_times);

struct OscillationCount {
    std::size_t count = 0;
    std::size_t count_doubled = 0;
    bool stable = true;
};

// Sign changes on (0, L] of the solution with f(0) = 0, f'(0) = 1 of
// -f'' + (s + noise) f = lambda f, compared with the count on (0, 2L].
OscillationCount count_eigenvalues_oscillation(double beta, NoiseSource noise, double lambda, double L,
                                               double phase_step = 0.02);

}  // namespace canonsys
