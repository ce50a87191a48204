#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "canonsys/canonical.hpp"
#include "canonsys/integrate.hpp"
#include "canonsys/paths.hpp"

namespace canonsys {

// Default log-time horizon: covers t up to 1 - e^{-16}.
inline constexpr double kSineHorizon = 16.0;

// Uniform log-time step 1/256.
StepPolicy sine_default_policy();

// Hyperbolic Brownian motion with variance 4/beta started at i, in log time,
// together with the complex driver W on the same grid.
struct HbmPath {
    double beta = 2.0;
    std::vector<double> grid;
    std::vector<cplx> values;
    std::vector<cplx> w;

    double s_max() const { return grid.back(); }
    // Linear interpolation; DomainError beyond the grid.
    cplx at(double s) const;
};

// Im part exact, Re part by Euler-Maruyama on the same driver.
HbmPath simulate_hbm(double beta, const ComplexBrownianPath& driver, double s_max,
                     const StepPolicy& policy = sine_default_policy());

// Same scheme for a driver given by its values on a grid (grid[0] = 0, w[0] = 0).
HbmPath simulate_hbm(double beta, std::vector<double> grid, std::vector<cplx> w);

// (1/(2 Im b)) (1, -Re b; -Re b, |b|^2)
Mat2 sine_matrix(cplx b);

// The sine coefficient matrix at t in [0, 1): sine_matrix(B(-log(1 - t))).
Mat2 sine_coefficient_matrix(const HbmPath& hbm, double t);

// e^{-s} sine_matrix(B(s)) on [0, s_max]: the same system in log time.
CoefficientMatrix sine_system_log(const HbmPath& hbm);

// c * sine_matrix(B(-log(1 - c t))) sampled on t_grid (the clock of the
// compactified Airy system; c = 1 gives the sine system itself).
CoefficientMatrix sine_system_clock(const HbmPath& hbm, double c, const std::vector<double>& t_grid);

struct SineBoundary {
    Vec2 v;
    // |Re B(s_max) - Re B(s_max / 2)|
    double stabilization = 0.0;
};

// (Re B(s_max), 1); ClassificationError for beta <= 2.
SineBoundary sine_boundary(double beta, const HbmPath& hbm);

struct SineWeyl {
    ExtComplex m;
    // |m(s_max) - m(s_max / 2)| with the same boundary rule at both horizons.
    double stabilization = 0.0;
};

// Weyl function truncated at s_max with boundary direction `boundary`, or
// (Re B(s), 1) at the truncation point s when none is given.
SineWeyl sine_weyl(const HbmPath& hbm, cplx z, const std::optional<Vec2>& boundary = std::nullopt);
WeylFunction sine_weyl_function(const HbmPath& hbm, const std::optional<Vec2>& boundary = std::nullopt);

struct SineEigenOptions {
    // Boundary direction at the right end; the natural one when empty.
    std::optional<Vec2> boundary;
    // Largest accepted boundary stabilization for the natural boundary at beta > 2.
    double certify_tol = 0.25;
};

// Eigenvalues in [lo, hi]. With an explicit boundary or beta > 2: sign changes
// of det[T(s_max, z) e_0, v] on a pi/4 grid, then bisection. Otherwise atoms of
// the truncated Weyl function by Stieltjes inversion.
std::vector<double> sine_eigenvalues(double beta, const HbmPath& hbm, double lo, double hi,
                                     const SineEigenOptions& opts = {});

}  // namespace canonsys
