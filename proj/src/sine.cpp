#include "canonsys/sine.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "canonsys/errors.hpp"

namespace canonsys {

StepPolicy sine_default_policy() {
    StepPolicy p;
    p.dt_max = 1.0 / 256.0;
    return p;
}

cplx HbmPath::at(double s) const {
    if (grid.empty()) throw StructuralError("HbmPath: empty path");
    if (!(s >= 0.0) || s > grid.back() * (1.0 + 1e-14)) throw DomainError("HbmPath: time beyond the simulated horizon");
    if (s >= grid.back()) return values.back();
    auto it = std::upper_bound(grid.begin(), grid.end(), s);
    auto i = static_cast<std::size_t>(it - grid.begin());
    double u = (s - grid[i - 1]) / (grid[i] - grid[i - 1]);
    return values[i - 1] + u * (values[i] - values[i - 1]);
}

HbmPath simulate_hbm(double beta, std::vector<double> grid, std::vector<cplx> w) {
    if (!(beta > 0.0)) throw ParameterError("simulate_hbm: beta must be positive");
    if (grid.size() < 2 || grid.size() != w.size()) throw ParameterError("simulate_hbm: grid and driver mismatch");
    if (grid.front() != 0.0 || w.front() != cplx(0.0, 0.0)) throw ParameterError("simulate_hbm: must start at 0");
    HbmPath out;
    out.beta = beta;
    out.values.resize(grid.size());
    const bool inf = std::isinf(beta);
    const double sigma = inf ? 0.0 : 2.0 / std::sqrt(beta);
    const double drift = inf ? 0.0 : 2.0 / beta;
    double re = 0.0;
    out.values[0] = cplx(0.0, 1.0);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        if (!(grid[k] > grid[k - 1])) throw ParameterError("simulate_hbm: grid must increase");
        double im_prev = out.values[k - 1].imag();
        re += sigma * im_prev * (w[k].real() - w[k - 1].real());
        double im = std::exp(sigma * w[k].imag() - drift * grid[k]);
        out.values[k] = cplx(re, im);
    }
    out.grid = std::move(grid);
    out.w = std::move(w);
    return out;
}

HbmPath simulate_hbm(double beta, const ComplexBrownianPath& driver, double s_max, const StepPolicy& policy) {
    policy.validate();
    if (!(s_max > 0.0)) throw ParameterError("simulate_hbm: s_max must be positive");
    if (s_max > driver.re.horizon() || s_max > driver.im.horizon())
        throw DomainError("simulate_hbm: s_max beyond the driver horizon");
    if (driver.re.base_step() != driver.im.base_step())
        throw ParameterError("simulate_hbm: driver halves need a common base step");
    DyadicWalker re(driver.re.seed(), driver.re.base_step(), 0.0);
    DyadicWalker im(driver.im.seed(), driver.im.base_step(), 0.0);
    std::vector<double> grid{0.0};
    std::vector<cplx> w{cplx(0.0, 0.0)};
    while (re.time() < s_max) {
        bool floor_hit = false;
        double dt = policy.select(re.time(), 0.0, floor_hit);
        re.step(dt, s_max);
        im.step(dt, s_max);
        if (re.time() != im.time()) throw StructuralError("simulate_hbm: driver grids diverged");
        grid.push_back(re.time());
        w.emplace_back(re.value(), im.value());
    }
    return simulate_hbm(beta, std::move(grid), std::move(w));
}

Mat2 sine_matrix(cplx b) {
    double im = b.imag();
    if (!(im > 0.0)) throw DomainError("sine_matrix: point not in the upper half-plane");
    Mat2 m;
    m << 1.0, -b.real(), -b.real(), std::norm(b);
    return m / (2.0 * im);
}

Mat2 sine_coefficient_matrix(const HbmPath& hbm, double t) {
    if (!(t >= 0.0 && t < 1.0)) throw DomainError("sine_coefficient_matrix: t outside [0, 1)");
    return sine_matrix(hbm.at(-std::log1p(-t)));
}

CoefficientMatrix sine_system_log(const HbmPath& hbm) {
    std::vector<Mat2> vals;
    vals.reserve(hbm.grid.size());
    for (std::size_t i = 0; i < hbm.grid.size(); ++i) vals.push_back(std::exp(-hbm.grid[i]) * sine_matrix(hbm.values[i]));
    return CoefficientMatrix::sampled(hbm.grid, std::move(vals));
}

CoefficientMatrix sine_system_clock(const HbmPath& hbm, double c, const std::vector<double>& t_grid) {
    if (!(c > 0.0 && c <= 1.0)) throw ParameterError("sine_system_clock: c must lie in (0, 1]");
    std::vector<Mat2> vals;
    vals.reserve(t_grid.size());
    for (double t : t_grid) {
        if (!(c * t < 1.0)) throw DomainError("sine_system_clock: time at or beyond the singular point");
        vals.push_back(c * sine_matrix(hbm.at(-std::log1p(-c * t))));
    }
    return CoefficientMatrix::sampled(t_grid, std::move(vals));
}

SineBoundary sine_boundary(double beta, const HbmPath& hbm) {
    if (!(beta > 2.0)) throw ClassificationError("sine_boundary: limit point for beta <= 2, no boundary condition");
    double s = hbm.s_max();
    double late = hbm.at(s).real();
    double mid = hbm.at(0.5 * s).real();
    return {Vec2(late, 1.0), std::abs(late - mid)};
}

namespace {

Vec2 natural_direction(const HbmPath& hbm, double s) { return Vec2(hbm.at(s).real(), 1.0); }

ExtComplex truncated_m(const CoefficientMatrix& sys, const HbmPath& hbm, double s, const std::optional<Vec2>& b,
                       cplx z) {
    Vec2 v = b ? *b : natural_direction(hbm, s);
    return weyl_truncated(sys, s, v, z);
}

}  // namespace

SineWeyl sine_weyl(const HbmPath& hbm, cplx z, const std::optional<Vec2>& boundary) {
    CoefficientMatrix sys = sine_system_log(hbm);
    SineWeyl out;
    double s = hbm.s_max();
    out.m = truncated_m(sys, hbm, s, boundary, z);
    ExtComplex half = truncated_m(sys, hbm, 0.5 * s, boundary, z);
    out.stabilization = (out.m.infinite || half.infinite) ? INFINITY : std::abs(out.m.value - half.value);
    return out;
}

WeylFunction sine_weyl_function(const HbmPath& hbm, const std::optional<Vec2>& boundary) {
    auto sys = std::make_shared<CoefficientMatrix>(sine_system_log(hbm));
    Vec2 v = boundary ? *boundary : natural_direction(hbm, hbm.s_max());
    double s = hbm.s_max();
    return WeylFunction{[sys, v, s](cplx z) { return weyl_truncated(*sys, s, v, z); }, "sine system, log time"};
}

std::vector<double> sine_eigenvalues(double beta, const HbmPath& hbm, double lo, double hi,
                                     const SineEigenOptions& opts) {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw ParameterError("sine_eigenvalues: bad window");
    std::vector<double> out;
    if (!opts.boundary && !(beta > 2.0)) {
        SpectralMeasure mu = stieltjes_invert(sine_weyl_function(hbm), lo, hi, {0.1, 0.02, 0.004},
                                              StieltjesOptions{0.05, 1e-6, 1e-6});
        for (const auto& a : mu.atoms) out.push_back(a.lambda);
        return out;
    }
    Vec2 v;
    if (opts.boundary) {
        v = *opts.boundary;
    } else {
        SineBoundary b = sine_boundary(beta, hbm);
        if (!(b.stabilization <= opts.certify_tol))
            throw ConvergenceError("sine_eigenvalues: boundary value not stabilized", b.stabilization,
                                   opts.certify_tol);
        v = b.v;
    }
    CoefficientMatrix sys = sine_system_log(hbm);
    const double s = hbm.s_max();
    auto det = [&](double z) {
        CVec2 u = transfer_matrix(sys, s, cplx(z, 0.0)).col(0);
        return u(0).real() * v(1) - u(1).real() * v(0);
    };
    const double step = std::numbers::pi / 4.0;
    auto n = static_cast<std::size_t>(std::ceil((hi - lo) / step));
    double h = (hi - lo) / static_cast<double>(n);
    double za = lo;
    double da = det(za);
    if (da == 0.0) out.push_back(za);
    for (std::size_t k = 1; k <= n; ++k) {
        double zb = (k == n) ? hi : lo + h * static_cast<double>(k);
        double db = det(zb);
        if (db == 0.0) {
            out.push_back(zb);
        } else if (da != 0.0 && (da < 0.0) != (db < 0.0)) {
            double a = za, b = zb, fa = da;
            for (int it = 0; it < 100 && b - a > 1e-12 * std::max(1.0, std::abs(a)); ++it) {
                double m = 0.5 * (a + b);
                double fm = det(m);
                if (fm == 0.0) {
                    a = b = m;
                    break;
                }
                if ((fm < 0.0) == (fa < 0.0)) {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            out.push_back(0.5 * (a + b));
        }
        za = zb;
        da = db;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(), [](double x, double y) { return std::abs(x - y) < 1e-8; }),
              out.end());
    return out;
}

}  // namespace canonsys
