#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <ostream>
#include <limits>
#include <vector>

#include "canonsys/errors.hpp"
#include "canonsys/paths.hpp"

namespace canonsys {

using Mat2 = Eigen::Matrix2d;
using CMat2 = Eigen::Matrix2cd;
using Vec2 = Eigen::Vector2d;
using CVec2 = Eigen::Vector2cd;
using cplx = std::complex<double>;

// beta = inf (the deterministic limit).
inline constexpr double kBetaInfinity = std::numeric_limits<double>::infinity();

struct StepPolicy {
    double dt_max = 1e-3;
    double phase_resolution = 0.1;
    double singularity_factor = 0.05;
    double hard_floor = 1e-12;
    // Caps dt <= singularity_factor * (1 - singular_c * t) when positive.
    double singular_c = 0.0;
    // Adds the Milstein correction to the polar phase/amplitude equations.
    bool milstein = false;

    void validate() const;
    // Step length from the caps. phase_rate is |d(phase)/dt| at the current
    // state (0 disables the phase cap). Sets floor_hit when clamped up.
    double select(double t, double phase_rate, bool& floor_hit) const;
};

template <std::size_t N>
using State = std::array<double, N>;

template <std::size_t N>
struct SamplePath {
    std::vector<double> grid;
    std::vector<State<N>> states;
    bool blown_up = false;
    double last_good_time = 0.0;
    std::size_t floor_hits = 0;

    // CSV with columns t,x0,x1,... in hexadecimal float form.
    void write_csv(std::ostream& os) const {
        os << "t";
        for (std::size_t k = 0; k < N; ++k) os << ",x" << k;
        os << '\n';
        auto flags = os.flags();
        os << std::hexfloat;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            os << grid[i];
            for (double v : states[i]) os << ',' << v;
            os << '\n';
        }
        os.flags(flags);
    }
};

struct SdeOutcome {
    bool blown_up = false;
    double last_good_time = 0.0;
    std::size_t floor_hits = 0;
    std::size_t steps = 0;
};

template <std::size_t N>
bool all_finite(const State<N>& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

// Euler-Maruyama on [t0, t1] with a scalar driver traversed by `walker`
// (which must sit at t0). `observer(t_left, x_left, h, dB, t_right, x_right)`
// sees every step; returning false stops the integration early.
template <std::size_t N, class Drift, class Diffusion, class PhaseRate, class Observer>
SdeOutcome integrate_sde_stream(Drift&& drift, Diffusion&& diffusion, PhaseRate&& phase_rate, DyadicWalker& walker,
                                double t1, State<N> x, const StepPolicy& policy, Observer&& observer) {
    SdeOutcome out;
    double t = walker.time();
    out.last_good_time = t;
    while (t < t1) {
        bool floor_hit = false;
        double want = policy.select(t, phase_rate(x, t), floor_hit);
        if (floor_hit) ++out.floor_hits;
        double b0 = walker.value();
        double h = walker.step(want, t1);
        double db = walker.value() - b0;
        State<N> a = drift(x, t);
        State<N> s = diffusion(x, t);
        State<N> y;
        for (std::size_t k = 0; k < N; ++k) y[k] = x[k] + a[k] * h + s[k] * db;
        double tn = walker.time();
        ++out.steps;
        if (!all_finite(y)) {
            out.blown_up = true;
            return out;
        }
        bool keep_going = observer(t, x, h, db, tn, y);
        x = y;
        t = tn;
        out.last_good_time = t;
        if (!keep_going) break;
    }
    return out;
}

// Euler-Maruyama driven by the path family of `driver` (same seed and base
// step); increments are obtained by dyadic refinement of the driver's base grid.
template <std::size_t N, class Drift, class Diffusion, class PhaseRate>
SamplePath<N> integrate_sde(Drift&& drift, Diffusion&& diffusion, PhaseRate&& phase_rate,
                            const BrownianPath& driver, double t0, double t1, const State<N>& init,
                            const StepPolicy& policy) {
    policy.validate();
    if (!(t1 > t0)) throw ParameterError("integrate_sde: empty interval");
    if (t1 > driver.horizon()) throw DomainError("integrate_sde: interval exceeds driver horizon");
    if (!all_finite(init)) throw ParameterError("integrate_sde: non-finite initial state");
    DyadicWalker walker(driver.seed(), driver.base_step(), t0);
    SamplePath<N> path;
    path.grid.push_back(t0);
    path.states.push_back(init);
    auto obs = [&](double, const State<N>&, double, double, double tn, const State<N>& y) {
        path.grid.push_back(tn);
        path.states.push_back(y);
        return true;
    };
    SdeOutcome o = integrate_sde_stream<N>(drift, diffusion, phase_rate, walker, t1, init, policy, obs);
    path.blown_up = o.blown_up;
    path.last_good_time = o.last_good_time;
    path.floor_hits = o.floor_hits;
    return path;
}

template <std::size_t N, class Drift, class Diffusion>
SamplePath<N> integrate_sde(Drift&& drift, Diffusion&& diffusion, const BrownianPath& driver, double t0, double t1,
                            const State<N>& init, const StepPolicy& policy) {
    auto no_phase = [](const State<N>&, double) { return 0.0; };
    return integrate_sde<N>(drift, diffusion, no_phase, driver, t0, t1, init, policy);
}

struct MatrixPath {
    std::vector<double> grid;
    std::vector<CMat2> values;
    bool blown_up = false;
};

// Classical RK4 for Y' = A(t) Y on a uniform grid of `steps` steps.
MatrixPath integrate_matrix_ode(const std::function<CMat2(double)>& rhs, double t0, double t1, const CMat2& init,
                                std::size_t steps);

// One RK4 step for Y' = A(t) Y given A at the left, middle and right points.
inline CMat2 rk4_matrix_step(const CMat2& y, const CMat2& a0, const CMat2& am, const CMat2& a1, double h) {
    CMat2 k1 = a0 * y;
    CMat2 k2 = am * (y + 0.5 * h * k1);
    CMat2 k3 = am * (y + 0.5 * h * k2);
    CMat2 k4 = a1 * (y + h * k3);
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace canonsys

