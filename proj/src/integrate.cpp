#include "canonsys/integrate.hpp"

#include <algorithm>

namespace canonsys {

void StepPolicy::validate() const {
    if (!(dt_max > 0.0) || !(phase_resolution > 0.0) || !(singularity_factor > 0.0) || !(hard_floor > 0.0))
        throw ParameterError("step policy fields must be positive");
    if (hard_floor > dt_max) throw ParameterError("step policy: hard_floor exceeds dt_max");
    if (singular_c < 0.0) throw ParameterError("step policy: singular_c must be nonnegative");
}

double StepPolicy::select(double t, double phase_rate, bool& floor_hit) const {
    double dt = dt_max;
    if (phase_rate > 0.0) dt = std::min(dt, phase_resolution / phase_rate);
    if (singular_c > 0.0) dt = std::min(dt, singularity_factor * std::max(1.0 - singular_c * t, 0.0));
    floor_hit = false;
    if (dt < hard_floor) {
        dt = hard_floor;
        floor_hit = true;
    }
    return dt;
}

MatrixPath integrate_matrix_ode(const std::function<CMat2(double)>& rhs, double t0, double t1, const CMat2& init,
                                std::size_t steps) {
    if (steps == 0) throw ParameterError("integrate_matrix_ode: steps must be positive");
    if (!(t1 >= t0)) throw ParameterError("integrate_matrix_ode: reversed interval");
    MatrixPath out;
    out.grid.reserve(steps + 1);
    out.values.reserve(steps + 1);
    out.grid.push_back(t0);
    out.values.push_back(init);
    const double h = (t1 - t0) / static_cast<double>(steps);
    CMat2 y = init;
    CMat2 a0 = rhs(t0);
    for (std::size_t n = 0; n < steps; ++n) {
        double ta = t0 + h * static_cast<double>(n);
        double tb = (n + 1 == steps) ? t1 : t0 + h * static_cast<double>(n + 1);
        CMat2 am = rhs(0.5 * (ta + tb));
        CMat2 a1 = rhs(tb);
        y = rk4_matrix_step(y, a0, am, a1, tb - ta);
        a0 = a1;
        if (!y.allFinite()) {
            out.blown_up = true;
            break;
        }
        out.grid.push_back(tb);
        out.values.push_back(y);
    }
    return out;
}

}  // namespace canonsys
