#include "canonsys/airy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "canonsys/errors.hpp"
#include "canonsys/rng.hpp"
#include "canonsys/specfun.hpp"

namespace canonsys {

AiryParams::AiryParams(double beta_, double E_) : beta(beta_), E(E_) {
    if (!(beta > 0.0) || std::isnan(beta)) throw ParameterError("beta must be positive");
    if (!(E > 1.0) || !std::isfinite(E)) throw ParameterError("E must be a finite value above 1");
}

double AiryParams::c() const { return beta <= 2.0 ? 1.0 : 1.0 - 1.0 / std::sqrt(E); }

double AiryParams::tau() const { return beta <= 2.0 ? 1.0 - 1.0 / std::sqrt(E) : 1.0; }

double AiryParams::eps() const { return beta <= 2.0 ? 0.0 : 1.0 / std::sqrt(E); }

double AiryParams::upsilon(double t) const { return -std::log1p(-c() * t); }

TimeChange time_change(const AiryParams& p, double t) {
    const double c = p.c();
    const double tau = p.tau();
    const double end = tau + 1.0 / std::sqrt(p.E);
    if (!(t >= 0.0) || !(t < end)) throw DomainError("time_change: t outside [0, tau + 1/sqrt(E))");
    if (t <= tau) {
        double u = 1.0 - c * t;
        return {p.E - p.E * u * u, 2.0 * c * p.E * u};
    }
    double gap = end - t;
    return {p.E - 1.0 - c * std::log(p.E) - 2.0 * c * std::log(gap), 2.0 * c / gap};
}

double FundamentalPair::max_wronskian_deviation() const {
    double worst = 0.0;
    for (const auto& v : values) worst = std::max(worst, std::abs(v.wronskian() - 1.0));
    return worst;
}

void FundamentalPair::write_csv(std::ostream& os) const {
    os << "t,f,fp,g,gp\n";
    auto flags = os.flags();
    os << std::hexfloat;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& v = values[i];
        os << grid[i] << ',' << v.f << ',' << v.fp << ',' << v.g << ',' << v.gp << '\n';
    }
    os.flags(flags);
}

FundamentalPoint beta_infinity_closed_form(double E, double t) {
    if (!(E > 0.0)) throw ParameterError("beta_infinity_closed_form: E must be positive");
    AiryValue a = airy_eval(-E);
    AiryValue x = airy_eval(t - E);
    const double pi = std::numbers::pi;
    FundamentalPoint out;
    out.f = pi * (a.bi_prime * x.ai - a.ai_prime * x.bi);
    out.fp = pi * (a.bi_prime * x.ai_prime - a.ai_prime * x.bi_prime);
    out.g = pi * (a.ai * x.bi - a.bi * x.ai);
    out.gp = pi * (a.ai * x.bi_prime - a.bi * x.ai_prime);
    return out;
}

namespace {

// RK4 step of y' = a(t) yp, yp' = b(t) y for both columns of the fundamental pair.
template <class A, class B>
void rk4_pair(FundamentalPoint& v, double t0, double h, A&& a, B&& b) {
    auto rhs = [&](double t, double y, double yp, double& dy, double& dyp) {
        dy = a(t) * yp;
        dyp = b(t) * y;
    };
    auto one = [&](double& y, double& yp) {
        double k1y, k1p, k2y, k2p, k3y, k3p, k4y, k4p;
        rhs(t0, y, yp, k1y, k1p);
        rhs(t0 + 0.5 * h, y + 0.5 * h * k1y, yp + 0.5 * h * k1p, k2y, k2p);
        rhs(t0 + 0.5 * h, y + 0.5 * h * k2y, yp + 0.5 * h * k2p, k3y, k3p);
        rhs(t0 + h, y + h * k3y, yp + h * k3p, k4y, k4p);
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
        yp += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
    };
    one(v.f, v.fp);
    one(v.g, v.gp);
}

bool finite_point(const FundamentalPoint& v) {
    return std::isfinite(v.f) && std::isfinite(v.fp) && std::isfinite(v.g) && std::isfinite(v.gp);
}

}  // namespace

FundamentalPair simulate_fundamental_direct(const AiryParams& p, const BrownianPath& driver, double horizon,
                                            const StepPolicy& policy) {
    policy.validate();
    if (!(horizon > 0.0)) throw ParameterError("simulate_fundamental_direct: horizon must be positive");
    FundamentalPair out;
    const double E = p.E;
    if (p.infinite_beta()) {
        auto n = static_cast<std::size_t>(std::ceil(horizon / policy.dt_max - 1e-9));
        double h = horizon / static_cast<double>(n);
        FundamentalPoint v{1.0, 0.0, 0.0, 1.0};
        out.grid.push_back(0.0);
        out.values.push_back(v);
        for (std::size_t k = 0; k < n; ++k) {
            double t0 = h * static_cast<double>(k);
            rk4_pair(v, t0, h, [](double) { return 1.0; }, [&](double s) { return s - E; });
            out.grid.push_back(k + 1 == n ? horizon : h * static_cast<double>(k + 1));
            out.values.push_back(v);
        }
        out.last_good_time = horizon;
        return out;
    }
    if (horizon > driver.horizon()) throw DomainError("simulate_fundamental_direct: horizon exceeds driver");
    // Symplectic Euler for the drift; the noise kick uses the trapezoid value of
    // f (f is C^1, so this is consistent). The Wronskian moves only through the
    // noise, by a factor 1 - sigma h dB / 2 per step.
    const double sigma = p.noise();
    DyadicWalker walker(driver.seed(), driver.base_step(), 0.0);
    FundamentalPoint v{1.0, 0.0, 0.0, 1.0};
    double t = 0.0;
    out.grid.push_back(t);
    out.values.push_back(v);
    while (t < horizon) {
        bool floor_hit = false;
        double want = policy.select(t, std::sqrt(std::abs(E - t)), floor_hit);
        if (floor_hit) ++out.floor_hits;
        double b0 = walker.value();
        double h = walker.step(want, horizon);
        double db = walker.value() - b0;
        double pot = (t - E) * h;
        double f1 = v.f + h * v.fp;
        double g1 = v.g + h * v.gp;
        v.fp += pot * f1 + 0.5 * sigma * (v.f + f1) * db;
        v.gp += pot * g1 + 0.5 * sigma * (v.g + g1) * db;
        v.f = f1;
        v.g = g1;
        t = walker.time();
        if (!finite_point(v)) {
            out.blown_up = true;
            break;
        }
        out.grid.push_back(t);
        out.values.push_back(v);
        out.last_good_time = t;
    }
    return out;
}

StepPolicy polar_policy(const AiryParams& p, StepPolicy base) {
    base.singular_c = p.c();
    return base;
}

namespace {

// Phase speed of the compactified equations at time t.
double compact_phase_rate(const AiryParams& p, double t) {
    double u = 1.0 - p.c() * t;
    return 2.0 * p.c() * std::pow(p.E, 1.5) * u * u + p.c() / u;
}

}  // namespace

FundamentalPair continue_timechanged(const AiryParams& p, DyadicWalker& walker, double t_end,
                                     const FundamentalPoint& start, const StepPolicy& base_policy) {
    StepPolicy policy = polar_policy(p, base_policy);
    policy.validate();
    if (!(t_end < p.tau() + 1.0 / std::sqrt(p.E)) || !(p.c() * t_end < 1.0))
        throw DomainError("continue_timechanged: end time beyond the time change");
    const double sigma = p.noise();
    const double E = p.E;
    FundamentalPair out;
    FundamentalPoint v = start;
    double t = walker.time();
    out.grid.push_back(t);
    out.values.push_back(v);
    out.last_good_time = t;
    auto eta_p = [&](double r) { return time_change(p, r).ds_dt; };
    auto pot = [&](double r) {
        TimeChange tc = time_change(p, r);
        return (tc.s - E) * tc.ds_dt;
    };
    // Oscillation rate of f o eta in t, plus the singular scale of the clock.
    auto rate = [&](double r) {
        TimeChange tc = time_change(p, r);
        return tc.ds_dt * std::sqrt(std::max(1.0, std::abs(E - tc.s))) + p.c() / (1.0 - p.c() * r);
    };
    while (t < t_end) {
        bool floor_hit = false;
        double want = policy.select(t, rate(t), floor_hit);
        if (floor_hit) ++out.floor_hits;
        double b0 = walker.value();
        double h = walker.step(want, t_end);
        double db = walker.value() - b0;
        if (sigma > 0.0) {
            double k = sigma * std::sqrt(eta_p(t)) * db;
            v.fp += k * v.f;
            v.gp += k * v.g;
        }
        rk4_pair(v, t, h, eta_p, pot);
        t = walker.time();
        if (!finite_point(v)) {
            out.blown_up = true;
            break;
        }
        out.grid.push_back(t);
        out.values.push_back(v);
        out.last_good_time = t;
    }
    return out;
}

FundamentalPair simulate_fundamental_timechanged(const AiryParams& p, const BrownianPath& driver_be,
                                                 const StepPolicy& policy) {
    const double tau = p.tau();
    if (tau > driver_be.horizon()) throw DomainError("simulate_fundamental_timechanged: driver horizon below tau");
    DyadicWalker walker(driver_be.seed(), driver_be.base_step(), 0.0);
    return continue_timechanged(p, walker, tau, FundamentalPoint{1.0, 0.0, 0.0, 1.0}, policy);
}

PolarPoint polar_initial() { return {0.0, 0.0, 0.0, std::numbers::pi / 2.0}; }

double PolarState::max_wronskian_deviation() const {
    double worst = 0.0;
    for (const auto& x : values)
        worst = std::max(worst, std::abs(std::exp(x.rho_d + x.rho_n) * std::sin(x.xi_n - x.xi_d) - 1.0));
    return worst;
}

void PolarState::write_csv(std::ostream& os) const {
    os << "t,rho_d,xi_d,rho_n,xi_n\n";
    auto flags = os.flags();
    os << std::hexfloat;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& x = values[i];
        os << grid[i] << ',' << x.rho_d << ',' << x.xi_d << ',' << x.rho_n << ',' << x.xi_n << '\n';
    }
    os.flags(flags);
}

FundamentalPoint reconstruct(const AiryParams& p, double t, const PolarPoint& x) {
    double u = 1.0 - p.c() * t;
    double su = std::sqrt(u);
    double ed = std::exp(x.rho_d);
    double en = std::exp(x.rho_n);
    FundamentalPoint v;
    v.f = ed * std::cos(x.xi_d) / su;
    v.fp = std::sqrt(p.E) * su * ed * std::sin(x.xi_d);
    v.g = en * std::cos(x.xi_n) / (std::sqrt(p.E) * su);
    v.gp = su * en * std::sin(x.xi_n);
    return v;
}

SdeOutcome simulate_polar_stream(const AiryParams& p, DyadicWalker& walker, double t_end, PolarPoint& x,
                                 const StepPolicy& base_policy, const PolarObserver& observer) {
    StepPolicy policy = polar_policy(p, base_policy);
    policy.validate();
    if (t_end > p.tau() * (1.0 + 1e-15)) throw DomainError("simulate_polar: end time beyond tau");
    const double c = p.c();
    const double e32 = std::pow(p.E, 1.5);
    const bool inf = p.infinite_beta();
    const double a = inf ? 0.0 : 1.0 / p.beta;
    const double b = (inf ? 0.0 : 2.0 / p.beta) - 0.5;
    const double s_rho = inf ? 0.0 : std::sqrt(2.0 / p.beta);
    const double s_xi = inf ? 0.0 : 2.0 * std::sqrt(2.0 / p.beta);
    SdeOutcome out;
    double t = walker.time();
    out.last_good_time = t;
    auto advance = [&](double& rho, double& xi, double k, double sk, double h, double db, double dtheta) {
        double c2 = std::cos(2.0 * xi);
        double s2 = std::sin(2.0 * xi);
        double c4 = 2.0 * c2 * c2 - 1.0;
        double s4 = 2.0 * s2 * c2;
        double cos_sq = 0.5 * (1.0 + c2);
        double r1 = rho + (a + b * c2 + a * c4) * k * h + s_rho * s2 * sk * db;
        double x1 = xi + dtheta - (b * s2 + a * s4) * k * h + s_xi * cos_sq * sk * db;
        if (policy.milstein) {
            // Single driver, so only the xi-derivatives of the noise coefficients enter.
            double q = k * (db * db - h) * cos_sq;
            r1 += s_xi * s_rho * c2 * q;
            x1 -= 0.5 * s_xi * s_xi * s2 * q;
        }
        rho = r1;
        xi = x1;
    };
    while (t < t_end) {
        bool floor_hit = false;
        double want = policy.select(t, compact_phase_rate(p, t), floor_hit);
        if (floor_hit) ++out.floor_hits;
        double b0 = walker.value();
        double h = walker.step(want, t_end);
        double db = walker.value() - b0;
        double t1 = walker.time();
        double u0 = 1.0 - c * t;
        double u1 = 1.0 - c * t1;
        double k = c / u0;
        double sk = std::sqrt(k);
        double dtheta = -(2.0 / 3.0) * e32 * (u0 * u0 * u0 - u1 * u1 * u1);
        PolarPoint y = x;
        advance(y.rho_d, y.xi_d, k, sk, h, db, dtheta);
        advance(y.rho_n, y.xi_n, k, sk, h, db, dtheta);
        ++out.steps;
        if (!std::isfinite(y.rho_d + y.xi_d + y.rho_n + y.xi_n)) {
            out.blown_up = true;
            return out;
        }
        bool keep = observer ? observer(t, x, h, db, t1, y) : true;
        x = y;
        t = t1;
        out.last_good_time = t;
        if (!keep) break;
    }
    return out;
}

PolarState simulate_polar(const AiryParams& p, const BrownianPath& driver_be, const StepPolicy& policy) {
    const double tau = p.tau();
    if (tau > driver_be.horizon()) throw DomainError("simulate_polar: driver horizon below tau");
    DyadicWalker walker(driver_be.seed(), driver_be.base_step(), 0.0);
    PolarState st;
    PolarPoint x = polar_initial();
    st.grid.push_back(0.0);
    st.values.push_back(x);
    auto obs = [&](double, const PolarPoint&, double, double, double t1, const PolarPoint& y) {
        st.grid.push_back(t1);
        st.values.push_back(y);
        return true;
    };
    SdeOutcome o = simulate_polar_stream(p, walker, tau, x, policy, obs);
    st.blown_up = o.blown_up;
    st.floor_hits = o.floor_hits;
    return st;
}

Mat2 airy_matrix(double E, double f, double g) {
    double se = std::sqrt(E);
    Mat2 m;
    m << se * g * g, f * g, f * g, f * f / se;
    return m / (2.0 * se);
}

Mat2 airy_matrix_polar(const AiryParams& p, const PolarPoint& x) {
    double n = std::exp(x.rho_n) * std::cos(x.xi_n);
    double d = std::exp(x.rho_d) * std::cos(x.xi_d);
    Mat2 m;
    m << n * n, n * d, n * d, d * d;
    return p.c() * m;
}

std::pair<Mat2, Mat2> airy_matrix_polar_split(const AiryParams& p, const PolarPoint& x) {
    const double c = p.c();
    double dr = x.rho_n - x.rho_d;
    double dx = x.xi_n - x.xi_d;
    double sr = x.rho_n + x.rho_d;
    double sx = x.xi_n + x.xi_d;
    double q = std::exp(-dr);
    Mat2 first;
    first << 1.0, q * std::cos(dx), q * std::cos(dx), q * q;
    first *= c / (2.0 * q * std::sin(dx));
    Mat2 second;
    double off = std::exp(sr) * std::cos(sx);
    second << std::exp(2.0 * x.rho_n) * std::cos(2.0 * x.xi_n), off, off,
        std::exp(2.0 * x.rho_d) * std::cos(2.0 * x.xi_d);
    second *= 0.5 * c;
    return {first, second};
}

CoefficientMatrix airy_system(const AiryParams& p, const FundamentalPair& direct) {
    std::vector<Mat2> vals;
    vals.reserve(direct.values.size());
    for (const auto& v : direct.values) vals.push_back(airy_matrix(p.E, v.f, v.g));
    return CoefficientMatrix::sampled(direct.grid, std::move(vals));
}

CoefficientMatrix airy_system_timechanged(const AiryParams& p, const FundamentalPair& tc) {
    std::vector<Mat2> vals;
    vals.reserve(tc.values.size());
    for (std::size_t i = 0; i < tc.values.size(); ++i)
        vals.push_back(time_change(p, tc.grid[i]).ds_dt * airy_matrix(p.E, tc.values[i].f, tc.values[i].g));
    return CoefficientMatrix::sampled(tc.grid, std::move(vals));
}

CoefficientMatrix airy_system_timechanged(const AiryParams& p, const PolarState& polar) {
    std::vector<Mat2> vals;
    vals.reserve(polar.values.size());
    for (const auto& x : polar.values) vals.push_back(airy_matrix_polar(p, x));
    return CoefficientMatrix::sampled(polar.grid, std::move(vals));
}

namespace {

// Step cap for second-order equations with local frequency sqrt|s - zeta|.
double shooting_step(double s, double zeta_ref, double phase_step) {
    return std::min(phase_step / std::sqrt(std::max(1.0, std::abs(zeta_ref - s))), 0.05);
}

// Complex RK4 step of y' = yp, yp' = (s - zeta) y with signed step h.
void rk4_complex(cplx& y, cplx& yp, double s, double h, cplx zeta) {
    auto q = [&](double t) { return cplx(t, 0.0) - zeta; };
    cplx k1y = yp;
    cplx k1p = q(s) * y;
    cplx k2y = yp + 0.5 * h * k1p;
    cplx k2p = q(s + 0.5 * h) * (y + 0.5 * h * k1y);
    cplx k3y = yp + 0.5 * h * k2p;
    cplx k3p = q(s + 0.5 * h) * (y + 0.5 * h * k2y);
    cplx k4y = yp + h * k3p;
    cplx k4p = q(s + h) * (y + h * k3y);
    y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    yp += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
}

}  // namespace

SaoShooter::SaoShooter(double beta, NoiseSource noise, double zeta_max, ShootingOptions opts, double s0)
    : beta_(beta), sigma_(std::isinf(beta) ? 0.0 : 2.0 / std::sqrt(beta)) {
    if (!(beta > 0.0)) throw ParameterError("SaoShooter: beta must be positive");
    if (!(opts.phase_step > 0.0) || !(opts.margin > 0.0) || opts.max_doublings < 1)
        throw ParameterError("SaoShooter: invalid options");
    if (!std::isfinite(zeta_max)) throw ParameterError("SaoShooter: zeta_max must be finite");
    const double start = std::max(zeta_max, s0);
    const double t_last = start + opts.margin * std::ldexp(1.0, opts.max_doublings) - s0;
    DyadicWalker walker(noise.seed, noise.base_step, 0.0);
    grid_.push_back(s0);
    // Grid is extended one doubling at a time, only as far as needed.
    auto extend_to = [&](double target) {
        while (grid_.back() < target) {
            double s = grid_.back();
            double b0 = walker.value();
            walker.step(shooting_step(s, zeta_max, opts.phase_step), std::min(target, t_last + s0) - s0);
            grid_.push_back(s0 + walker.time());
            db_.push_back(walker.value() - b0);
        }
    };
    auto index_of = [&](double target) {
        auto it = std::lower_bound(grid_.begin(), grid_.end(), target - 1e-12);
        return static_cast<std::size_t>(it - grid_.begin());
    };
    const cplx zeta_ref(zeta_max, 1e-2);
    double horizon = start + opts.margin;
    extend_to(horizon);
    std::size_t idx = index_of(horizon);
    for (int d = 0; d < opts.max_doublings; ++d) {
        double next = start + opts.margin * std::ldexp(1.0, d + 1);
        extend_to(next);
        std::size_t nidx = index_of(next);
        ExtComplex a = ExtComplex::projective(CVec2(shoot(zeta_ref, idx)(1), shoot(zeta_ref, idx)(0)));
        ExtComplex b = ExtComplex::projective(CVec2(shoot(zeta_ref, nidx)(1), shoot(zeta_ref, nidx)(0)));
        double change = (a.infinite || b.infinite) ? INFINITY : std::abs(a.value - b.value);
        stabilization_ = change;
        if (change <= opts.tolerance * std::max(1.0, std::abs(b.value))) {
            end_ = idx;
            return;
        }
        idx = nidx;
    }
    throw ConvergenceError("SaoShooter: decaying solution did not stabilize over the horizon doublings",
                           stabilization_, stabilization_);
}

CVec2 SaoShooter::shoot(cplx zeta, std::size_t end) const {
    double s_end = grid_[end];
    cplx y(1.0, 0.0);
    cplx yp = -std::sqrt(cplx(s_end, 0.0) - zeta);
    for (std::size_t k = end; k-- > 0;) {
        double h = grid_[k + 1] - grid_[k];
        rk4_complex(y, yp, grid_[k + 1], -h, zeta);
        if (sigma_ > 0.0) yp -= sigma_ * db_[k] * y;
        double n = std::abs(y) + std::abs(yp);
        if (n > 1e100 || n < 1e-100) {
            y /= n;
            yp /= n;
        }
    }
    double n = std::abs(y) + std::abs(yp);
    return CVec2(y / n, yp / n);
}

CVec2 SaoShooter::boundary_vector(cplx zeta) const { return shoot(zeta, end_); }

ExtComplex SaoShooter::weyl(cplx zeta) const {
    CVec2 v = shoot(zeta, end_);
    ExtComplex m = ExtComplex::projective(CVec2(v(1), v(0)));
    herglotz_record(zeta, m);
    return m;
}

ExtComplex weyl_sao(const SaoShooter& shooter, cplx zeta) { return shooter.weyl(zeta); }

ExtComplex weyl_airy(const AiryParams& p, const SaoShooter& shooter, cplx z) {
    if (shooter.s0() != 0.0) throw ParameterError("weyl_airy: shooter must start at 0");
    double se = std::sqrt(p.E);
    ExtComplex m = shooter.weyl(p.E + z / (2.0 * se));
    if (!m.infinite) m.value /= se;
    herglotz_record(z, m);
    return m;
}

WeylFunction airy_weyl_function(const AiryParams& p, const SaoShooter& shooter) {
    return WeylFunction{[p, &shooter](cplx z) { return weyl_airy(p, shooter, z); }, "shifted stochastic Airy, shooting"};
}

EmbeddedAiryWeyl::EmbeddedAiryWeyl(const AiryParams& p, const PolarState& polar, NoiseSource tail, double z_max,
                                   ShootingOptions opts)
    : params_(p),
      system_(airy_system_timechanged(p, polar)),
      tail_(p.beta, tail, p.E + z_max / (2.0 * std::sqrt(p.E)), opts, p.E - 1.0) {
    if (polar.grid.empty() || std::abs(polar.grid.back() - p.tau()) > 1e-12)
        throw DomainError("EmbeddedAiryWeyl: polar state must reach tau");
    FundamentalPoint v = reconstruct(p, polar.grid.back(), polar.values.back());
    double q = std::pow(p.E, 0.25);
    Mat2 frame;
    frame << q * v.gp, v.fp / q, q * v.g, v.f / q;
    frame_inv_ = frame.inverse();
}

ExtComplex EmbeddedAiryWeyl::operator()(cplx z) const {
    cplx zeta = params_.E + z / (2.0 * std::sqrt(params_.E));
    CVec2 w = tail_.boundary_vector(zeta);
    CVec2 u = frame_inv_.cast<cplx>() * CVec2(w(1), w(0));
    ExtComplex m = ExtComplex::projective(propagate_to_left(system_, system_.b(), u, z));
    herglotz_record(z, m);
    return m;
}

namespace {

constexpr double kNegBase = 1.0 / 64.0;

struct NegStepper {
    double beta;
    double a;       // 1/4 + 1/beta
    double b;       // 1/(2 beta)
    double s_rho;   // 1/sqrt(beta)
    double s_xi;    // 2/sqrt(beta)

    explicit NegStepper(double beta_)
        : beta(beta_),
          a(0.25 + (std::isinf(beta_) ? 0.0 : 1.0 / beta_)),
          b(std::isinf(beta_) ? 0.0 : 0.5 / beta_),
          s_rho(std::isinf(beta_) ? 0.0 : 1.0 / std::sqrt(beta_)),
          s_xi(std::isinf(beta_) ? 0.0 : 2.0 / std::sqrt(beta_)) {}

    void step(double& r, double& xi, double t0, double t1, double db) const {
        double h = t1 - t0;
        double c2 = std::cos(2.0 * xi);
        double s2 = std::sin(2.0 * xi);
        double c4 = 2.0 * c2 * c2 - 1.0;
        double s4 = 2.0 * s2 * c2;
        double st = std::sqrt(t0);
        double r1 = r + (b + a * c2 + b * c4) / t0 * h - s_rho / st * s2 * db;
        double x1 = xi - (2.0 / 3.0) * (t1 * std::sqrt(t1) - t0 * st) - (a * s2 + b * s4) / t0 * h -
                    s_xi / st * 0.5 * (1.0 + c2) * db;
        r = r1;
        xi = x1;
    }
};

void check_neg_args(double t_max, std::pair<double, double> init, const std::vector<double>& rec) {
    if (!(t_max >= 1.0)) throw ParameterError("negative axis: t_max must be at least 1");
    if (init.first == 0.0 && init.second == 0.0) throw DegeneracyError("negative axis: zero initial data");
    if (!std::is_sorted(rec.begin(), rec.end())) throw ParameterError("negative axis: record times must be sorted");
    if (!rec.empty() && (rec.front() < 1.0 || rec.back() > t_max))
        throw DomainError("negative axis: record times outside [1, t_max]");
}

double neg_max_dt(const StepPolicy& policy, double t) {
    bool floor_hit = false;
    return policy.select(t, std::sqrt(t) + 1.0 / t, floor_hit);
}

// Walks the reflected driver from 1 to t_max, stopping at each record time.
template <class Step, class Record>
void walk_negative(std::uint64_t seed, double t_max, const StepPolicy& policy, const std::vector<double>& rec,
                   Step&& step, Record&& record) {
    policy.validate();
    DyadicWalker walker(two_sided_seeds(seed).second, kNegBase, 1.0);
    auto run_to = [&](double target, bool record_each) {
        while (walker.time() < target) {
            double t0 = walker.time();
            double b0 = walker.value();
            walker.step(neg_max_dt(policy, t0), target);
            step(t0, walker.time(), walker.value() - b0);
            if (record_each) record(walker.time());
        }
    };
    if (rec.empty()) {
        record(1.0);
        run_to(t_max, true);
        return;
    }
    for (double target : rec) {
        run_to(target, false);
        record(target);
    }
}

}  // namespace

NegAxisPolar simulate_negative_axis(double beta, std::uint64_t seed, double t_max, std::pair<double, double> init,
                                    const StepPolicy& policy, const std::vector<double>& record_times) {
    if (!(beta > 0.0)) throw ParameterError("negative axis: beta must be positive");
    check_neg_args(t_max, init, record_times);
    NegStepper stepper(beta);
    double r = 0.5 * std::log(init.first * init.first + init.second * init.second);
    // y(t) = f(-t), so y'(1) = -f'(-1).
    double xi = std::atan2(-init.second, init.first);
    NegAxisPolar out;
    walk_negative(
        seed, t_max, policy, record_times,
        [&](double t0, double t1, double db) {
            stepper.step(r, xi, t0, t1, db);
            if (!std::isfinite(r) || !std::isfinite(xi)) out.blown_up = true;
        },
        [&](double t) {
            out.grid.push_back(t);
            out.r.push_back(r);
            out.xi.push_back(xi);
        });
    return out;
}

NegAxisDirect simulate_negative_axis_direct(double beta, std::uint64_t seed, double t_max,
                                            std::pair<double, double> init, const StepPolicy& policy,
                                            const std::vector<double>& record_times) {
    if (!(beta > 0.0)) throw ParameterError("negative axis: beta must be positive");
    check_neg_args(t_max, init, record_times);
    const double sigma = std::isinf(beta) ? 0.0 : 2.0 / std::sqrt(beta);
    double y = init.first;
    double yp = -init.second;
    NegAxisDirect out;
    walk_negative(
        seed, t_max, policy, record_times,
        [&](double t0, double t1, double db) {
            yp -= sigma * y * db;
            FundamentalPoint v{y, yp, 0.0, 0.0};
            rk4_pair(v, t0, t1 - t0, [](double) { return 1.0; }, [](double t) { return -t; });
            y = v.f;
            yp = v.fp;
        },
        [&](double t) {
            out.grid.push_back(t);
            out.f.push_back(y);
            out.fp.push_back(-yp);
        });
    return out;
}

OscillationCount count_eigenvalues_oscillation(double beta, NoiseSource noise, double lambda, double L,
                                               double phase_step) {
    if (!(beta > 0.0)) throw ParameterError("count_eigenvalues_oscillation: beta must be positive");
    if (!(L > lambda + 2.0)) throw ParameterError("count_eigenvalues_oscillation: L must exceed lambda + 2");
    const double sigma = std::isinf(beta) ? 0.0 : 2.0 / std::sqrt(beta);
    DyadicWalker walker(noise.seed, noise.base_step, 0.0);
    double y = 0.0;
    double yp = 1.0;
    OscillationCount out;
    std::size_t count = 0;
    const double end = 2.0 * L;
    bool passed_L = false;
    while (walker.time() < end) {
        double s = walker.time();
        double stop = passed_L ? end : L;
        double b0 = walker.value();
        walker.step(shooting_step(s, lambda, phase_step), stop);
        double db = walker.value() - b0;
        double y_old = y;
        yp += sigma * y * db;
        FundamentalPoint v{y, yp, 0.0, 0.0};
        rk4_pair(v, s, walker.time() - s, [](double) { return 1.0; }, [&](double t) { return t - lambda; });
        y = v.f;
        yp = v.fp;
        if ((y_old > 0.0 && y <= 0.0) || (y_old < 0.0 && y >= 0.0)) ++count;
        double n = std::abs(y) + std::abs(yp);
        if (n > 1e100) {
            y /= n;
            yp /= n;
        }
        if (!passed_L && walker.time() >= L) {
            out.count = count;
            passed_L = true;
        }
    }
    out.count_doubled = count;
    out.stable = out.count == out.count_doubled;
    return out;
}

}  // namespace canonsys
