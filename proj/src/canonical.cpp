#include "canonsys/canonical.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace canonsys {

namespace {

constexpr double kPsdTol = 1e-12;

Mat2 lerp(const Mat2& a, const Mat2& b, double u) { return a + u * (b - a); }

double h_max_for(const CoefficientMatrix& s, const TransferOptions& opts) {
    if (opts.h_max > 0.0) return opts.h_max;
    double len = s.b() - s.a();
    return std::isfinite(len) ? len / 4000.0 : 1e-2;
}

}  // namespace

// Walks [lo, hi] in RK4 steps that never straddle a breakpoint, handing the
// coefficient matrix at the left, middle and right point of every step.
struct SystemStepper {
    template <class F>
    static void walk(const CoefficientMatrix& s, double lo, double hi, double h_max, bool backward, F&& f) {
        if (!(hi > lo)) return;
        const auto& br = s.breaks_;
        const std::size_t b0 = static_cast<std::size_t>(std::upper_bound(br.begin(), br.end(), lo) - br.begin());
        const std::size_t b1 =
            std::max(b0, static_cast<std::size_t>(std::lower_bound(br.begin(), br.end(), hi) - br.begin()));
        // Nodes are lo, the breakpoints strictly inside, and hi.
        const std::size_t count = b1 - b0 + 2;
        auto node = [&](std::size_t k) { return k == 0 ? lo : (k + 1 == count ? hi : br[b0 + k - 1]); };

        const bool sampled = s.is_sampled();
        // Node times move monotonically, so a cursor replaces the bisection in
        // operator(); sampled endpoint values come straight from the samples.
        const auto& g = s.grid_;
        const auto& vals = s.values_;
        std::size_t cur = 0;
        if (sampled) {
            auto it = std::upper_bound(g.begin(), g.end(), backward ? hi : lo);
            cur = it == g.begin() ? 0 : static_cast<std::size_t>(it - g.begin()) - 1;
        }
        auto value = [&](double t) -> Mat2 {
            if (!sampled) return s(t);
            while (cur + 1 < g.size() && g[cur + 1] <= t) ++cur;
            while (cur > 0 && g[cur] > t) --cur;
            if (g[cur] >= t || cur + 1 == g.size()) return vals[cur];
            return lerp(vals[cur], vals[cur + 1], (t - g[cur]) / (g[cur + 1] - g[cur]));
        };

        auto segment = [&](double sa, const Mat2& va, double sb, const Mat2& vb) {
            auto n = static_cast<std::size_t>(std::ceil((sb - sa) / h_max - 1e-9));
            if (n == 0) n = 1;
            if (sampled && n == 1) {
                f(sa, sb, va, Mat2(0.5 * (va + vb)), vb);
                return;
            }
            auto eval = [&](double t) -> Mat2 {
                if (sampled) return lerp(va, vb, (t - sa) / (sb - sa));
                return s(t);
            };
            double h = (sb - sa) / static_cast<double>(n);
            if (!backward) {
                Mat2 h0 = sampled ? va : eval(sa);
                for (std::size_t k = 0; k < n; ++k) {
                    double t0 = sa + h * static_cast<double>(k);
                    double t1 = (k + 1 == n) ? sb : sa + h * static_cast<double>(k + 1);
                    Mat2 hm = eval(0.5 * (t0 + t1));
                    Mat2 h1 = eval(t1);
                    f(t0, t1, h0, hm, h1);
                    h0 = h1;
                }
            } else {
                Mat2 h1 = sampled ? vb : eval(sb);
                for (std::size_t k = n; k-- > 0;) {
                    double t0 = (k == 0) ? sa : sa + h * static_cast<double>(k);
                    double t1 = (k + 1 == n) ? sb : sa + h * static_cast<double>(k + 1);
                    Mat2 hm = eval(0.5 * (t0 + t1));
                    Mat2 h0 = eval(t0);
                    f(t0, t1, h0, hm, h1);
                    h1 = h0;
                }
            }
        };

        if (!backward) {
            double sa = lo;
            Mat2 va = sampled ? value(lo) : Mat2();
            for (std::size_t k = 1; k < count; ++k) {
                double sb = node(k);
                Mat2 vb = sampled ? value(sb) : Mat2();
                segment(sa, va, sb, vb);
                sa = sb;
                va = vb;
            }
        } else {
            double sb = hi;
            Mat2 vb = sampled ? value(hi) : Mat2();
            for (std::size_t k = count - 1; k > 0; --k) {
                double sa = node(k - 1);
                Mat2 va = sampled ? value(sa) : Mat2();
                segment(sa, va, sb, vb);
                sb = sa;
                vb = va;
            }
        }
    }
};

CoefficientMatrix::CoefficientMatrix(double a, double b, Evaluator eval, EndpointKind right,
                                     bool trace_integrable_at_b)
    : a_(a), b_(b), eval_(std::move(eval)), right_(right), trace_integrable_(trace_integrable_at_b) {
    if (!(b > a)) throw ParameterError("coefficient matrix: empty interval");
    if (!eval_) throw ParameterError("coefficient matrix: missing evaluator");
}

CoefficientMatrix CoefficientMatrix::sampled(std::vector<double> grid, std::vector<Mat2> values, EndpointKind right) {
    if (grid.size() < 2 || grid.size() != values.size())
        throw ParameterError("sampled coefficient matrix: need matching grid and values (>= 2)");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw StructuralError("sampled coefficient matrix: grid not increasing");
    CoefficientMatrix out(grid.front(), grid.back(), [](double) { return Mat2::Zero().eval(); }, right, true);
    out.grid_ = std::move(grid);
    out.values_ = std::move(values);
    out.breaks_ = out.grid_;
    return out;
}

void CoefficientMatrix::set_breakpoints(std::vector<double> breaks) {
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    if (is_sampled()) {
        std::vector<double> merged;
        std::set_union(grid_.begin(), grid_.end(), breaks.begin(), breaks.end(), std::back_inserter(merged));
        breaks_ = std::move(merged);
    } else {
        breaks_ = std::move(breaks);
    }
}

Mat2 CoefficientMatrix::operator()(double t) const {
    if (!(t >= a_ && t <= b_)) throw DomainError("coefficient matrix evaluated outside its interval");
    if (grid_.empty()) return eval_(t);
    auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    if (it == grid_.end()) return values_.back();
    auto i = static_cast<std::size_t>(it - grid_.begin());
    if (i == 0) return values_.front();
    double u = (t - grid_[i - 1]) / (grid_[i] - grid_[i - 1]);
    return lerp(values_[i - 1], values_[i], u);
}

void CoefficientMatrix::validate(std::size_t probes) const {
    std::vector<double> ts = grid_;
    if (ts.empty()) {
        double hi = std::isfinite(b_) ? b_ : a_ + 100.0;
        for (std::size_t i = 0; i < probes; ++i)
            ts.push_back(a_ + (hi - a_) * static_cast<double>(i) / static_cast<double>(probes - 1));
        if (right_ == EndpointKind::LimitPoint) ts.pop_back();
    }
    for (double t : ts) {
        Mat2 h = (*this)(t);
        if (!h.allFinite()) throw StructuralError("coefficient matrix: non-finite value");
        if (std::abs(h(0, 1) - h(1, 0)) > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff()))
            throw StructuralError("coefficient matrix: not symmetric");
        double tr = h.trace();
        double det = h.determinant();
        double disc = std::sqrt(std::max(0.25 * tr * tr - det, 0.0));
        double lmin = 0.5 * tr - disc;
        if (lmin < -kPsdTol * std::max(1.0, std::abs(tr))) throw StructuralError("coefficient matrix: not PSD");
    }
}

void CoefficientMatrix::write_csv(std::ostream& os, const std::vector<double>& times) const {
    os << "t,h11,h12,h22\n";
    auto flags = os.flags();
    os << std::hexfloat;
    for (double t : times) {
        Mat2 h = (*this)(t);
        os << t << ',' << h(0, 0) << ',' << h(0, 1) << ',' << h(1, 1) << '\n';
    }
    os.flags(flags);
}

Mat2 symplectic_j() {
    Mat2 j;
    j << 0.0, -1.0, 1.0, 0.0;
    return j;
}

namespace {

// One RK4 step of u' = z J H u with H given at the left, middle and right
// point, in real arithmetic (complex multiplication would add NaN branches).
inline CVec2 rk4_vector_step(const CVec2& u, const Mat2& h0, const Mat2& hm, const Mat2& h1, cplx z, double h) {
    struct V {
        double r0, i0, r1, i1;
    };
    const double zr = z.real() * h;
    const double zi = z.imag() * h;
    // h z J H x
    auto apply = [&](const Mat2& m, const V& x) {
        double w0r = -(m(0, 1) * x.r0 + m(1, 1) * x.r1);
        double w0i = -(m(0, 1) * x.i0 + m(1, 1) * x.i1);
        double w1r = m(0, 0) * x.r0 + m(0, 1) * x.r1;
        double w1i = m(0, 0) * x.i0 + m(0, 1) * x.i1;
        return V{zr * w0r - zi * w0i, zr * w0i + zi * w0r, zr * w1r - zi * w1i, zr * w1i + zi * w1r};
    };
    auto axpy = [](const V& x, double c, const V& k) {
        return V{x.r0 + c * k.r0, x.i0 + c * k.i0, x.r1 + c * k.r1, x.i1 + c * k.i1};
    };
    V x{u(0).real(), u(0).imag(), u(1).real(), u(1).imag()};
    V k1 = apply(h0, x);
    V k2 = apply(hm, axpy(x, 0.5, k1));
    V k3 = apply(hm, axpy(x, 0.5, k2));
    V k4 = apply(h1, axpy(x, 1.0, k3));
    const double c = 1.0 / 6.0;
    return CVec2(cplx(x.r0 + c * (k1.r0 + 2.0 * k2.r0 + 2.0 * k3.r0 + k4.r0),
                      x.i0 + c * (k1.i0 + 2.0 * k2.i0 + 2.0 * k3.i0 + k4.i0)),
                 cplx(x.r1 + c * (k1.r1 + 2.0 * k2.r1 + 2.0 * k3.r1 + k4.r1),
                      x.i1 + c * (k1.i1 + 2.0 * k2.i1 + 2.0 * k3.i1 + k4.i1)));
}

void check_time(const CoefficientMatrix& s, double t) {
    bool closed_right = s.right_kind() == EndpointKind::LimitCircle;
    if (!(t >= s.a()) || t > s.b() || (!closed_right && t >= s.b()))
        throw DomainError("transfer matrix: time outside the system interval");
}

}  // namespace

std::vector<CMat2> transfer_path(const CoefficientMatrix& system, const std::vector<double>& times, cplx z,
                                 const TransferOptions& opts) {
    if (!std::is_sorted(times.begin(), times.end())) throw ParameterError("transfer_path: times must be sorted");
    for (double t : times) check_time(system, t);
    const double h_max = h_max_for(system, opts);
    std::vector<CMat2> out;
    out.reserve(times.size());
    CMat2 y = CMat2::Identity();
    double cur = system.a();
    for (double t : times) {
        SystemStepper::walk(system, cur, t, h_max, false,
                            [&](double t0, double t1, const Mat2& h0, const Mat2& hm, const Mat2& h1) {
                                double h = t1 - t0;
                                y.col(0) = rk4_vector_step(y.col(0), h0, hm, h1, z, h);
                                y.col(1) = rk4_vector_step(y.col(1), h0, hm, h1, z, h);
                            });
        cur = std::max(cur, t);
        out.push_back(y);
    }
    return out;
}

CMat2 transfer_matrix(const CoefficientMatrix& system, double t, cplx z, const TransferOptions& opts) {
    return transfer_path(system, {t}, z, opts).front();
}

CVec2 propagate_to_left(const CoefficientMatrix& system, double t_from, const CVec2& u_end, cplx z,
                        const TransferOptions& opts) {
    check_time(system, t_from);
    const double h_max = h_max_for(system, opts);
    CVec2 u = u_end;
    SystemStepper::walk(system, system.a(), t_from, h_max, true,
                        [&](double t0, double t1, const Mat2& h0, const Mat2& hm, const Mat2& h1) {
                            u = rk4_vector_step(u, h1, hm, h0, z, t0 - t1);  // negative step
                            double n2 = u.squaredNorm();
                            if (n2 > 1e200 || (n2 < 1e-200 && n2 > 0.0)) u /= std::sqrt(n2);
                        });
    return u;
}

ExtComplex ExtComplex::projective(const CVec2& u) {
    ExtComplex e;
    double scale = std::max(std::abs(u(0)), std::abs(u(1)));
    if (!(scale > 0.0) || !std::isfinite(scale)) throw NumericError("projective value of a degenerate vector");
    if (std::abs(u(1)) <= 1e-300 * scale || std::abs(u(1)) == 0.0) {
        e.infinite = true;
        return e;
    }
    e.value = u(0) / u(1);
    if (!std::isfinite(e.value.real()) || !std::isfinite(e.value.imag())) e.infinite = true;
    return e;
}

namespace {

std::atomic<std::uint64_t> g_evals{0};
std::atomic<std::uint64_t> g_violations{0};
std::mutex g_worst_mutex;
double g_worst = 0.0;

}  // namespace

void herglotz_record(cplx z, const ExtComplex& m) {
    if (!(z.imag() > 0.0) || m.infinite) return;
    g_evals.fetch_add(1, std::memory_order_relaxed);
    double im = m.value.imag();
    if (im < 0.0) {
        std::lock_guard<std::mutex> lock(g_worst_mutex);
        g_worst = std::min(g_worst, im);
    }
    if (im < -1e-6) g_violations.fetch_add(1, std::memory_order_relaxed);
}

HerglotzStats herglotz_stats() {
    HerglotzStats s;
    s.evaluations = g_evals.load();
    s.violations = g_violations.load();
    std::lock_guard<std::mutex> lock(g_worst_mutex);
    s.worst_im = g_worst;
    return s;
}

void herglotz_reset() {
    g_evals = 0;
    g_violations = 0;
    std::lock_guard<std::mutex> lock(g_worst_mutex);
    g_worst = 0.0;
}

double herglotz_probe(const WeylFunction& m) {
    double worst = std::numeric_limits<double>::infinity();
    for (int x = -5; x <= 5; ++x) {
        for (double y : {0.1, 1.0, 10.0}) {
            cplx z(static_cast<double>(x), y);
            ExtComplex v = m(z);
            herglotz_record(z, v);
            if (!v.infinite) worst = std::min(worst, v.value.imag());
        }
    }
    return worst;
}

TestFunction TestFunction::hat(double lo, double hi, const CVec2& dir, int k) {
    if (!(hi > lo)) throw ParameterError("hat: empty support");
    TestFunction f;
    f.lo = lo;
    f.hi = hi;
    f.k = k;
    f.kinks = {lo, 0.5 * (lo + hi), hi};
    f.eval = [lo, hi, dir](double t) -> CVec2 {
        double v = std::max(0.0, std::min(t - lo, hi - t));
        return dir * v;
    };
    return f;
}

std::vector<TestFunction> hat_basis(double lo, double hi, std::size_t count) {
    if (count == 0) throw ParameterError("hat_basis: empty basis");
    const double r = 1.0 / std::numbers::sqrt2;
    const CVec2 dirs[4] = {CVec2(1.0, 0.0), CVec2(0.0, 1.0), CVec2(r, r), CVec2(cplx(r, 0.0), cplx(0.0, r))};
    std::vector<TestFunction> out;
    int k = 1;
    for (int level = 0; out.size() < count; ++level) {
        int cells = 1 << level;
        double w = (hi - lo) / cells;
        for (int i = 0; i < cells && out.size() < count; ++i) {
            for (const auto& d : dirs) {
                if (out.size() >= count) break;
                double a = lo + w * i;
                // Unit-height tent: scale the slope-one tent by 2 / w.
                out.push_back(TestFunction::hat(a, a + w, d * (2.0 / w), k++));
            }
        }
    }
    return out;
}

double d_phi(const CoefficientMatrix& h1, const CoefficientMatrix& h2, const TestFunction& phi) {
    if (std::abs(h1.a() - h2.a()) > 1e-12) throw ParameterError("d_phi: systems start at different points");
    if (phi.lo < h1.a() || phi.hi > h1.b() || phi.lo < h2.a() || phi.hi > h2.b())
        throw ParameterError("d_phi: test function support outside the common interval");
    std::vector<double> pts{phi.lo, phi.hi};
    for (double k : phi.kinks)
        if (k > phi.lo && k < phi.hi) pts.push_back(k);
    for (const auto* h : {&h1, &h2})
        for (double t : h->breakpoints())
            if (t > phi.lo && t < phi.hi) pts.push_back(t);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    auto integrand = [&](double t) {
        CVec2 f = phi(t);
        Mat2 d = h1(t) - h2(t);
        return (f.adjoint() * d.cast<cplx>() * f)(0, 0).real();
    };
    const bool piecewise_linear = h1.is_sampled() && h2.is_sampled();
    // Three-point Gauss-Legendre is exact for the cubic integrands that arise
    // when both matrices are piecewise linear on the merged grid.
    static const double gx[3] = {-std::sqrt(0.6), 0.0, std::sqrt(0.6)};
    static const double gw[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double a = pts[i];
        double b = pts[i + 1];
        if (piecewise_linear) {
            double c = 0.5 * (a + b);
            double r = 0.5 * (b - a);
            double s = 0.0;
            for (int q = 0; q < 3; ++q) s += gw[q] * integrand(c + r * gx[q]);
            total += r * s;
        } else {
            total += boost::math::quadrature::gauss_kronrod<double, 21>::integrate(integrand, a, b, 15, 1e-12);
        }
    }
    return std::abs(total);
}

VagueMetricValue vague_metric(const CoefficientMatrix& h1, const CoefficientMatrix& h2,
                              const std::vector<TestFunction>& basis) {
    if (basis.empty()) throw ParameterError("vague_metric: empty basis");
    VagueMetricValue out;
    double sum = 0.0;
    int kmax = 0;
    for (const auto& phi : basis) {
        double d = d_phi(h1, h2, phi);
        sum += std::ldexp(1.0, -phi.k) * d / (1.0 + d);
        kmax = std::max(kmax, phi.k);
    }
    out.value = sum;
    out.tail_bound = std::ldexp(1.0, -kmax);
    return out;
}

ExtComplex weyl_limit_circle(const CoefficientMatrix& system, double theta, cplx z, const TransferOptions& opts) {
    if (system.right_kind() != EndpointKind::LimitCircle)
        throw ClassificationError("weyl_limit_circle: right endpoint is limit point");
    CVec2 e(std::cos(theta), std::sin(theta));
    ExtComplex m = ExtComplex::projective(propagate_to_left(system, system.b(), e, z, opts));
    herglotz_record(z, m);
    return m;
}

ExtComplex weyl_truncated(const CoefficientMatrix& system, double horizon, const Vec2& v, cplx z,
                          const TransferOptions& opts) {
    CVec2 e = v.cast<cplx>();
    ExtComplex m = ExtComplex::projective(propagate_to_left(system, horizon, e, z, opts));
    herglotz_record(z, m);
    return m;
}

WeylEstimate weyl_limit_point(const CoefficientMatrix& system, cplx z, const HorizonPolicy& policy,
                              const TransferOptions& opts) {
    if (system.right_kind() != EndpointKind::LimitPoint)
        throw ClassificationError("weyl_limit_point: right endpoint is limit circle");
    if (!(z.imag() > 0.0)) throw DomainError("weyl_limit_point: z must lie in the upper half-plane");
    if (policy.horizons.size() < 2) throw ParameterError("weyl_limit_point: need at least two horizons");
    WeylEstimate est;
    ExtComplex prev;
    bool have_prev = false;
    for (double horizon : policy.horizons) {
        ExtComplex m;
        std::optional<Vec2> dir;
        if (policy.tail_direction) dir = policy.tail_direction(horizon);
        if (dir) {
            m = ExtComplex::projective(propagate_to_left(system, horizon, dir->cast<cplx>(), z, opts));
        } else {
            ExtComplex m0 = ExtComplex::projective(propagate_to_left(system, horizon, CVec2(1.0, 0.0), z, opts));
            ExtComplex m1 = ExtComplex::projective(propagate_to_left(system, horizon, CVec2(0.0, 1.0), z, opts));
            if (m0.infinite && m1.infinite) {
                m.infinite = true;
            } else if (m0.infinite) {
                m = m1;
            } else if (m1.infinite) {
                m = m0;
            } else {
                m.value = 0.5 * (m0.value + m1.value);
            }
        }
        est.history.push_back(m.infinite ? cplx(INFINITY, 0.0) : m.value);
        est.m = m;
        est.horizon = horizon;
        if (have_prev && !m.infinite && !prev.infinite) {
            double change = std::abs(m.value - prev.value);
            est.last_change = change;
            if (change <= policy.tolerance * std::max(1.0, std::abs(m.value))) {
                herglotz_record(z, m);
                return est;
            }
        }
        prev = m;
        have_prev = true;
    }
    std::ostringstream msg;
    msg << "weyl_limit_point: no stabilization within the horizon budget";
    if (est.history.size() >= 2) {
        cplx a = est.history[est.history.size() - 2];
        cplx b = est.history.back();
        msg << " (previous " << a << ", latest " << b << ")";
        throw ConvergenceError(msg.str(), std::abs(a), std::abs(b));
    }
    throw ConvergenceError(msg.str(), 0.0, 0.0);
}

std::string SpectralMeasure::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : atoms) arr.push_back({{"lambda", a.lambda}, {"weight", a.weight}});
    return arr.dump();
}

SpectralMeasure stieltjes_invert(const WeylFunction& m, double lo, double hi, const std::vector<double>& eps_schedule,
                                 const StieltjesOptions& opts) {
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) throw ParameterError("stieltjes_invert: bad window");
    if (eps_schedule.empty()) throw ParameterError("stieltjes_invert: empty eps schedule");
    for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
        if (!(eps_schedule[i] > 0.0)) throw ParameterError("stieltjes_invert: eps must be positive");
        if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1]))
            throw ParameterError("stieltjes_invert: eps schedule must decrease");
    }
    SpectralMeasure out;
    out.lo = lo;
    out.hi = hi;

    auto eval = [&](double lambda, double eps) -> ExtComplex {
        cplx z(lambda, eps);
        ExtComplex v = m(z);
        herglotz_record(z, v);
        if (!v.infinite && v.value.imag() < -opts.herglotz_tol)
            throw IntegrityError("stieltjes_invert: input is not Herglotz (Im m < 0)");
        return v;
    };
    auto smoothed = [&](double lambda, double eps) {
        ExtComplex v = eval(lambda, eps);
        return v.infinite ? std::numeric_limits<double>::infinity() : eps * v.value.imag();
    };

    const double eps0 = eps_schedule.front();
    const double step = opts.scan_step > 0.0 ? opts.scan_step : 0.5 * eps0;
    // Scan slightly past the window so atoms near its edges still show as
    // interior maxima.
    const double margin = 2.0 * step;
    auto n = static_cast<std::size_t>(std::ceil((hi - lo + 2.0 * margin) / step)) + 1;
    std::vector<double> grid(n);
    std::vector<double> mag(n);
    std::vector<double> dens(n);
    for (std::size_t i = 0; i < n; ++i) {
        grid[i] = lo - margin + step * static_cast<double>(i);
        ExtComplex v = eval(grid[i], eps0);
        mag[i] = v.infinite ? std::numeric_limits<double>::infinity() : eps0 * std::abs(v.value);
        dens[i] = v.infinite ? std::numeric_limits<double>::infinity() : eps0 * v.value.imag();
    }

    std::vector<Atom> found;
    const double eps_final = eps_schedule.back();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        bool peak = mag[i] >= mag[i - 1] && mag[i] >= mag[i + 1] && (mag[i] > mag[i - 1] || mag[i] > mag[i + 1]);
        bool dpeak = dens[i] >= dens[i - 1] && dens[i] >= dens[i + 1] && (dens[i] > dens[i - 1] || dens[i] > dens[i + 1]);
        if (!(peak || dpeak)) continue;
        if (!(dens[i] >= opts.weight_floor)) continue;

        double centre = grid[i];
        double radius = step;
        double prev_w = 0.0;
        double prev_eps = 0.0;
        double w = 0.0;
        double w_extrap = 0.0;
        for (std::size_t k = 0; k < eps_schedule.size(); ++k) {
            double eps = eps_schedule[k];
            double a = centre - radius;
            double b = centre + radius;
            auto neg = [&](double lam) { return -smoothed(lam, eps); };
            std::uintmax_t iters = 60;
            auto res = boost::math::tools::brent_find_minima(neg, a, b, 30, iters);
            centre = res.first;
            w = -res.second;
            if (k > 0) {
                double e0 = prev_eps * prev_eps;
                double e1 = eps * eps;
                w_extrap = (e0 * w - e1 * prev_w) / (e0 - e1);
            } else {
                w_extrap = w;
            }
            prev_w = w;
            prev_eps = eps;
            if (k + 1 < eps_schedule.size()) radius = std::max(3.0 * eps_schedule[k + 1], std::min(radius, 3.0 * eps));
        }
        if (!(w_extrap >= opts.weight_floor)) continue;
        // Imaginary part of -i eps m at the atom: a diagnostic for leakage.
        ExtComplex v = eval(centre, eps_final);
        if (!v.infinite && std::abs(eps_final * v.value.real()) > 0.5 * std::abs(w)) {
            out.warnings.push_back("atom near " + std::to_string(centre) + " has a large real-part residue");
        }
        found.push_back({centre, w_extrap});
    }

    std::sort(found.begin(), found.end(), [](const Atom& x, const Atom& y) { return x.lambda < y.lambda; });
    for (const auto& a : found) {
        if (!out.atoms.empty()) {
            Atom& last = out.atoms.back();
            double gap = a.lambda - last.lambda;
            if (gap <= 1e-6 * (1.0 + std::abs(a.lambda)) + 1e-3 * eps_final) {
                // Two scan maxima refined onto the same atom.
                if (a.weight > last.weight) last = a;
                continue;
            }
            if (gap < 10.0 * eps_final) {
                double wsum = last.weight + a.weight;
                last.lambda = (last.lambda * last.weight + a.lambda * a.weight) / wsum;
                last.weight = wsum;
                out.warnings.push_back("atoms closer than 10*eps merged near " + std::to_string(last.lambda));
                continue;
            }
        }
        out.atoms.push_back(a);
    }
    out.atoms.erase(std::remove_if(out.atoms.begin(), out.atoms.end(),
                                   [&](const Atom& a) { return a.lambda < lo || a.lambda > hi; }),
                    out.atoms.end());
    return out;
}

ResolventResult apply_resolvent(const CoefficientMatrix& system, double theta, cplx z,
                                const std::function<CVec2(double)>& v, std::size_t points) {
    if (z.imag() == 0.0) throw DomainError("apply_resolvent: z must be off the real axis");
    if (points < 3) throw ParameterError("apply_resolvent: need at least 3 grid points");
    if (system.right_kind() != EndpointKind::LimitCircle)
        throw ClassificationError("apply_resolvent: right endpoint must be limit circle");
    ResolventResult r;
    const double a = system.a();
    const double b = system.b();
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i)
        grid[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1);
    grid.back() = b;
    if (system.is_sampled()) {
        std::vector<double> merged;
        std::set_union(grid.begin(), grid.end(), system.breakpoints().begin(), system.breakpoints().end(),
                       std::back_inserter(merged));
        merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
        grid = std::move(merged);
    }
    TransferOptions opts;
    opts.h_max = std::min(h_max_for(system, {}), (b - a) / static_cast<double>(points - 1));
    ExtComplex m = weyl_limit_circle(system, theta, z, opts);
    if (m.infinite) throw DegeneracyError("apply_resolvent: z is an eigenvalue");
    r.m = m.value;
    std::vector<CMat2> tm = transfer_path(system, grid, z, opts);
    const std::size_t n = grid.size();
    r.grid = grid;
    r.u_a.resize(n);
    r.u_b.resize(n);
    CVec2 e0(1.0, 0.0);
    CVec2 mb(r.m, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        r.u_a[i] = tm[i] * e0;
        r.u_b[i] = tm[i] * mb;
    }
    CMat2 j = symplectic_j().cast<cplx>();
    r.wronskian = (r.u_a[0].transpose() * j * r.u_b[0])(0, 0);
    if (std::abs(r.wronskian) < 1e-8) throw DegeneracyError("apply_resolvent: vanishing Wronskian");
    const cplx norm = -1.0 / r.wronskian;

    std::vector<cplx> fa(n);
    std::vector<cplx> fb(n);
    for (std::size_t i = 0; i < n; ++i) {
        CVec2 hv = system(grid[i]).cast<cplx>() * v(grid[i]);
        fa[i] = (r.u_a[i].transpose() * hv)(0, 0);
        fb[i] = (r.u_b[i].transpose() * hv)(0, 0);
    }
    std::vector<cplx> ia(n, 0.0);
    std::vector<cplx> ib(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
        double h = grid[i] - grid[i - 1];
        ia[i] = ia[i - 1] + 0.5 * h * (fa[i] + fa[i - 1]);
        ib[i] = ib[i - 1] + 0.5 * h * (fb[i] + fb[i - 1]);
    }
    r.u.resize(n);
    for (std::size_t i = 0; i < n; ++i) r.u[i] = norm * (r.u_b[i] * ia[i] + r.u_a[i] * (ib[n - 1] - ib[i]));
    return r;
}

double resolvent_residual(const CoefficientMatrix& system, cplx z, const std::function<CVec2(double)>& v,
                          const ResolventResult& r) {
    CMat2 j = symplectic_j().cast<cplx>();
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < r.grid.size(); ++i) {
        double hl = r.grid[i] - r.grid[i - 1];
        double hr = r.grid[i + 1] - r.grid[i];
        // Three-point derivative on a possibly nonuniform grid.
        CVec2 du = (-hr / (hl * (hl + hr))) * r.u[i - 1] + ((hr - hl) / (hl * hr)) * r.u[i] +
                   (hl / (hr * (hl + hr))) * r.u[i + 1];
        CVec2 res = j * du + system(r.grid[i]).cast<cplx>() * (z * r.u[i] + v(r.grid[i]));
        worst = std::max(worst, res.cwiseAbs().maxCoeff());
    }
    return worst;
}

std::vector<Mat2> sl_frame(const std::function<double(double)>& p, const std::function<double(double)>& q,
                           const std::function<double(double)>& s, const Mat2& a0, double t0, double t1,
                           std::size_t steps, std::vector<double>* grid) {
    if (std::abs(a0.determinant() - 1.0) > 1e-12) throw ParameterError("sl_to_canonical: det A0 must be 1");
    if (!(t1 > t0) || steps == 0) throw ParameterError("sl_to_canonical: bad interval");
    auto rhs = [&](double t) {
        double pv = p(t);
        if (pv == 0.0 || !std::isfinite(pv)) throw DomainError("sl_to_canonical: p vanishes");
        Mat2 m;
        m << s(t), q(t), 1.0 / pv, -s(t);
        return m;
    };
    std::vector<Mat2> out;
    out.reserve(steps + 1);
    if (grid) grid->assign(1, t0);
    Mat2 a = a0;
    out.push_back(a);
    const double h = (t1 - t0) / static_cast<double>(steps);
    for (std::size_t n = 0; n < steps; ++n) {
        double ta = t0 + h * static_cast<double>(n);
        double tb = (n + 1 == steps) ? t1 : t0 + h * static_cast<double>(n + 1);
        double hh = tb - ta;
        Mat2 r0 = rhs(ta);
        Mat2 rm = rhs(0.5 * (ta + tb));
        Mat2 r1 = rhs(tb);
        Mat2 k1 = r0 * a;
        Mat2 k2 = rm * (a + 0.5 * hh * k1);
        Mat2 k3 = rm * (a + 0.5 * hh * k2);
        Mat2 k4 = r1 * (a + hh * k3);
        a += (hh / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push_back(a);
        if (grid) grid->push_back(tb);
    }
    return out;
}

CoefficientMatrix sl_to_canonical(const std::function<double(double)>& p, const std::function<double(double)>& q,
                                  const std::function<double(double)>& s, const std::function<double(double)>& w,
                                  const Mat2& a0, double t0, double t1, std::size_t steps) {
    auto grid = std::make_shared<std::vector<double>>();
    auto frame = std::make_shared<std::vector<Mat2>>(sl_frame(p, q, s, a0, t0, t1, steps, grid.get()));
    // Derivatives of the second row (g, h) at the grid: row 2 of A' = [1/p, -s] A.
    auto deriv = std::make_shared<std::vector<Vec2>>();
    deriv->reserve(grid->size());
    for (std::size_t i = 0; i < grid->size(); ++i) {
        double t = (*grid)[i];
        const Mat2& a = (*frame)[i];
        double ip = 1.0 / p(t);
        double sv = s(t);
        deriv->push_back(Vec2(ip * a(0, 0) - sv * a(1, 0), ip * a(0, 1) - sv * a(1, 1)));
    }
    auto eval = [grid, frame, deriv, w](double t) -> Mat2 {
        auto it = std::upper_bound(grid->begin(), grid->end(), t);
        std::size_t i = (it == grid->begin()) ? 0 : static_cast<std::size_t>(it - grid->begin()) - 1;
        if (i + 1 >= grid->size()) i = grid->size() - 2;
        double ta = (*grid)[i];
        double tb = (*grid)[i + 1];
        double hh = tb - ta;
        double u = (t - ta) / hh;
        // Cubic Hermite interpolation of (g, h).
        double h00 = (1 + 2 * u) * (1 - u) * (1 - u);
        double h10 = u * (1 - u) * (1 - u);
        double h01 = u * u * (3 - 2 * u);
        double h11 = u * u * (u - 1);
        Vec2 ya((*frame)[i](1, 0), (*frame)[i](1, 1));
        Vec2 yb((*frame)[i + 1](1, 0), (*frame)[i + 1](1, 1));
        Vec2 gh = h00 * ya + h10 * hh * (*deriv)[i] + h01 * yb + h11 * hh * (*deriv)[i + 1];
        return w(t) * (gh * gh.transpose());
    };
    CoefficientMatrix out(t0, t1, eval);
    out.set_breakpoints(*grid);
    return out;
}

}  // namespace canonsys
