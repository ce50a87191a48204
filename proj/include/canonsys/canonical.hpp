#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "canonsys/integrate.hpp"

namespace canonsys {

enum class EndpointKind { LimitCircle, LimitPoint };

// Real symmetric positive semidefinite 2x2 coefficient matrix on [a, b].
// Either analytic (an evaluator) or sampled (piecewise-linear interpolation of
// values on a grid, which keeps PSD-ness).
class CoefficientMatrix {
public:
    using Evaluator = std::function<Mat2(double)>;

    CoefficientMatrix(double a, double b, Evaluator eval, EndpointKind right = EndpointKind::LimitCircle,
                      bool trace_integrable_at_b = true);

    static CoefficientMatrix sampled(std::vector<double> grid, std::vector<Mat2> values,
                                     EndpointKind right = EndpointKind::LimitCircle);

    double a() const { return a_; }
    double b() const { return b_; }
    EndpointKind left_kind() const { return EndpointKind::LimitCircle; }
    EndpointKind right_kind() const { return right_; }
    bool trace_integrable_at_b() const { return trace_integrable_; }
    bool is_sampled() const { return !grid_.empty(); }
    // Sample grid for sampled systems, extra breakpoints otherwise.
    const std::vector<double>& breakpoints() const { return breaks_; }
    void set_breakpoints(std::vector<double> breaks);

    Mat2 operator()(double t) const;

    // Symmetry and PSD (eigenvalues >= -1e-12 * max(1, |H|)) on the sample grid,
    // or on `probes` equispaced points; StructuralError on failure.
    void validate(std::size_t probes = 65) const;

    // CSV (t, h11, h12, h22) on the given times.
    void write_csv(std::ostream& os, const std::vector<double>& times) const;

private:
    friend struct SystemStepper;

    double a_;
    double b_;
    Evaluator eval_;
    EndpointKind right_;
    bool trace_integrable_;
    std::vector<double> grid_;
    std::vector<Mat2> values_;
    std::vector<double> breaks_;
};

// J = [[0, -1], [1, 0]].
Mat2 symplectic_j();

struct TransferOptions {
    // Largest RK4 step; 0 selects (b - a) / 4000.
    double h_max = 0.0;
};

// T(t, z) solving J T' = -z H T, T(a) = I.
CMat2 transfer_matrix(const CoefficientMatrix& system, double t, cplx z, const TransferOptions& opts = {});

// T at each of the sorted times (one forward sweep).
std::vector<CMat2> transfer_path(const CoefficientMatrix& system, const std::vector<double>& times, cplx z,
                                 const TransferOptions& opts = {});

// Solution of J u' = -z H u with u(t_from) = u_end, integrated backwards to a.
// Returned up to a positive normalization (only the direction is meaningful).
CVec2 propagate_to_left(const CoefficientMatrix& system, double t_from, const CVec2& u_end, cplx z,
                        const TransferOptions& opts = {});

// Extended complex value (infinity when the projective second component vanishes).
struct ExtComplex {
    cplx value{0.0, 0.0};
    bool infinite = false;

    static ExtComplex projective(const CVec2& u);
};

struct WeylFunction {
    std::function<ExtComplex(cplx)> eval;
    std::string provenance;

    ExtComplex operator()(cplx z) const { return eval(z); }
};

// Herglotz monitoring. Every evaluation made through the Weyl operations of
// this library is recorded; violations are Im m < -1e-6 at Im z > 0.
struct HerglotzStats {
    std::uint64_t evaluations = 0;
    std::uint64_t violations = 0;
    double worst_im = 0.0;
};
void herglotz_record(cplx z, const ExtComplex& m);
HerglotzStats herglotz_stats();
void herglotz_reset();
// Minimum Im m over the grid {x + iy : x in -5..5, y in {0.1, 1, 10}}.
double herglotz_probe(const WeylFunction& m);

struct TestFunction {
    double lo = 0.0;
    double hi = 1.0;
    int k = 1;
    std::vector<double> kinks;
    std::function<CVec2(double)> eval;

    CVec2 operator()(double t) const { return (t <= lo || t >= hi) ? CVec2::Zero() : eval(t); }

    // dir * min(t - lo, hi - t) on [lo, hi].
    static TestFunction hat(double lo, double hi, const CVec2& dir, int k = 1);
};

// First `count` members of the metric basis on [lo, hi]: unit-height tents on
// dyadic subintervals times the directions e1, e2, (e1+e2)/sqrt2, (e1+i e2)/sqrt2,
// enumerated level by level.
std::vector<TestFunction> hat_basis(double lo, double hi, std::size_t count);

double d_phi(const CoefficientMatrix& h1, const CoefficientMatrix& h2, const TestFunction& phi);

struct VagueMetricValue {
    double value = 0.0;
    double tail_bound = 0.0;
};

VagueMetricValue vague_metric(const CoefficientMatrix& h1, const CoefficientMatrix& h2,
                              const std::vector<TestFunction>& basis);

// m = P T(b, z)^{-1} e_theta.
ExtComplex weyl_limit_circle(const CoefficientMatrix& system, double theta, cplx z,
                             const TransferOptions& opts = {});

// m = P T(horizon, z)^{-1} v for a fixed boundary direction v.
ExtComplex weyl_truncated(const CoefficientMatrix& system, double horizon, const Vec2& v, cplx z,
                          const TransferOptions& opts = {});

struct HorizonPolicy {
    std::vector<double> horizons;  // increasing, inside [a, b)
    double tolerance = 1e-6;       // on |m(T_k) - m(T_{k-1})| / max(1, |m|)
    // Boundary direction used at each horizon; empty selects the Weyl-disc
    // midpoint of the e_0 and e_{pi/2} images.
    std::function<std::optional<Vec2>(double)> tail_direction;
};

struct WeylEstimate {
    ExtComplex m;
    double horizon = 0.0;
    double last_change = 0.0;
    std::vector<cplx> history;
};

WeylEstimate weyl_limit_point(const CoefficientMatrix& system, cplx z, const HorizonPolicy& policy,
                              const TransferOptions& opts = {});

struct Atom {
    double lambda = 0.0;
    double weight = 0.0;
};

struct SpectralMeasure {
    std::vector<Atom> atoms;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::string> warnings;

    std::string to_json() const;
};

struct StieltjesOptions {
    // Scan spacing; 0 selects eps_schedule.front() / 2.
    double scan_step = 0.0;
    // Atoms whose weight estimate falls below this are treated as noise.
    double weight_floor = 1e-6;
    // Im m below -herglotz_tol is an integrity error.
    double herglotz_tol = 1e-6;
};

SpectralMeasure stieltjes_invert(const WeylFunction& m, double lo, double hi, const std::vector<double>& eps_schedule,
                                 const StieltjesOptions& opts = {});

struct ResolventResult {
    std::vector<double> grid;
    std::vector<CVec2> u;
    std::vector<CVec2> u_a;
    std::vector<CVec2> u_b;
    cplx m;
    cplx wronskian;
};

// u = (S - z)^{-1} v through the kernel
// G(t, s) = u_b(t) u_a(s)^T for s < t and u_a(t) u_b(s)^T for s > t,
// with u_a = T e_0 and u_b = T (m, 1), m = m^theta(z). `points` grid points
// on [a, b] (sample grid of a sampled system is merged in).
ResolventResult apply_resolvent(const CoefficientMatrix& system, double theta, cplx z,
                                const std::function<CVec2(double)>& v, std::size_t points);

// sup over interior grid points of |J u' + H (z u + v)| with central differences.
double resolvent_residual(const CoefficientMatrix& system, cplx z, const std::function<CVec2(double)>& v,
                          const ResolventResult& r);

// Generalized Sturm-Liouville data -> canonical system. A' = [[s, q], [1/p, -s]] A,
// A(t0) = A0, second row (g, h), H = w (g, h)^T (g, h).
CoefficientMatrix sl_to_canonical(const std::function<double(double)>& p, const std::function<double(double)>& q,
                                  const std::function<double(double)>& s, const std::function<double(double)>& w,
                                  const Mat2& a0, double t0, double t1, std::size_t steps = 4000);

// The frame A(t) of sl_to_canonical on its grid (for Wronskian checks).
std::vector<Mat2> sl_frame(const std::function<double(double)>& p, const std::function<double(double)>& q,
                           const std::function<double(double)>& s, const Mat2& a0, double t0, double t1,
                           std::size_t steps, std::vector<double>* grid = nullptr);

}  // namespace canonsys
