#include "canonsys/paths.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

#include "canonsys/errors.hpp"
#include "canonsys/rng.hpp"

namespace canonsys {

namespace {

constexpr std::uint64_t kBaseTag = 0x42415345ULL;
constexpr std::uint64_t kMidTag = 0x4d494450ULL;
constexpr std::uint64_t kPointTag = 0x504f494eULL;

double base_time(std::int64_t k, double base_step) { return static_cast<double>(k) * base_step; }

}  // namespace

double base_increment(std::uint64_t seed, std::int64_t k, double base_step) {
    std::uint64_t key = derive_seed(seed, {kBaseTag, static_cast<std::uint64_t>(k)});
    return std::sqrt(base_step) * keyed_normal(key);
}

double bridge_midpoint(std::uint64_t seed, double a, double b, double va, double vb) {
    std::uint64_t key = derive_seed(seed, {kMidTag, double_bits(a), double_bits(b)});
    return 0.5 * (va + vb) + std::sqrt(0.25 * (b - a)) * keyed_normal(key);
}

double bridge_point(std::uint64_t seed, double a, double b, double va, double vb, double t) {
    std::uint64_t key = derive_seed(seed, {kPointTag, double_bits(a), double_bits(b), double_bits(t)});
    double u = (t - a) / (b - a);
    double var = (t - a) * (b - t) / (b - a);
    return va + u * (vb - va) + std::sqrt(std::max(var, 0.0)) * keyed_normal(key);
}

namespace {

// Value at a non-dyadic time t inside the tree cell [a, b]: follow the dyadic
// tree down to cells of length base * 2^-40, then a single bridge draw. Every
// consumer (materialized paths and walkers) lands on the same value.
double descend_value(std::uint64_t seed, double base_step, double a, double b, double va, double vb, double t) {
    const double min_len = std::ldexp(base_step, -40);
    while (b - a > min_len) {
        double m = 0.5 * (a + b);
        if (!(m > a && m < b)) break;
        double vm = bridge_midpoint(seed, a, b, va, vb);
        if (t == m) return vm;
        if (t < m) {
            b = m;
            vb = vm;
        } else {
            a = m;
            va = vm;
        }
    }
    return bridge_point(seed, a, b, va, vb, t);
}

}  // namespace

BrownianPath::BrownianPath(std::uint64_t seed, double horizon, double base_step)
    : seed_(seed), horizon_(horizon), base_step_(base_step) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ParameterError("horizon must be positive");
    if (!(base_step > 0.0) || !std::isfinite(base_step)) throw ParameterError("base_step must be positive");
    auto full = static_cast<std::int64_t>(std::floor(horizon / base_step));
    knots_.reserve(static_cast<std::size_t>(full) + 2);
    knots_.push_back({0.0, 0.0});
    double v = 0.0;
    for (std::int64_t k = 0; k < full; ++k) {
        v += base_increment(seed, k, base_step);
        knots_.push_back({base_time(k + 1, base_step), v});
    }
    double last = knots_.back().t;
    if (last < horizon) {
        double b = base_time(full + 1, base_step);
        double vb = v + base_increment(seed, full, base_step);
        knots_.push_back({horizon, descend_value(seed, base_step, last, b, v, vb, horizon)});
    }
}

bool BrownianPath::has_knot(double t) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), t,
                               [](const Knot& k, double x) { return k.t < x; });
    return it != knots_.end() && it->t == t;
}

double BrownianPath::at(double t) const {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), t,
                               [](const Knot& k, double x) { return k.t < x; });
    if (it == knots_.end() || it->t != t) throw StructuralError("time is not a materialized knot");
    return it->value;
}

void BrownianPath::refine_in_place(double a, double b) {
    auto it = std::lower_bound(knots_.begin(), knots_.end(), a,
                               [](const Knot& k, double x) { return k.t < x; });
    if (it == knots_.end() || it->t != a || std::next(it) == knots_.end() || std::next(it)->t != b)
        throw StructuralError("refine: [a, b] is not a gap between adjacent knots");
    double m = 0.5 * (a + b);
    if (!(m > a && m < b)) throw StructuralError("refine: gap below floating-point resolution");
    double vm = bridge_midpoint(seed_, a, b, it->value, std::next(it)->value);
    knots_.insert(std::next(it), Knot{m, vm});
}

void BrownianPath::refine_to(double max_gap) {
    if (!(max_gap > 0.0)) throw ParameterError("max_gap must be positive");
    std::vector<Knot> out;
    out.reserve(knots_.size());
    out.push_back(knots_.front());
    // Depth-first subdivision of each gap keeps the midpoint keys identical
    // to those produced by repeated refine_in_place calls.
    struct Gap {
        Knot l, r;
    };
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
        std::vector<Gap> work{{knots_[i], knots_[i + 1]}};
        while (!work.empty()) {
            Gap g = work.back();
            work.pop_back();
            if (g.r.t - g.l.t <= max_gap) {
                out.push_back(g.r);
                continue;
            }
            double m = 0.5 * (g.l.t + g.r.t);
            Knot mk{m, bridge_midpoint(seed_, g.l.t, g.r.t, g.l.value, g.r.value)};
            work.push_back({mk, g.r});
            work.push_back({g.l, mk});
        }
    }
    knots_ = std::move(out);
}

void BrownianPath::write_csv(std::ostream& os) const {
    os << "t,value\n";
    auto flags = os.flags();
    os << std::hexfloat;
    for (const auto& k : knots_) os << k.t << ',' << k.value << '\n';
    os.flags(flags);
}

BrownianPath sample_path(std::uint64_t seed, double horizon, double base_step) {
    return BrownianPath(seed, horizon, base_step);
}

BrownianPath refine(const BrownianPath& path, double a, double b) {
    BrownianPath out = path;
    out.refine_in_place(a, b);
    return out;
}

DyadicWalker::DyadicWalker(std::uint64_t seed, double base_step, double t0)
    : seed_(seed), base_step_(base_step), base_index_(0), t_(0.0), v_(0.0) {
    if (!(base_step > 0.0)) throw ParameterError("base_step must be positive");
    if (t0 < 0.0) throw ParameterError("walker start must be nonnegative");
    double k = std::round(t0 / base_step);
    if (std::abs(k * base_step - t0) > 1e-12 * std::max(1.0, t0))
        throw ParameterError("walker start must be a multiple of base_step");
    auto k0 = static_cast<std::int64_t>(k);
    for (std::int64_t j = 0; j < k0; ++j) v_ += base_increment(seed, j, base_step);
    base_index_ = k0;
    t_ = base_time(k0, base_step);
}

void DyadicWalker::push_next_base_cell() {
    double v = v_ + base_increment(seed_, base_index_, base_step_);
    ++base_index_;
    stack_.push_back({base_time(base_index_, base_step_), v});
}

double DyadicWalker::step(double max_dt, double t_stop) {
    if (!(max_dt > 0.0)) throw ParameterError("walker step must be positive");
    if (!(t_stop > t_)) throw ParameterError("walker stop time must lie ahead");
    if (stack_.empty()) push_next_base_cell();
    for (;;) {
        Cell top = stack_.back();
        double len = top.t - t_;
        bool too_long = len > max_dt;
        bool overshoot = top.t > t_stop;
        if (!too_long && !overshoot) {
            stack_.pop_back();
            t_ = top.t;
            v_ = top.v;
            return len;
        }
        double mid = 0.5 * (t_ + top.t);
        bool can_split = mid > t_ && mid < top.t;
        if (!too_long && overshoot && mid > t_stop) {
            // Terminal partial step inside this cell.
            double vs = descend_value(seed_, base_step_, t_, top.t, v_, top.v, t_stop);
            double h = t_stop - t_;
            t_ = t_stop;
            v_ = vs;
            return h;
        }
        if (!can_split) {
            stack_.pop_back();
            t_ = top.t;
            v_ = top.v;
            return len;
        }
        stack_.push_back({mid, bridge_midpoint(seed_, t_, top.t, v_, top.v)});
    }
}

std::pair<std::uint64_t, std::uint64_t> two_sided_seeds(std::uint64_t seed) {
    return {derive_seed(seed, {1}), derive_seed(seed, {2})};
}

ComplexBrownianPath::ComplexBrownianPath(std::uint64_t seed, double horizon, double base_step)
    : re(derive_seed(seed, {1}), horizon, base_step), im(derive_seed(seed, {2}), horizon, base_step) {}

std::complex<double> ComplexBrownianPath::at(double t) const { return {re.at(t), im.at(t)}; }

namespace {

std::vector<double> uniform_knots(std::size_t n, double sigma_sq) {
    if (!(sigma_sq > 0.0)) throw ParameterError("stitch_complex: sigma_sq must be positive");
    std::vector<double> k(n + 1);
    for (std::size_t j = 0; j <= n; ++j) k[j] = static_cast<double>(j) * sigma_sq;
    return k;
}

}  // namespace

StitchedComplexPath::StitchedComplexPath(std::vector<std::complex<double>> increments, double sigma_sq,
                                         std::vector<std::uint64_t> bridge_seeds, std::uint64_t tail_seed)
    : knots_(), increments_(std::move(increments)), bridge_seeds_(std::move(bridge_seeds)), tail_seed_(tail_seed) {
    if (increments_.empty()) throw ParameterError("stitch_complex: empty increment list");
    knots_ = uniform_knots(increments_.size(), sigma_sq);
    init();
}

StitchedComplexPath::StitchedComplexPath(std::vector<std::complex<double>> increments, std::vector<double> knot_times,
                                         std::vector<std::uint64_t> bridge_seeds, std::uint64_t tail_seed)
    : knots_(std::move(knot_times)),
      increments_(std::move(increments)),
      bridge_seeds_(std::move(bridge_seeds)),
      tail_seed_(tail_seed) {
    if (increments_.empty()) throw ParameterError("stitch_complex: empty increment list");
    if (knots_.size() != increments_.size() + 1 || knots_[0] != 0.0)
        throw ParameterError("stitch_complex: knot times must start at 0 with one entry per increment plus one");
    for (std::size_t j = 1; j < knots_.size(); ++j)
        if (!(knots_[j] > knots_[j - 1])) throw ParameterError("stitch_complex: knot times must increase");
    init();
}

void StitchedComplexPath::init() {
    for (std::size_t j = bridge_seeds_.size(); j < increments_.size(); ++j)
        bridge_seeds_.push_back(derive_seed(tail_seed_, {0x4252ULL, j}));
    partial_.resize(increments_.size() + 1);
    partial_[0] = 0.0;
    for (std::size_t j = 0; j < increments_.size(); ++j) partial_[j + 1] = partial_[j] + increments_[j];
}

std::complex<double> StitchedComplexPath::knot_value(std::size_t n) const {
    if (n >= partial_.size()) throw DomainError("knot index out of range");
    return partial_[n];
}

std::vector<std::complex<double>> StitchedComplexPath::sample(const std::vector<double>& times) const {
    if (!std::is_sorted(times.begin(), times.end())) throw ParameterError("sample times must be sorted");
    if (!times.empty() && times.front() < 0.0) throw DomainError("sample times must be nonnegative");
    const std::size_t n_inc = increments_.size();
    const double last_knot = knots_.back();
    std::normal_distribution<double> normal(0.0, 1.0);

    // Times within rounding of a knot are read as that knot.
    auto snap = [&](double t) {
        auto it = std::lower_bound(knots_.begin(), knots_.end(), t);
        for (auto c : {it, it == knots_.begin() ? it : std::prev(it)})
            if (c != knots_.end() && std::abs(t - *c) <= 1e-12 * std::max(1.0, t)) return *c;
        return t;
    };
    std::vector<double> eff(times.size());
    for (std::size_t j = 0; j < times.size(); ++j) eff[j] = snap(times[j]);

    std::vector<std::complex<double>> out(times.size());
    std::size_t i = 0;
    // Interior bridges, one interval at a time.
    while (i < times.size() && eff[i] < last_knot) {
        auto k = static_cast<std::size_t>(std::upper_bound(knots_.begin(), knots_.end(), eff[i]) - knots_.begin()) - 1;
        double left = knots_[k];
        double len = knots_[k + 1] - left;
        double scale = std::sqrt(len);
        std::mt19937_64 gen(bridge_seeds_[k]);
        std::complex<double> x_prev = 0.0;
        double u_prev = 0.0;
        for (; i < times.size() && eff[i] < knots_[k + 1]; ++i) {
            double u = std::clamp((eff[i] - left) / len, 0.0, 1.0);
            std::complex<double> x = x_prev;
            if (u > u_prev) {
                double keep = (1.0 - u) / (1.0 - u_prev);
                double sd = std::sqrt((u - u_prev) * (1.0 - u) / (1.0 - u_prev));
                double zr = normal(gen);
                double zi = normal(gen);
                x = x_prev * keep + std::complex<double>(sd * zr, sd * zi);
            }
            out[i] = partial_[k] + scale * x + u * increments_[k];
            x_prev = x;
            u_prev = u;
        }
    }
    // Tail: independent Brownian continuation.
    if (i < times.size()) {
        std::mt19937_64 gen(derive_seed(tail_seed_, {0x5441494cULL}));
        std::complex<double> w = partial_[n_inc];
        double s_prev = last_knot;
        for (; i < times.size(); ++i) {
            double ds = eff[i] - s_prev;
            if (ds > 0.0) {
                double sd = std::sqrt(ds);
                double zr = normal(gen);
                double zi = normal(gen);
                w += std::complex<double>(sd * zr, sd * zi);
                s_prev = eff[i];
            }
            out[i] = w;
        }
    }
    return out;
}

StitchedComplexPath stitch_complex(const std::vector<std::complex<double>>& increments, double sigma_sq,
                                   const std::vector<std::uint64_t>& bridge_seeds, std::uint64_t tail_seed) {
    return StitchedComplexPath(increments, sigma_sq, bridge_seeds, tail_seed);
}

}  // namespace canonsys
