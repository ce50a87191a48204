#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace canonsys {

struct Knot {
    double t;
    double value;
};

// Increment of the base path over [k*base_step, (k+1)*base_step].
double base_increment(std::uint64_t seed, std::int64_t k, double base_step);

// Brownian-bridge midpoint of the cell [a, b]; keyed on (seed, a, b) only,
// so the value does not depend on the order in which cells are refined.
double bridge_midpoint(std::uint64_t seed, double a, double b, double va, double vb);

// Bridge draw at an arbitrary interior time t of the cell [a, b].
double bridge_point(std::uint64_t seed, double a, double b, double va, double vb, double t);

// Materialized path. Values are a pure function of the seed, the base step and
// the knot times, so two paths with the same seed agree wherever both have knots.
class BrownianPath {
public:
    BrownianPath(std::uint64_t seed, double horizon, double base_step);

    std::uint64_t seed() const { return seed_; }
    double horizon() const { return horizon_; }
    double base_step() const { return base_step_; }
    const std::vector<Knot>& knots() const { return knots_; }

    bool has_knot(double t) const;
    // Stored value at an existing knot; StructuralError otherwise.
    double at(double t) const;

    // Inserts the midpoint of the knot gap [a, b]; StructuralError if [a, b]
    // is not a gap between adjacent knots.
    void refine_in_place(double a, double b);
    // Refines every gap until all gaps are at most max_gap.
    void refine_to(double max_gap);

    // CSV with columns t,value in hexadecimal float form.
    void write_csv(std::ostream& os) const;

private:
    std::uint64_t seed_;
    double horizon_;
    double base_step_;
    std::vector<Knot> knots_;
};

BrownianPath sample_path(std::uint64_t seed, double horizon, double base_step);

// Value-semantic refinement: returns an extended copy.
BrownianPath refine(const BrownianPath& path, double a, double b);

// Streaming traversal of the same path family as BrownianPath, without
// storing knots. Cells are split at midpoints until they fit the requested
// step, so steps are always dyadic subdivisions of the base grid.
class DyadicWalker {
public:
    // t0 must be a multiple of base_step.
    DyadicWalker(std::uint64_t seed, double base_step, double t0 = 0.0);

    double time() const { return t_; }
    double value() const { return v_; }
    std::uint64_t seed() const { return seed_; }
    double base_step() const { return base_step_; }

    // Advances by one cell of length <= max_dt, never passing t_stop. When
    // t_stop falls strictly inside a cell that cannot be split further usefully,
    // the step ends exactly at t_stop via a bridge draw.
    // Returns the step length; the increment is value() after minus before.
    double step(double max_dt, double t_stop);

private:
    struct Cell {
        double t;
        double v;
    };

    void push_next_base_cell();

    std::uint64_t seed_;
    double base_step_;
    std::int64_t base_index_;
    double t_;
    double v_;
    std::vector<Cell> stack_;
};

// Sub-seeds for the two independent halves of a two-sided path.
// first: the t >= 0 half; second: the reflected half t -> B(-t).
std::pair<std::uint64_t, std::uint64_t> two_sided_seeds(std::uint64_t seed);

// Complex Brownian motion with independent real and imaginary parts,
// E|W(t)|^2 = 2t.
struct ComplexBrownianPath {
    BrownianPath re;
    BrownianPath im;

    ComplexBrownianPath(std::uint64_t seed, double horizon, double base_step);

    std::complex<double> at(double t) const;
};

// Complex path defined by knot increments on a knot grid (uniform s_n = n*sigma_sq
// or explicit) and scaled pinned bridges between knots. Beyond the last knot
// the path continues as an independent complex Brownian motion.
class StitchedComplexPath {
public:
    StitchedComplexPath(std::vector<std::complex<double>> increments, double sigma_sq,
                        std::vector<std::uint64_t> bridge_seeds, std::uint64_t tail_seed);
    // knot_times: increasing, knot_times[0] == 0, one more entry than increments.
    StitchedComplexPath(std::vector<std::complex<double>> increments, std::vector<double> knot_times,
                        std::vector<std::uint64_t> bridge_seeds, std::uint64_t tail_seed);

    // Length of the first knot interval.
    double sigma_sq() const { return knots_[1]; }
    std::size_t knot_count() const { return partial_.size(); }
    double knot_time(std::size_t n) const { return knots_.at(n); }
    // Sum of the first n increments.
    std::complex<double> knot_value(std::size_t n) const;

    // Values at a sorted set of times >= 0. Bridge interiors are sampled
    // sequentially along the query set, so the realization of interior
    // points depends on which points are queried; knot values never do.
    std::vector<std::complex<double>> sample(const std::vector<double>& times) const;

private:
    void init();

    std::vector<double> knots_;
    std::vector<std::complex<double>> increments_;
    std::vector<std::complex<double>> partial_;
    std::vector<std::uint64_t> bridge_seeds_;
    std::uint64_t tail_seed_;
};

// Empty bridge_seeds: bridge seeds are derived from the index.
StitchedComplexPath stitch_complex(const std::vector<std::complex<double>>& increments,
                                   double sigma_sq,
                                   const std::vector<std::uint64_t>& bridge_seeds,
                                   std::uint64_t tail_seed = 0);

}  // namespace canonsys
