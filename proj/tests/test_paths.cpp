#include <cmath>
#include <complex>
#include <cstring>
#include <sstream>

#include "canonsys/errors.hpp"
#include "canonsys/paths.hpp"
#include "canonsys/rng.hpp"
#include "canonsys/stats.hpp"
#include "doctest.h"

using namespace canonsys;

TEST_CASE("sample_path starts at the origin and is deterministic") {
    for (std::uint64_t seed : {0ULL, 1ULL, 7ULL, 123456789ULL}) {
        BrownianPath p = sample_path(seed, 2.0, 0.25);
        CHECK(p.at(0.0) == 0.0);
    }
    BrownianPath a = sample_path(7, 1.0, 0.125);
    BrownianPath b = sample_path(7, 1.0, 0.125);
    double va = a.at(1.0);
    double vb = b.at(1.0);
    CHECK(std::memcmp(&va, &vb, sizeof(double)) == 0);
    CHECK(a.at(1.0) == a.at(1.0));
}

TEST_CASE("sample_path rejects nonpositive parameters") {
    CHECK_THROWS_AS(sample_path(1, 0.0, 0.1), ParameterError);
    CHECK_THROWS_AS(sample_path(1, 1.0, -0.1), ParameterError);
}

TEST_CASE("variance of B(1) over independent seeds") {
    std::vector<double> v;
    for (std::uint64_t s = 0; s < 10000; ++s) v.push_back(sample_path(s, 1.0, 0.25).at(1.0));
    CHECK(variance(v) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("refine keeps endpoints and is order independent") {
    BrownianPath p = sample_path(11, 1.0, 0.5);
    double left = p.at(0.0);
    double right = p.at(0.5);
    BrownianPath q = refine(p, 0.0, 0.5);
    CHECK(q.at(0.0) == left);
    CHECK(q.at(0.5) == right);
    CHECK(q.has_knot(0.25));
    BrownianPath q2 = refine(p, 0.0, 0.5);
    CHECK(q.at(0.25) == q2.at(0.25));

    // Refining in a different order yields the same values.
    BrownianPath r1 = refine(refine(p, 0.0, 0.5), 0.5, 1.0);
    BrownianPath r2 = refine(refine(p, 0.5, 1.0), 0.0, 0.5);
    CHECK(r1.at(0.25) == r2.at(0.25));
    CHECK(r1.at(0.75) == r2.at(0.75));
    CHECK(p.at(0.5) == r1.at(0.5));

    CHECK_THROWS_AS(refine(p, 0.0, 1.0), StructuralError);
    CHECK_THROWS_AS(refine(p, 0.1, 0.5), StructuralError);
}

TEST_CASE("pinned bridge midpoint variance") {
    std::vector<double> mids;
    for (std::uint64_t s = 0; s < 10000; ++s) mids.push_back(bridge_midpoint(s, 0.0, 1.0, 0.0, 0.0));
    CHECK(variance(mids) == doctest::Approx(0.25).epsilon(0.08));
    CHECK(std::abs(variance(mids) - 0.25) <= 0.02);
}

TEST_CASE("normalized increments are standard normal (KS)") {
    std::vector<double> z;
    for (std::uint64_t s = 0; s < 10000; ++s) {
        BrownianPath p = sample_path(s + 500000, 1.0, 0.5);
        p.refine_in_place(0.0, 0.5);
        z.push_back((p.at(0.5) - p.at(0.25)) / std::sqrt(0.25));
    }
    TestReport r = ks_test(z, normal_cdf);
    CHECK(r.p_value > 0.01);
}

TEST_CASE("walker reproduces materialized knots") {
    BrownianPath p = sample_path(99, 2.0, 0.5);
    p.refine_to(0.0625);
    DyadicWalker w(99, 0.5);
    while (w.time() < 2.0) {
        w.step(0.0625, 2.0);
        REQUIRE(p.has_knot(w.time()));
        CHECK(p.at(w.time()) == w.value());
    }
    // Coarser and finer traversals agree at shared times.
    DyadicWalker coarse(99, 0.5);
    while (coarse.time() < 2.0) {
        coarse.step(0.25, 2.0);
        CHECK(p.at(coarse.time()) == coarse.value());
    }
}

TEST_CASE("walker ends exactly at a non-dyadic stop time") {
    DyadicWalker w(5, 1.0);
    double t_stop = 0.3;
    while (w.time() < t_stop) w.step(0.5, t_stop);
    CHECK(w.time() == t_stop);
    BrownianPath p = sample_path(5, 0.3, 1.0);
    CHECK(p.at(0.3) == w.value());
}

TEST_CASE("refinement consistency of a smooth stochastic integral") {
    // int_0^1 cos(t) dB on a grid and on its dyadic refinement: difference
    // shrinks like the Riemann-sum error (order h in mean square).
    auto integral = [](std::uint64_t seed, double h) {
        DyadicWalker w(seed, 1.0);
        double sum = 0.0;
        while (w.time() < 1.0) {
            double t = w.time();
            double b0 = w.value();
            w.step(h, 1.0);
            sum += std::cos(t) * (w.value() - b0);
        }
        return sum;
    };
    double e1 = 0.0;
    double e2 = 0.0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        double a = integral(s, 1.0 / 64);
        double b = integral(s, 1.0 / 128);
        double c = integral(s, 1.0 / 256);
        e1 += (a - b) * (a - b);
        e2 += (b - c) * (b - c);
    }
    double ratio = std::sqrt(e1 / e2);
    CHECK(ratio > 1.5);
    CHECK(ratio < 2.7);
}

TEST_CASE("complex path has independent components with E|W|^2 = 2t") {
    std::vector<double> re;
    std::vector<double> im;
    std::vector<double> prod;
    for (std::uint64_t s = 0; s < 4000; ++s) {
        ComplexBrownianPath w(s, 1.0, 0.5);
        auto v = w.at(1.0);
        re.push_back(v.real());
        im.push_back(v.imag());
        prod.push_back(v.real() * v.imag());
    }
    CHECK(variance(re) + variance(im) == doctest::Approx(2.0).epsilon(0.08));
    CHECK(std::abs(mean(prod)) < 0.08);
}

TEST_CASE("stitched complex path") {
    CHECK_THROWS_AS(stitch_complex({}, 0.1, {}), ParameterError);
    CHECK_THROWS_AS(stitch_complex({{1.0, 0.0}}, 0.0, {}), ParameterError);

    std::complex<double> w(0.3, -1.2);
    StitchedComplexPath one = stitch_complex({w}, 0.5, {});
    auto v = one.sample({0.0, 0.5});
    CHECK(v[0] == std::complex<double>(0.0, 0.0));
    CHECK(v[1] == w);

    std::vector<std::complex<double>> inc{{1.0, 2.0}, {-0.5, 0.25}, {0.125, -3.0}};
    StitchedComplexPath p = stitch_complex(inc, 0.2, {1, 2, 3});
    std::vector<double> times{0.0, 0.05, 0.2, 0.31, 0.4, 0.55, 0.6, 0.9};
    auto vals = p.sample(times);
    CHECK(vals[0] == std::complex<double>(0.0, 0.0));
    CHECK(vals[2] == inc[0]);
    CHECK(vals[4] == inc[0] + inc[1]);
    CHECK(vals[6] == inc[0] + inc[1] + inc[2]);
    for (std::size_t n = 0; n <= 3; ++n) {
        std::complex<double> sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += inc[j];
        CHECK(p.knot_value(n) == sum);
    }
}

TEST_CASE("stitched paths with Gaussian knots have the Brownian variance") {
    // Increments W_j with E|Re W_j|^2 = sigma^2; bridge filled in between.
    const double sigma_sq = 0.1;
    const double s = 0.73;
    std::vector<double> re;
    for (std::uint64_t trial = 0; trial < 10000; ++trial) {
        std::vector<std::complex<double>> inc;
        for (std::uint64_t j = 0; j < 10; ++j) {
            double a = std::sqrt(sigma_sq) * keyed_normal(derive_seed(trial, {j, 1}));
            double b = std::sqrt(sigma_sq) * keyed_normal(derive_seed(trial, {j, 2}));
            inc.emplace_back(a, b);
        }
        StitchedComplexPath p = stitch_complex(inc, sigma_sq, {}, derive_seed(trial, {77}));
        re.push_back(p.sample({s})[0].real());
    }
    CHECK(variance(re) == doctest::Approx(s).epsilon(0.05));
}

TEST_CASE("path CSV dump round-trips in hex") {
    BrownianPath p = sample_path(3, 1.0, 0.25);
    std::ostringstream os;
    p.write_csv(os);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "t,value");
    std::size_t i = 0;
    while (std::getline(is, line)) {
        auto comma = line.find(',');
        double t = std::strtod(line.substr(0, comma).c_str(), nullptr);
        double v = std::strtod(line.substr(comma + 1).c_str(), nullptr);
        CHECK(t == p.knots()[i].t);
        CHECK(v == p.knots()[i].value);
        ++i;
    }
    CHECK(i == p.knots().size());
}

TEST_CASE("stitched path with explicit knot times") {
    std::vector<std::complex<double>> inc{{0.5, 0.5}, {-1.0, 0.25}};
    std::vector<double> knots{0.0, 0.3, 0.45};
    StitchedComplexPath p(inc, knots, {}, 9);
    auto v = p.sample({0.0, 0.1, 0.3, 0.4, 0.45, 1.0});
    CHECK(v[0] == std::complex<double>(0.0, 0.0));
    CHECK(v[2] == inc[0]);
    CHECK(v[4] == inc[0] + inc[1]);
    CHECK(p.knot_time(2) == 0.45);
    CHECK_THROWS_AS(StitchedComplexPath(inc, std::vector<double>{0.0, 0.3}, {}, 9), ParameterError);
    CHECK_THROWS_AS(StitchedComplexPath(inc, std::vector<double>{0.0, 0.3, 0.3}, {}, 9), ParameterError);

    // Interior variance of a short last interval matches its length.
    std::vector<double> mid;
    for (std::uint64_t s = 0; s < 4000; ++s) {
        StitchedComplexPath q({{0.0, 0.0}, {0.0, 0.0}}, std::vector<double>{0.0, 1.0, 1.2}, {}, s);
        mid.push_back(q.sample({1.1})[0].real());
    }
    // Bridge variance at the midpoint: len/4 = 0.05.
    CHECK(variance(mid) == doctest::Approx(0.05).epsilon(0.08));
}
