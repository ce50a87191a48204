#include <cmath>
#include <numbers>

#include "canonsys/integrate.hpp"
#include "doctest.h"

using namespace canonsys;

TEST_CASE("zero drift and diffusion keep the initial state") {
    BrownianPath driver = sample_path(1, 1.0, 0.5);
    StepPolicy pol;
    pol.dt_max = 0.01;
    auto zero = [](const State<2>&, double) { return State<2>{0.0, 0.0}; };
    auto path = integrate_sde<2>(zero, zero, driver, 0.0, 1.0, State<2>{1.5, -2.0}, pol);
    for (const auto& s : path.states) {
        CHECK(s[0] == 1.5);
        CHECK(s[1] == -2.0);
    }
    CHECK(path.grid.back() == 1.0);
}

TEST_CASE("linear ODE reaches e") {
    BrownianPath driver = sample_path(1, 1.0, 1.0);
    StepPolicy pol;
    pol.dt_max = 1.0 / 1024;
    auto drift = [](const State<1>& x, double) { return State<1>{x[0]}; };
    auto none = [](const State<1>&, double) { return State<1>{0.0}; };
    auto path = integrate_sde<1>(drift, none, driver, 0.0, 1.0, State<1>{1.0}, pol);
    double rel = std::abs(path.states.back()[0] - std::numbers::e) / std::numbers::e;
    CHECK(rel <= 10.0 * pol.dt_max);
}

TEST_CASE("Euler-Maruyama strong order one half on geometric Brownian motion") {
    auto strong_error = [](double dt) {
        double sum = 0.0;
        for (std::uint64_t s = 0; s < 200; ++s) {
            BrownianPath driver = sample_path(1000 + s, 1.0, 1.0);
            StepPolicy pol;
            pol.dt_max = dt;
            auto drift = [](const State<1>&, double) { return State<1>{0.0}; };
            auto diff = [](const State<1>& x, double) { return State<1>{x[0]}; };
            auto path = integrate_sde<1>(drift, diff, driver, 0.0, 1.0, State<1>{1.0}, pol);
            // Exact solution on the same driver: W(1) is the sum of the increments.
            DyadicWalker w(1000 + s, 1.0);
            w.step(1.0, 1.0);
            double exact = std::exp(w.value() - 0.5);
            sum += std::abs(path.states.back()[0] - exact);
        }
        return sum / 200.0;
    };
    double e1 = strong_error(1.0 / 64);
    double e2 = strong_error(1.0 / 128);
    double e3 = strong_error(1.0 / 256);
    double r1 = e1 / e2;
    double r2 = e2 / e3;
    double ratio = std::sqrt(r1 * r2);
    CHECK(ratio == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("determinism and blow-up flag") {
    BrownianPath driver = sample_path(8, 1.0, 0.5);
    StepPolicy pol;
    pol.dt_max = 0.01;
    auto drift = [](const State<1>& x, double) { return State<1>{-x[0]}; };
    auto diff = [](const State<1>&, double) { return State<1>{1.0}; };
    auto a = integrate_sde<1>(drift, diff, driver, 0.0, 1.0, State<1>{0.0}, pol);
    auto b = integrate_sde<1>(drift, diff, driver, 0.0, 1.0, State<1>{0.0}, pol);
    REQUIRE(a.states.size() == b.states.size());
    for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i][0] == b.states[i][0]);

    auto explode = [](const State<1>& x, double) { return State<1>{x[0] * x[0] * 1e10}; };
    auto none = [](const State<1>&, double) { return State<1>{0.0}; };
    auto c = integrate_sde<1>(explode, none, driver, 0.0, 1.0, State<1>{1.0}, pol);
    CHECK(c.blown_up);
    CHECK(c.last_good_time < 1.0);
    for (const auto& s : c.states) CHECK(std::isfinite(s[0]));
}

TEST_CASE("step policy caps and floor") {
    StepPolicy pol;
    pol.dt_max = 0.1;
    pol.phase_resolution = 0.1;
    pol.singularity_factor = 0.05;
    pol.hard_floor = 1e-6;
    pol.singular_c = 1.0;
    bool floor = false;
    CHECK(pol.select(0.0, 0.0, floor) == doctest::Approx(0.05));
    CHECK(pol.select(0.0, 10.0, floor) == doctest::Approx(0.01));
    CHECK(pol.select(0.9, 0.0, floor) == doctest::Approx(0.005));
    CHECK_FALSE(floor);
    CHECK(pol.select(1.0, 0.0, floor) == 1e-6);
    CHECK(floor);
    StepPolicy bad;
    bad.dt_max = -1.0;
    CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("matrix RK4: identity, rotation and order four") {
    auto zero = [](double) { return CMat2::Zero().eval(); };
    auto id = integrate_matrix_ode(zero, 0.0, 1.0, CMat2::Identity(), 10);
    CHECK((id.values.back() - CMat2::Identity()).norm() == 0.0);

    const double z = 2.0 * std::numbers::pi;
    CMat2 gen;
    gen << 0.0, -z / 2.0, z / 2.0, 0.0;
    auto rot = [&](double) { return gen; };
    auto err = [&](std::size_t n) {
        auto p = integrate_matrix_ode(rot, 0.0, 1.0, CMat2::Identity(), n);
        return (p.values.back() + CMat2::Identity()).cwiseAbs().maxCoeff();
    };
    CHECK(err(400) < 1e-8);
    double ratio = err(50) / err(100);
    CHECK(ratio == doctest::Approx(16.0).epsilon(0.3));
}
