#include "canonsys/stats.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

#include "canonsys/errors.hpp"

namespace canonsys {

namespace {

void require_finite(const std::vector<double>& v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw DataError(std::string(what) + ": non-finite sample");
}

double sorted_sum(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-18) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

double kuiper_q(double lambda) {
    if (lambda < 0.4) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double l2 = static_cast<double>(k) * k * lambda * lambda;
        double term = 2.0 * (4.0 * l2 - 1.0) * std::exp(-2.0 * l2);
        sum += term;
        if (std::abs(term) < 1e-18) break;
    }
    return std::clamp(sum, 0.0, 1.0);
}

TestReport ks_test(const std::vector<double>& samples, const std::function<double(double)>& cdf) {
    require_finite(samples, "ks_test");
    if (samples.size() < 8) throw DataError("ks_test: need at least 8 samples");
    std::vector<double> s = samples;
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double d = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double f = cdf(s[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    double sn = std::sqrt(n);
    TestReport r;
    r.statistic = d;
    r.n = s.size();
    r.p_value = kolmogorov_q((sn + 0.12 + 0.11 / sn) * d);
    return r;
}

TestReport circular_uniformity(const std::vector<double>& angles) {
    require_finite(angles, "circular_uniformity");
    if (angles.size() < 8) throw DataError("circular_uniformity: need at least 8 samples");
    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<double> u(angles.size());
    for (std::size_t i = 0; i < angles.size(); ++i) {
        double a = std::fmod(angles[i], two_pi);
        if (a < 0.0) a += two_pi;
        u[i] = a / two_pi;
    }
    std::sort(u.begin(), u.end());
    const double n = static_cast<double>(u.size());
    double dplus = 0.0;
    double dminus = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dplus = std::max(dplus, static_cast<double>(i + 1) / n - u[i]);
        dminus = std::max(dminus, u[i] - static_cast<double>(i) / n);
    }
    double v = dplus + dminus;
    double sn = std::sqrt(n);
    TestReport r;
    r.statistic = v;
    r.n = u.size();
    r.p_value = kuiper_q((sn + 0.155 + 0.24 / sn) * v);
    return r;
}

SlopeFit slope_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DataError("slope_fit: length mismatch");
    if (x.size() < 3) throw DataError("slope_fit: need at least 3 points");
    require_finite(x, "slope_fit");
    require_finite(y, "slope_fit");
    std::vector<std::pair<double, double>> pts(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) pts[i] = {x[i], y[i]};
    std::sort(pts.begin(), pts.end());
    const double n = static_cast<double>(pts.size());
    double mx = 0.0;
    double my = 0.0;
    for (auto& p : pts) {
        mx += p.first;
        my += p.second;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (auto& p : pts) {
        sxx += (p.first - mx) * (p.first - mx);
        sxy += (p.first - mx) * (p.second - my);
    }
    if (!(sxx > 0.0)) throw DataError("slope_fit: x values are all equal");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (auto& p : pts) {
        double r = p.second - f.intercept - f.slope * p.first;
        ssr += r * r;
    }
    f.stderr_slope = std::sqrt(ssr / (n - 2.0) / sxx);
    return f;
}

double mean(std::vector<double> v) {
    if (v.empty()) throw DataError("mean: empty sample");
    return sorted_sum(v) / static_cast<double>(v.size());
}

double variance(std::vector<double> v) {
    if (v.size() < 2) throw DataError("variance: need at least 2 samples");
    double m = mean(v);
    for (double& x : v) x = (x - m) * (x - m);
    return sorted_sum(v) / static_cast<double>(v.size() - 1);
}

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw DataError("quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw ParameterError("quantile: q outside [0, 1]");
    std::sort(v.begin(), v.end());
    double pos = q * static_cast<double>(v.size() - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

Quartiles quartiles(const std::vector<double>& v) {
    return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw DataError("pearson: need matching samples of size >= 3");
    std::vector<std::pair<double, double>> pts(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) pts[i] = {x[i], y[i]};
    std::sort(pts.begin(), pts.end());
    const double n = static_cast<double>(pts.size());
    double mx = 0.0;
    double my = 0.0;
    for (auto& p : pts) {
        mx += p.first;
        my += p.second;
    }
    mx /= n;
    my /= n;
    double sxx = 0.0;
    double syy = 0.0;
    double sxy = 0.0;
    for (auto& p : pts) {
        sxx += (p.first - mx) * (p.first - mx);
        syy += (p.second - my) * (p.second - my);
        sxy += (p.first - mx) * (p.second - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw DataError("pearson: degenerate sample");
    return sxy / std::sqrt(sxx * syy);
}

double gamma_cdf(double x, double shape, double scale) {
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(shape, x / scale);
}

double exponential_cdf(double x, double mean_value) { return x <= 0.0 ? 0.0 : -std::expm1(-x / mean_value); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace canonsys
