#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace canonsys {

struct TestReport {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
};

// One-sample Kolmogorov-Smirnov test with the asymptotic p-value
// (Stephens' small-sample correction of the argument).
TestReport ks_test(const std::vector<double>& samples, const std::function<double(double)>& cdf);

// Kuiper's V for angles (taken mod 2*pi) against the uniform law on the circle.
TestReport circular_uniformity(const std::vector<double>& angles);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
};

// Ordinary least squares y = slope*x + intercept.
SlopeFit slope_fit(const std::vector<double>& x, const std::vector<double>& y);

// Asymptotic tail probabilities.
double kolmogorov_q(double lambda);
double kuiper_q(double lambda);

// Summation helpers operating on a sorted copy, so results do not depend on
// input order.
double mean(std::vector<double> v);
double variance(std::vector<double> v);  // unbiased
double quantile(std::vector<double> v, double q);  // linear interpolation (type 7)
double median(std::vector<double> v);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct Quartiles {
    double p25 = 0.0;
    double p50 = 0.0;
    double p75 = 0.0;
};
Quartiles quartiles(const std::vector<double>& v);

// CDFs used by the experiments.
double gamma_cdf(double x, double shape, double scale);
double exponential_cdf(double x, double mean);
double normal_cdf(double x);

}  // namespace canonsys
