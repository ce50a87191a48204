#include "canonsys/specfun.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "canonsys/errors.hpp"

namespace canonsys {

namespace {

using real = long double;

constexpr real kAi0 = 0.355028053887817239260063186004183176L;
constexpr real kAiP0 = -0.258819403792806798405183560189203963L;
constexpr real kSqrt3 = 1.732050807568877293527446341505872367L;
constexpr double kSeriesLimit = 9.0;
constexpr double kAiSeriesUpper = 2.0;
constexpr int kMaxTerms = 400;

struct Pair {
    real y;
    real dy;
};

// Power series about 0 of the solution of y'' = x y with y(0)=a0, y'(0)=a1.
Pair maclaurin(real a0, real a1, real x) {
    std::array<real, kMaxTerms> a{};
    a[0] = a0;
    a[1] = a1;
    a[2] = 0.0L;
    real y = a[0] + a[1] * x;
    real dy = a[1];
    real xnm1 = x * x;  // x^(n-1) for n = 3
    real block = 0.0L;  // magnitude of the current three-term block
    for (int n = 3; n < kMaxTerms; ++n) {
        a[n] = a[n - 3] / (static_cast<real>(n) * static_cast<real>(n - 1));
        real xn = xnm1 * x;
        real term = a[n] * xn;
        real dterm = static_cast<real>(n) * a[n] * xnm1;
        y += term;
        dy += dterm;
        xnm1 = xn;
        block += std::fabs(term) + std::fabs(dterm);
        if (n % 3 == 2) {
            if (n > 30 && block <= 1e-21L * (std::fabs(y) + std::fabs(dy))) break;
            block = 0.0L;
        }
    }
    return {y, dy};
}

// Taylor expansion of the same ODE about x0, evaluated at x0 + h.
Pair taylor_step(real y0, real dy0, real x0, real h) {
    // y = sum c_k h^k, c_{k+2} = (x0 c_k + c_{k-1}) / ((k+2)(k+1)).
    std::array<real, 80> c{};
    c[0] = y0;
    c[1] = dy0;
    c[2] = x0 * y0 / 2.0L;
    real y = c[0] + c[1] * h + c[2] * h * h;
    real dy = c[1] + 2.0L * c[2] * h;
    real hk = h * h;  // h^k for k = 2
    for (int k = 1; k + 2 < 80; ++k) {
        int m = k + 2;
        c[m] = (x0 * c[k] + c[k - 1]) / (static_cast<real>(m) * static_cast<real>(m - 1));
        real hm1 = hk;  // h^(m-1)
        hk *= h;        // h^m
        y += c[m] * hk;
        dy += static_cast<real>(m) * c[m] * hm1;
        if (m > 12 && std::fabs(c[m] * hk) < 1e-22L * std::fabs(y)) break;
    }
    return {y, dy};
}

// u_k and v_k of the Airy asymptotic expansions.
struct AsymCoeffs {
    std::array<real, 40> u{};
    std::array<real, 40> v{};
    AsymCoeffs() {
        u[0] = 1.0L;
        v[0] = 1.0L;
        for (int k = 1; k < 40; ++k) {
            real kk = static_cast<real>(k);
            u[k] = u[k - 1] * (6 * kk - 5) * (6 * kk - 3) * (6 * kk - 1) / ((2 * kk - 1) * 216.0L * kk);
            v[k] = -u[k] * (6 * kk + 1) / (6 * kk - 1);
        }
    }
};

const AsymCoeffs& asym() {
    static const AsymCoeffs coeffs;
    return coeffs;
}

// Truncated sums  sum_k s^k c_k / zeta^k  stopped at the smallest term.
real asym_sum(const std::array<real, 40>& c, real zeta, real sign) {
    real sum = 0.0L;
    real pw = 1.0L;
    real prev = INFINITY;
    for (int k = 0; k < 40; ++k) {
        real term = c[k] * pw;
        if (std::fabs(term) > prev) break;
        sum += term;
        prev = std::fabs(term);
        if (prev < 1e-20L * std::fabs(sum)) break;
        pw *= sign / zeta;
    }
    return sum;
}

// Even and odd alternating parts for the oscillatory expansions.
void asym_even_odd(const std::array<real, 40>& c, real zeta, real& even, real& odd) {
    even = 0.0L;
    odd = 0.0L;
    real prev = INFINITY;
    real pw = 1.0L;
    for (int k = 0; k < 40; ++k) {
        real term = c[k] * pw;
        if (std::fabs(term) > prev) break;
        prev = std::fabs(term);
        real sgn = ((k / 2) % 2 == 0) ? 1.0L : -1.0L;
        if (k % 2 == 0)
            even += sgn * term;
        else
            odd += sgn * term;
        if (prev < 1e-20L) break;
        pw /= zeta;
    }
}

AiryValue asymptotic_positive(real x) {
    const auto& ac = asym();
    real zeta = 2.0L / 3.0L * x * std::sqrt(x);
    real x14 = std::sqrt(std::sqrt(x));
    real sqpi = std::sqrt(std::numbers::pi_v<real>);
    real em = std::exp(-zeta);
    real ep = std::exp(zeta);
    AiryValue out{};
    out.ai = static_cast<double>(em / (2.0L * sqpi * x14) * asym_sum(ac.u, zeta, -1.0L));
    out.ai_prime = static_cast<double>(-x14 * em / (2.0L * sqpi) * asym_sum(ac.v, zeta, -1.0L));
    out.bi = static_cast<double>(ep / (sqpi * x14) * asym_sum(ac.u, zeta, 1.0L));
    out.bi_prime = static_cast<double>(x14 * ep / sqpi * asym_sum(ac.v, zeta, 1.0L));
    return out;
}

AiryValue asymptotic_negative(real x) {
    const auto& ac = asym();
    real z = -x;
    real zeta = 2.0L / 3.0L * z * std::sqrt(z);
    real z14 = std::sqrt(std::sqrt(z));
    real sqpi = std::sqrt(std::numbers::pi_v<real>);
    real ph = zeta - std::numbers::pi_v<real> / 4.0L;
    real cs = std::cos(ph);
    real sn = std::sin(ph);
    real ue, uo, ve, vo;
    asym_even_odd(ac.u, zeta, ue, uo);
    asym_even_odd(ac.v, zeta, ve, vo);
    AiryValue out{};
    out.ai = static_cast<double>((cs * ue + sn * uo) / (sqpi * z14));
    out.ai_prime = static_cast<double>(z14 / sqpi * (sn * ve - cs * vo));
    out.bi = static_cast<double>((-sn * ue + cs * uo) / (sqpi * z14));
    out.bi_prime = static_cast<double>(z14 / sqpi * (cs * ve + sn * vo));
    return out;
}

}  // namespace

AiryValue airy_eval(double x) {
    if (!std::isfinite(x) || std::fabs(x) > 1e4) throw DomainError("airy_eval: |x| must not exceed 1e4");
    if (x < -kSeriesLimit) return asymptotic_negative(x);
    if (x > kSeriesLimit) return asymptotic_positive(x);

    real xl = x;
    Pair bi = maclaurin(kSqrt3 * kAi0, -kSqrt3 * kAiP0, xl);
    AiryValue out{};
    out.bi = static_cast<double>(bi.y);
    out.bi_prime = static_cast<double>(bi.dy);
    if (x <= kAiSeriesUpper) {
        Pair ai = maclaurin(kAi0, kAiP0, xl);
        out.ai = static_cast<double>(ai.y);
        out.ai_prime = static_cast<double>(ai.dy);
        return out;
    }
    // Ai decays on (2, 9]; the series cancels badly there, so integrate the ODE
    // from the asymptotic data at 9 in the direction where Ai grows.
    AiryValue start = asymptotic_positive(static_cast<real>(kSeriesLimit));
    real y = start.ai;
    real dy = start.ai_prime;
    real x0 = kSeriesLimit;
    const real hmax = 0.25L;
    while (x0 > xl) {
        real h = std::fmax(xl - x0, -hmax);
        Pair p = taylor_step(y, dy, x0, h);
        y = p.y;
        dy = p.dy;
        x0 += h;
    }
    out.ai = static_cast<double>(y);
    out.ai_prime = static_cast<double>(dy);
    return out;
}

}  // namespace canonsys
