#pragma once

namespace canonsys {

struct AiryValue {
    double ai;
    double ai_prime;
    double bi;
    double bi_prime;
};

// Airy functions on the real line, |x| <= 1e4. Power series on the central
// range, asymptotic expansions outside it; Ai on (2, 9] is obtained by Taylor
// stepping down from the asymptotic values at 9. Bi overflows to +inf for
// x above roughly 104 and Ai underflows to 0 in the same region.
AiryValue airy_eval(double x);

}  // namespace canonsys
