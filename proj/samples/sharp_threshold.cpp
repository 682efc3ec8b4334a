// Dyadic annulus scan of the explicit solution: the gradient's weighted L^p
// mass is finite exactly below the threshold p* = (2a + n + 2)/(2a).

#include <cstdio>

#include "wlab/counterexample.hpp"

int main() {
    using namespace wlab;
    const ExplicitField field(3, 0.25);
    std::printf("p* = %.4f\n", integrability_threshold(field.n, field.alpha));
    for (double p : {8.0, 10.0, 11.0, 12.0, 14.0}) {
        const AnnulusScan scan = annulus_scan(field, p, 0, 12);
        std::printf("p = %5.1f  fitted exponent = %+.4f  verdict = %s\n", p,
                    scan.fitted_exponent, scan.verdict.c_str());
    }
    return 0;
}
