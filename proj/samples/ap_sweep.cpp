// Sweep the power-weight exponent and print the sampled A_2 characteristic
// against its certified envelope.

#include <cstdio>

#include "wlab/weights.hpp"

int main() {
    using namespace wlab;
    const Box box = Box::cube(-1.0, 1.0, 2);
    const UniformGrid grid(box, 256);
    const BallFamily fam = make_ball_family(grid, box, 16, 4.0 * grid.max_h(), 2.0, 6);
    std::printf("%8s %14s %14s %14s\n", "alpha", "sampled", "centered", "envelope");
    for (double alpha : {-1.0, -0.5, -0.25, 0.25, 0.5, 1.0}) {
        const Weight w = Weight::power(alpha, 2);
        const ApEstimate est = ap_characteristic(w, fam, 2.0);
        std::printf("%8.2f %14.6f %14.6f %14.6f\n", alpha, est.value,
                    centered_ball_ap_product(alpha, 2, 2.0), power_ap_bound(2, alpha));
    }
    return 0;
}
