// Library walkthrough: solve one weight, compare against a window strategy,
// then replay the solved table in the simulator.

#include <cstdio>

#include "agedist/agedist.hpp"

int main() {
    using namespace agedist;
    const Model m(ImportanceDist({1.0, 20.0}, {0.7, 0.3}), InterspeakDist::geometric(0.2));

    const double eta = 1.0;
    const PolicySolution opt = policy_iteration(m, eta);
    std::printf("eta=%.2f  K=%zu  J*=%.6f  delta_e=%.6f  d=%.6f  |B1|=%zu\n", eta, opt.K, opt.lambda, opt.delta_e, opt.d,
                opt.b1_set.size());

    const StrategyCurvePoint s2 = s2_point(m, opt.K);
    std::printf("S2 with the same window: cost %.6f\n", s2.d + eta * s2.delta_e);

    SimConfig cfg;
    cfg.seed = 7;
    const SimResult sim = simulate_policy(m, cfg, TablePolicy(opt), opt.K);
    std::printf("simulated: delta_e=%.4f +- %.4f  d=%.4f +- %.4f\n", sim.delta_e, sim.se_delta, sim.d, sim.se_d);
    return 0;
}
