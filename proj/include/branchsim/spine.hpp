#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "branchsim/model.hpp"
#include "branchsim/rng.hpp"

namespace branchsim {

// One reproduction event of the auxiliary process: the chosen family size k,
// the selected child j (1-based), the shared placement variable theta, and the
// state the process jumps to.
struct AuxJump {
    std::vector<double> state;
    int k = 0;
    int j = 0;
    double theta = 0.0;
};

struct AuxConfig {
    double dt = 1e-3;           // step size for diffusive models
    int quad_order = 16;        // quadrature order for the jump intensity
    std::uint64_t max_events = 1ull << 40;
};

// Drift of the auxiliary process: the original drift plus the logarithmic
// gradient correction 2*sigma(x)*grad V(x)/V(x).
void aux_drift(const ModelSpec& m, const EigenPair& eig, StateView x, StateOut out);

// Total jump intensity of the auxiliary process at x.
double aux_jump_rate(const ModelSpec& m, const EigenPair& eig, StateView x, int quad_order = 16);

// Sample one reproduction event at x: k with probability proportional to its
// family weight, then a child weighted by V at its landing point.
AuxJump aux_jump_sample(const ModelSpec& m, const EigenPair& eig, StateView x, Rng& rng);

// Simulate one auxiliary path started at x0 and return its states at the
// requested times (sorted ascending). Output is row-major, times.size() x dim.
std::vector<double> simulate_aux(const ModelSpec& m, const EigenPair& eig, StateView x0,
                                 std::span<const double> times, Rng& rng,
                                 const AuxConfig& acfg = {});

// Draw n_samples states of the auxiliary process along one long trajectory,
// recorded every thin_interval time units after burn_in. Output is row-major.
std::vector<double> long_run_distribution(const ModelSpec& m, const EigenPair& eig, StateView x0,
                                          std::size_t n_samples, double burn_in,
                                          double thin_interval, std::uint64_t seed,
                                          const AuxConfig& acfg = {});

} // namespace branchsim
