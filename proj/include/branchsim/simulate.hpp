#pragma once
#include <cstdint>
#include <vector>

#include "branchsim/model.hpp"
#include "branchsim/rng.hpp"

namespace branchsim {

struct SimConfig {
    double horizon = 1.0;
    std::vector<double> snapshot_times; // sorted, each in [0, horizon]
    double dt = 1e-3;                   // Euler step for diffusive motion
    std::uint64_t seed = 1;
    std::size_t max_particles = 1000000; // live-population explosion guard
    bool record_dead = true; // false: streaming mode, only snapshots + counts
};

// Ulam-Harris labelling is (parent index, child rank); rank is 1-based,
// roots have parent -1 and rank 0.
struct Particle {
    std::int64_t parent = -1;
    std::int32_t rank = 0;
    double alpha = 0.0; // birth time
    double beta = 0.0;  // death (division) time; +inf if alive at horizon
};

struct Snapshot {
    double t = 0.0;
    std::vector<double> states;       // dim-flattened, alive particles
    std::vector<std::int64_t> labels; // arena indices (full mode only)
};

struct SimResult {
    int dim = 1;
    std::vector<Particle> particles;  // full mode only
    std::vector<double> birth_states; // dim per particle, full mode
    std::vector<double> death_states; // state at beta (or horizon), full mode
    std::vector<Snapshot> snapshots;
    std::size_t created = 0;
    std::size_t peak_alive = 0;
    std::size_t final_alive = 0;
    bool truncated = false;        // explosion guard fired; result is partial
    double truncation_time = 0.0;
    std::uint64_t seed = 0;
};

struct EmpiricalMeasure {
    int dim = 1;
    std::vector<double> states; // dim-flattened
    std::vector<double> weights;
    std::size_t size() const { return weights.size(); }
};

SimResult simulate(const ModelSpec& m, StateView x0, const SimConfig& cfg);
// Multiple initial particles (macroscopic scalings); states dim-flattened.
SimResult simulate_population(const ModelSpec& m, const std::vector<double>& init_states,
                              const SimConfig& cfg);

// Snapshot at time t, which must be one of cfg.snapshot_times (no interpolation).
EmpiricalMeasure snapshot(const SimResult& res, double t);
double integrate(const EmpiricalMeasure& mu, const std::function<double(StateView)>& f);

// (state, beta) for every particle dead by time T. Requires full recording.
std::vector<std::pair<std::vector<double>, double>> dead_set(const SimResult& res, double T);

// Two equal-mitosis populations driven by one shared tree (same constant-rate
// lifetimes), started from sizes x0 and y0. The per-snapshot displacement sum
// sum_u |X_u - Y_u| is conserved and equals |x0 - y0|.
struct CoupledSnapshot {
    double t = 0.0;
    std::vector<double> x_states, y_states;
    double displacement_sum = 0.0;
};
struct CoupledResult {
    std::vector<CoupledSnapshot> snapshots;
    std::size_t created = 0;
    bool truncated = false;
    std::uint64_t seed = 0;
};
CoupledResult coupled_mitosis_simulate(double r0, double x0, double y0, const SimConfig& cfg);

} // namespace branchsim
