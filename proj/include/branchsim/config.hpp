#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "branchsim/errors.hpp"
#include "branchsim/model.hpp"
#include "branchsim/pde.hpp"

namespace branchsim {

// Line-oriented config: [section] headers, key = value pairs, # or ; comments,
// numbers in decimal with scientific notation.
struct IniFile {
    // insertion-ordered sections, each with insertion-ordered (key, value)
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>
        sections;

    const std::vector<std::pair<std::string, std::string>>* find(const std::string& name) const;
    static IniFile parse_string(const std::string& text, const std::string& origin);
    static IniFile parse_file(const std::string& path);
};

struct ModelCfg {
    std::string kind = "mitosis"; // mitosis | parasite | ou | fragmentation
    std::string rate = "constant"; // constant | affine | plateau | power
    double a = 1.0;                // rate coefficients: constant a; affine a x + b;
    double b = 0.0;                // plateau a min(x, xstar) + b; power a x^p
    double xstar = 10.0;
    double p = 2.0;
    std::string split = "half"; // half | uniform | beta22
    double growth = 1.0;        // parasite motion dX = growth X dt + sqrt(2 diff X) dW
    double diffusivity = 0.0;
    int dim = 1;       // ou
    double sigma = 1.0; // ou noise
    double g = 1.0;     // ou mean reversion
    std::vector<double> fractions = {0.5, 0.5}; // fragmentation partition
    double weight = 1.0;                        // fragmentation partition mass
    double vpower = 2.0;                        // fragmentation eigenfunction power
};

struct EigenCfg {
    std::string kind = "closed-form"; // closed-form | numeric | none
    std::string variant = "linear";   // parasite closed form: linear | affine
    double x_max = 25.0;              // numeric grid (also the pde/clt grid)
    int n_cells = 2048;
    double tol = 1e-10;
};

struct RunCfg {
    std::uint64_t seed = 1;
    std::size_t replicas = 10000;
    std::size_t aux_replicas = 10000;
    std::size_t inner_replicas = 200;
    int time_nodes = 33;
    double horizon = 1.0;
    double dt = 1e-3;
    std::vector<double> snapshot_times; // empty means {horizon}
    double x0 = 1.0;
    std::uint64_t max_particles = 1ull << 22;
    double fork_pop_cap = 1e4;
    std::size_t pi_samples = 20000;
    double burn_in = 12.0;
    double thin = 1.0;
    int jobs = 1; // 0 = hardware concurrency
};

struct CheckCfg {
    std::vector<std::string> checks; // empty list is allowed: manifest only
    double t = 1.0;
    double t_limit = 0.0; // ou: long-time KS horizon, 0 disables
    std::vector<int> orders = {0, 1, 2};
    bool mc = false; // moments: also run the MC cross-check
    std::size_t n_particles = 10000;
    int points = 100;
    double x = 1.0, y = 3.0; // coupling starting pair
    std::size_t ks_samples = 0;
    double ks_bound = 0.02;
    double l1_bound = 0.03;
    double rel_tol = 0.02;
};

struct OutputCfg {
    std::string directory = "out";
    bool directory_from_config = false;
    std::vector<std::string> formats = {"json", "csv"};
};

struct ExperimentConfig {
    ModelCfg model;
    EigenCfg eigen;
    RunCfg run;
    CheckCfg check;
    OutputCfg output;
};

// Parse + validate; throws config_error naming every unknown section/key.
ExperimentConfig experiment_from_ini(const IniFile& ini);
ExperimentConfig load_experiment_config(const std::string& path);

// Cross-field rules (model kind exists, closed-form availability, ranges).
void validate_experiment(const ExperimentConfig& cfg);

RateKind build_rate(const ModelCfg& mc);
ModelSpec build_model(const ModelCfg& mc);
// Respects eigen.kind; "none" throws when called, callers gate on it.
EigenPair build_eigen(const ModelSpec& m, const ExperimentConfig& cfg);

// Fully-resolved config echo including every default.
nlohmann::ordered_json config_echo(const ExperimentConfig& cfg);

} // namespace branchsim
