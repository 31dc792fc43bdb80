#pragma once
#include <optional>
#include <string>
#include <vector>

#include "branchsim/config.hpp"
#include "branchsim/csvio.hpp"
#include "branchsim/stats.hpp"

namespace branchsim {

// flag-level overrides applied on top of a (possibly default) config
struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> replicas;
    std::optional<int> jobs;
    bool quiet = false;
};

struct ExperimentResult {
    std::vector<CheckReport> checks;
    std::vector<CsvTable> tables;
    bool exploded = false;
    std::string note;
};

ExperimentResult cmd_simulate(const ExperimentConfig& cfg);
ExperimentResult cmd_aux(const ExperimentConfig& cfg);
ExperimentResult cmd_mto(const ExperimentConfig& cfg);
ExperimentResult cmd_tree(const ExperimentConfig& cfg);
ExperimentResult cmd_fork(const ExperimentConfig& cfg);
ExperimentResult cmd_moments(const ExperimentConfig& cfg);
ExperimentResult cmd_density(const ExperimentConfig& cfg);
ExperimentResult cmd_couple(const ExperimentConfig& cfg);
ExperimentResult cmd_pde(const ExperimentConfig& cfg);
ExperimentResult cmd_macro(const ExperimentConfig& cfg);
ExperimentResult cmd_ou(const ExperimentConfig& cfg);
ExperimentResult cmd_frag(const ExperimentConfig& cfg);
ExperimentResult cmd_clt(const ExperimentConfig& cfg);
// executes the [check] list of the config
ExperimentResult cmd_run(const ExperimentConfig& cfg);

// Applies overrides, dispatches, writes results.json / CSVs / manifest.json
// into the resolved output directory and returns the process exit code
// (0 pass, 1 check failure, 2 explosion, 3 config error).
int run_command(const std::string& command, ExperimentConfig cfg, const CliOverrides& ov);

} // namespace branchsim
