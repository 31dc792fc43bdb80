#include "branchsim/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "branchsim/estimators.hpp"
#include "branchsim/parallel.hpp"
#include "branchsim/simulate.hpp"
#include "branchsim/spine.hpp"
#include "branchsim/version.hpp"

namespace branchsim {

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i)
        out[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
    return out;
}

std::vector<double> x0_vector(const ExperimentConfig& cfg, const ModelSpec& m) {
    return std::vector<double>(m.dim(), cfg.run.x0);
}

CheckBudget budget_from(const ExperimentConfig& cfg) {
    CheckBudget b;
    b.replicas = cfg.run.replicas;
    b.aux_replicas = cfg.run.aux_replicas;
    b.inner_replicas = cfg.run.inner_replicas;
    b.time_nodes = cfg.run.time_nodes;
    b.dt = cfg.run.dt;
    b.max_particles = cfg.run.max_particles;
    b.fork_pop_cap = cfg.run.fork_pop_cap;
    b.pi_samples = cfg.run.pi_samples;
    b.burn_in = cfg.run.burn_in;
    b.thin = cfg.run.thin;
    b.jobs = cfg.run.jobs;
    return b;
}

void require_size_structured(const ExperimentConfig& cfg, const char* what) {
    if (cfg.model.kind == "ou")
        throw config_error(std::string("config: ") + what +
                           " needs a 1-D size-structured model");
}

void require_constant_equal_mitosis(const ExperimentConfig& cfg, const char* what) {
    if (cfg.model.kind != "mitosis" || cfg.model.rate != "constant" ||
        cfg.model.split != "half")
        throw config_error(std::string("config: ") + what +
                           " needs the constant-rate equal mitosis model");
}

Grid grid_from(const ExperimentConfig& cfg) {
    Grid g;
    g.x_max = cfg.eigen.x_max;
    g.n_cells = cfg.eigen.n_cells;
    return g;
}

std::vector<std::vector<double>> residual_grid(const ModelSpec& m) {
    std::vector<std::vector<double>> grid;
    if (m.size_structured || m.space.kind == StateSpace::Kind::HalfLine) {
        for (int i = 0; i <= 32; ++i)
            grid.push_back({0.125 * std::pow(64.0, i / 32.0)}); // log spaced 1/8 .. 8
        return grid;
    }
    const int d = m.dim();
    grid.emplace_back(std::vector<double>(d, 0.0));
    for (int axis = 0; axis < d; ++axis)
        for (double v : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
            std::vector<double> x(d, 0.0);
            x[axis] = v;
            grid.push_back(std::move(x));
        }
    return grid;
}

double bounded_rate_sup(const ExperimentConfig& cfg) {
    const ModelCfg& mc = cfg.model;
    if (mc.rate == "constant") return mc.a;
    if (mc.rate == "plateau") return mc.a * mc.xstar + mc.b;
    throw config_error("config: growth check needs a bounded (constant or plateau) rate");
}

ExperimentResult checks_couple(const ExperimentConfig& cfg, bool with_csv) {
    require_constant_equal_mitosis(cfg, "couple");
    ExperimentResult res;
    const double r = cfg.model.a;
    const double x = cfg.check.x, y = cfg.check.y;
    const double T = cfg.run.horizon;
    const std::vector<double> times = linspace(0.0, T, cfg.check.points);

    if (with_csv) {
        SimConfig scfg;
        scfg.horizon = T;
        scfg.snapshot_times = times;
        scfg.seed = cfg.run.seed;
        scfg.max_particles = cfg.run.max_particles;
        const CoupledResult run = coupled_mitosis_simulate(r, x, y, scfg);
        CsvTable tab;
        tab.name = "couple";
        tab.header = {"t", "displacement_sum", "w1_bound"};
        for (const auto& snap : run.snapshots)
            tab.rows.push_back(
                {snap.t, snap.displacement_sum, std::abs(x - y) * std::exp(-r * snap.t)});
        res.tables.push_back(std::move(tab));
    }

    const double err = coupling_identity_error(r, x, y, times, cfg.run.replicas,
                                               derive_seed(cfg.run.seed, 41));
    CheckReport ident = make_check("couple:identity", err, 0.0, 0.0, 0.0, cfg.run.seed, 1e-12);
    ident.params["r"] = r;
    ident.params["x"] = x;
    ident.params["y"] = y;
    ident.params["replicas"] = cfg.run.replicas;
    res.checks.push_back(std::move(ident));
    res.checks.push_back(coupling_w1_check(r, x, y, T, cfg.run.replicas,
                                           derive_seed(cfg.run.seed, 42), cfg.run.jobs));
    return res;
}

} // namespace

ExperimentResult cmd_simulate(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    const std::vector<double> x0 = x0_vector(cfg, m);
    std::vector<double> snaps = cfg.run.snapshot_times;
    if (snaps.empty()) snaps = {cfg.run.horizon};

    const std::size_t R = cfg.run.replicas;
    std::vector<std::vector<std::array<double, 4>>> slots(R);
    std::vector<char> truncated(R, 0);
    parallel_replicas(R, cfg.run.jobs, [&](std::size_t i) {
        SimConfig scfg;
        scfg.horizon = cfg.run.horizon;
        scfg.snapshot_times = snaps;
        scfg.dt = cfg.run.dt;
        scfg.seed = derive_seed(cfg.run.seed, i);
        scfg.max_particles = cfg.run.max_particles;
        scfg.record_dead = false;
        const SimResult r = simulate(m, StateView(x0.data(), x0.size()), scfg);
        truncated[i] = r.truncated ? 1 : 0;
        for (const auto& snap : r.snapshots) {
            const std::size_t alive = snap.states.size() / r.dim;
            double sum_x = 0.0;
            for (std::size_t u = 0; u < alive; ++u) sum_x += snap.states[u * r.dim];
            slots[i].push_back({static_cast<double>(i), snap.t, static_cast<double>(alive),
                                sum_x});
        }
    });

    CsvTable tab;
    tab.name = "population";
    tab.header = {"replica", "t", "alive", "sum_x"};
    for (const auto& rows : slots)
        for (const auto& row : rows) tab.rows.push_back({row[0], row[1], row[2], row[3]});
    res.tables.push_back(std::move(tab));
    for (std::size_t i = 0; i < R; ++i)
        if (truncated[i]) {
            res.exploded = true;
            res.note = "simulate: population cap " + std::to_string(cfg.run.max_particles) +
                       " hit in replica " + std::to_string(i);
            break;
        }
    return res;
}

ExperimentResult cmd_aux(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    const EigenPair eig = build_eigen(m, cfg);
    const std::vector<double> x0 = x0_vector(cfg, m);
    std::vector<double> times = cfg.run.snapshot_times;
    if (times.empty()) times = linspace(0.0, cfg.run.horizon, cfg.check.points);

    const int d = m.dim();
    const std::size_t R = cfg.run.replicas;
    std::vector<std::vector<double>> slots(R);
    parallel_replicas(R, cfg.run.jobs, [&](std::size_t i) {
        Rng rng = Rng::stream(derive_seed(cfg.run.seed, 7), i);
        AuxConfig acfg;
        acfg.dt = cfg.run.dt;
        slots[i] = simulate_aux(m, eig, StateView(x0.data(), x0.size()), times, rng, acfg);
    });

    CsvTable tab;
    tab.name = "aux_path";
    tab.header = {"replica", "t"};
    for (int c = 0; c < d; ++c) tab.header.push_back("y" + std::to_string(c));
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t k = 0; k < times.size(); ++k) {
            std::vector<double> row = {static_cast<double>(i), times[k]};
            for (int c = 0; c < d; ++c) row.push_back(slots[i][k * d + c]);
            tab.rows.push_back(std::move(row));
        }
    res.tables.push_back(std::move(tab));
    return res;
}

ExperimentResult cmd_mto(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    const EigenPair eig = build_eigen(m, cfg);
    const std::vector<double> x0 = x0_vector(cfg, m);
    const CheckBudget budget = budget_from(cfg);

    const std::pair<const char*, std::function<double(StateView)>> battery[] = {
        {"1", [](StateView) { return 1.0; }},
        {"x", [](StateView x) { return x[0]; }},
        {"exp(-x)", [](StateView x) { return std::exp(-x[0]); }},
        {"sin(x)", [](StateView x) { return std::sin(x[0]); }},
    };
    int idx = 0;
    for (const auto& [name, f] : battery)
        res.checks.push_back(weighted_mto_check(m, eig, f, name,
                                                StateView(x0.data(), x0.size()), cfg.check.t,
                                                budget, derive_seed(cfg.run.seed, 10 + idx++)));
    return res;
}

ExperimentResult cmd_tree(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    const EigenPair eig = build_eigen(m, cfg);
    const std::vector<double> x0 = x0_vector(cfg, m);
    const CheckBudget budget = budget_from(cfg);
    res.checks.push_back(whole_tree_check(
        m, eig, [](StateView, double) { return 1.0; }, "1", StateView(x0.data(), x0.size()),
        cfg.check.t, budget, derive_seed(cfg.run.seed, 20)));
    res.checks.push_back(whole_tree_check(
        m, eig, [](StateView x, double) { return x[0]; }, "x", StateView(x0.data(), x0.size()),
        cfg.check.t, budget, derive_seed(cfg.run.seed, 21)));
    return res;
}

ExperimentResult cmd_fork(const ExperimentConfig& cfg) {
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    const EigenPair eig = build_eigen(m, cfg);
    const std::vector<double> x0 = x0_vector(cfg, m);
    CheckBudget budget = budget_from(cfg);
    // nested inner estimation makes the aux side cost
    // aux_replicas * time_nodes * inner_replicas paths; keep it tractable
    budget.aux_replicas = std::min<std::size_t>(budget.aux_replicas, 400);
    budget.time_nodes = std::min(budget.time_nodes, 9);
    auto one = [](StateView) { return 1.0; };
    res.checks.push_back(fork_check(m, eig, one, one, "1*1", StateView(x0.data(), x0.size()),
                                    cfg.check.t, budget, derive_seed(cfg.run.seed, 30)));
    return res;
}

ExperimentResult cmd_moments(const ExperimentConfig& cfg) {
    require_constant_equal_mitosis(cfg, "moments");
    ExperimentResult res;
    const double r = cfg.model.a;
    CsvTable tab;
    tab.name = "moments";
    tab.header = {"order", "value"};
    for (int order : cfg.check.orders)
        tab.rows.push_back(
            {static_cast<double>(order), closed_moment_tcp(order, r, cfg.run.x0, cfg.check.t)});
    res.tables.push_back(std::move(tab));
    if (cfg.check.mc) {
        auto reports = moment_check(r, cfg.run.x0, cfg.check.t, cfg.check.orders,
                                    cfg.run.replicas, derive_seed(cfg.run.seed, 50),
                                    cfg.run.jobs);
        res.checks.insert(res.checks.end(), reports.begin(), reports.end());
    }
    return res;
}

ExperimentResult cmd_density(const ExperimentConfig& cfg) {
    require_constant_equal_mitosis(cfg, "density");
    ExperimentResult res;
    const double r = cfg.model.a;
    CsvTable tab;
    tab.name = "density";
    tab.header = {"x", "pdf", "cdf"};
    for (double x : linspace(0.0, 8.0 / r, cfg.check.points))
        tab.rows.push_back({x, tcp_invariant_density(x, r), tcp_invariant_cdf(x, r)});
    res.tables.push_back(std::move(tab));
    if (cfg.check.ks_samples > 0)
        res.checks.push_back(tcp_density_ks_check(r, cfg.check.ks_samples, cfg.run.burn_in,
                                                  cfg.run.thin, derive_seed(cfg.run.seed, 60),
                                                  cfg.check.ks_bound));
    return res;
}

ExperimentResult cmd_couple(const ExperimentConfig& cfg) { return checks_couple(cfg, true); }

ExperimentResult cmd_pde(const ExperimentConfig& cfg) {
    require_size_structured(cfg, "pde");
    if (cfg.model.kind == "parasite" && cfg.model.diffusivity > 0.0)
        throw config_error("config: pde needs zero parasite diffusivity");
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    const Grid g = grid_from(cfg);
    std::vector<double> times = cfg.run.snapshot_times;
    if (times.empty()) times = {cfg.run.horizon};

    const GridDensity init = pde_init(g, [](double x) { return std::exp(-x); }, 1.0);
    const PdeTrajectory traj = pde_solve(m, g, init, times, 0.0);

    CsvTable tab;
    tab.name = "pde_profile";
    tab.header = {"t", "x", "n"};
    for (const auto& snap : traj.snapshots)
        for (int i = 0; i < g.n_cells; ++i)
            tab.rows.push_back({snap.t, g.center(i), snap.cells[i]});
    res.tables.push_back(std::move(tab));

    if (cfg.model.rate == "constant") {
        const double T = times.back();
        const double mass = grid_mass(g, traj.snapshots.back());
        const double rhs = std::exp(cfg.model.a * T);
        CheckReport rep = make_check("pde:mass", mass, 0.0, rhs, 0.0, cfg.run.seed, 0.01 * rhs);
        rep.params["t"] = T;
        rep.params["n_cells"] = g.n_cells;
        rep.params["x_max"] = g.x_max;
        res.checks.push_back(std::move(rep));
    }
    return res;
}

ExperimentResult cmd_macro(const ExperimentConfig& cfg) {
    require_size_structured(cfg, "macro");
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    res.checks = macro_lln_check(m, cfg.check.t, cfg.check.n_particles, cfg.run.replicas,
                                 grid_from(cfg), derive_seed(cfg.run.seed, 70), cfg.run.jobs,
                                 cfg.check.rel_tol);
    return res;
}

ExperimentResult cmd_ou(const ExperimentConfig& cfg) {
    if (cfg.model.kind != "ou") throw config_error("config: ou command needs model kind 'ou'");
    if (cfg.model.dim != 1) throw config_error("config: ou command supports dim = 1");
    ExperimentResult res;
    const ModelCfg& mc = cfg.model;
    const CheckBudget budget = budget_from(cfg);
    res.checks.push_back(ou_mean_n_check(mc.sigma, mc.g, mc.a, mc.b, cfg.run.x0, cfg.check.t,
                                         budget, derive_seed(cfg.run.seed, 80)));
    if (cfg.check.t_limit > 0.0)
        res.checks.push_back(ou_limit_law_check(mc.sigma, mc.g, mc.a, mc.b, cfg.run.x0,
                                                cfg.check.t_limit, budget,
                                                derive_seed(cfg.run.seed, 81),
                                                cfg.check.ks_bound));
    return res;
}

ExperimentResult cmd_frag(const ExperimentConfig& cfg) {
    if (cfg.model.kind != "fragmentation")
        throw config_error("config: frag command needs model kind 'fragmentation'");
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    const EigenPair eig = build_eigen(m, cfg);
    const double residual = eigen_residual(m, eig, residual_grid(m));
    CheckReport rep =
        make_check("frag:eigen_residual", residual, 0.0, 0.0, 0.0, cfg.run.seed, 1e-8);
    rep.params["lambda0"] = eig.lambda0;
    rep.params["vpower"] = cfg.model.vpower;
    rep.params["fractions"] = cfg.model.fractions;
    res.checks.push_back(std::move(rep));
    return res;
}

ExperimentResult cmd_clt(const ExperimentConfig& cfg) {
    require_size_structured(cfg, "clt");
    if (cfg.model.kind == "parasite")
        throw config_error("config: clt supports the mitosis models");
    ExperimentResult res;
    const ModelSpec m = build_model(cfg.model);
    res.checks.push_back(variance_bracket_check(
        m, fn_scalar([](double x) { return x; }), "x", cfg.run.x0, cfg.check.n_particles,
        cfg.check.t, cfg.run.replicas, grid_from(cfg), cfg.run.time_nodes,
        derive_seed(cfg.run.seed, 90), cfg.run.jobs));
    return res;
}

ExperimentResult cmd_run(const ExperimentConfig& cfg) {
    ExperimentResult all;
    auto absorb = [&](ExperimentResult r) {
        all.checks.insert(all.checks.end(), std::make_move_iterator(r.checks.begin()),
                          std::make_move_iterator(r.checks.end()));
        all.tables.insert(all.tables.end(), std::make_move_iterator(r.tables.begin()),
                          std::make_move_iterator(r.tables.end()));
        if (r.exploded && !all.exploded) {
            all.exploded = true;
            all.note = r.note;
        }
    };

    for (const std::string& name : cfg.check.checks) {
        if (name == "eigen") {
            const ModelSpec m = build_model(cfg.model);
            const EigenPair eig = build_eigen(m, cfg);
            CheckReport rep = make_check("eigen:" + m.name + ":" + eig.label,
                                         eigen_residual(m, eig, residual_grid(m)), 0.0, 0.0,
                                         0.0, cfg.run.seed, 1e-8);
            rep.params["lambda0"] = eig.lambda0;
            all.checks.push_back(std::move(rep));
        } else if (name == "mto") {
            absorb(cmd_mto(cfg));
        } else if (name == "tree") {
            absorb(cmd_tree(cfg));
        } else if (name == "fork") {
            absorb(cmd_fork(cfg));
        } else if (name == "martingale") {
            const ModelSpec m = build_model(cfg.model);
            const EigenPair eig = build_eigen(m, cfg);
            const std::vector<double> x0 = x0_vector(cfg, m);
            std::vector<double> times = cfg.run.snapshot_times;
            if (times.size() < 2) times = {0.5 * cfg.check.t, cfg.check.t};
            all.checks.push_back(martingale_check(m, eig, StateView(x0.data(), x0.size()),
                                                  times, budget_from(cfg),
                                                  derive_seed(cfg.run.seed, 100)));
        } else if (name == "longtime") {
            const ModelSpec m = build_model(cfg.model);
            const EigenPair eig = build_eigen(m, cfg);
            const std::vector<double> x0 = x0_vector(cfg, m);
            std::optional<double> closed;
            if (cfg.model.kind == "mitosis" && cfg.model.rate == "constant" &&
                cfg.model.split == "half")
                closed = 1.0 / cfg.model.a; // invariant mean of the constant-rate model
            all.checks.push_back(longtime_limit_check(
                m, eig, [](StateView x) { return x[0]; }, "x", StateView(x0.data(), x0.size()),
                cfg.check.t, budget_from(cfg), derive_seed(cfg.run.seed, 110), 0.01, closed));
        } else if (name == "moments") {
            require_constant_equal_mitosis(cfg, "moments");
            auto reports =
                moment_check(cfg.model.a, cfg.run.x0, cfg.check.t, cfg.check.orders,
                             cfg.run.replicas, derive_seed(cfg.run.seed, 50), cfg.run.jobs);
            for (auto& r : reports) all.checks.push_back(std::move(r));
        } else if (name == "yule") {
            require_constant_equal_mitosis(cfg, "yule");
            auto reports = yule_check(cfg.model.a, cfg.check.t, cfg.run.replicas,
                                      derive_seed(cfg.run.seed, 120), cfg.run.jobs);
            for (auto& r : reports) all.checks.push_back(std::move(r));
        } else if (name == "density") {
            require_constant_equal_mitosis(cfg, "density");
            const std::size_t samples =
                cfg.check.ks_samples > 0 ? cfg.check.ks_samples : 100000;
            all.checks.push_back(tcp_density_ks_check(cfg.model.a, samples, cfg.run.burn_in,
                                                      cfg.run.thin,
                                                      derive_seed(cfg.run.seed, 60),
                                                      cfg.check.ks_bound));
        } else if (name == "couple") {
            absorb(checks_couple(cfg, false));
        } else if (name == "macro") {
            absorb(cmd_macro(cfg));
        } else if (name == "clt") {
            absorb(cmd_clt(cfg));
        } else if (name == "ou_mean" || name == "ou_limit") {
            ExperimentConfig sub = cfg;
            if (name == "ou_mean") sub.check.t_limit = 0.0;
            else if (sub.check.t_limit <= 0.0) sub.check.t_limit = 8.0;
            ExperimentResult r = cmd_ou(sub);
            if (name == "ou_limit" && r.checks.size() > 1)
                r.checks.erase(r.checks.begin()); // keep only the limit-law report
            absorb(std::move(r));
        } else if (name == "growth") {
            const ModelSpec m = build_model(cfg.model);
            const std::vector<double> x0 = x0_vector(cfg, m);
            all.checks.push_back(growth_bound_check(m, bounded_rate_sup(cfg),
                                                    StateView(x0.data(), x0.size()),
                                                    cfg.check.t, budget_from(cfg),
                                                    derive_seed(cfg.run.seed, 130)));
        } else {
            throw config_error("config: unknown check '" + name + "'");
        }
    }
    return all;
}

int run_command(const std::string& command, ExperimentConfig cfg, const CliOverrides& ov) {
    if (ov.seed) cfg.run.seed = *ov.seed;
    if (ov.replicas) cfg.run.replicas = *ov.replicas;
    if (ov.jobs) cfg.run.jobs = *ov.jobs;
    if (cfg.run.jobs == 0) {
        const unsigned hc = std::thread::hardware_concurrency();
        cfg.run.jobs = hc > 0 ? static_cast<int>(hc) : 1;
    }
    if (ov.out) {
        cfg.output.directory = *ov.out;
    } else if (!cfg.output.directory_from_config) {
        if (const char* env = std::getenv("BRANCHSIM_OUT")) cfg.output.directory = env;
    }

    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult res;
    try {
        if (command == "simulate") res = cmd_simulate(cfg);
        else if (command == "aux") res = cmd_aux(cfg);
        else if (command == "mto") res = cmd_mto(cfg);
        else if (command == "tree") res = cmd_tree(cfg);
        else if (command == "fork") res = cmd_fork(cfg);
        else if (command == "moments") res = cmd_moments(cfg);
        else if (command == "density") res = cmd_density(cfg);
        else if (command == "couple") res = cmd_couple(cfg);
        else if (command == "pde") res = cmd_pde(cfg);
        else if (command == "macro") res = cmd_macro(cfg);
        else if (command == "ou") res = cmd_ou(cfg);
        else if (command == "frag") res = cmd_frag(cfg);
        else if (command == "clt") res = cmd_clt(cfg);
        else if (command == "run") res = cmd_run(cfg);
        else throw config_error("unknown command '" + command + "'");
    } catch (const explosion_error& e) {
        res.exploded = true;
        res.note = e.what();
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::filesystem::path outdir(cfg.output.directory);
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec) throw config_error("cannot create output directory " + outdir.string());

    const bool want_json =
        std::find(cfg.output.formats.begin(), cfg.output.formats.end(), "json") !=
        cfg.output.formats.end();
    const bool want_csv =
        std::find(cfg.output.formats.begin(), cfg.output.formats.end(), "csv") !=
        cfg.output.formats.end();

    std::vector<std::string> artifacts;
    if (want_csv)
        for (const auto& tab : res.tables) {
            write_csv(outdir / (tab.name + ".csv"), tab);
            artifacts.push_back(tab.name + ".csv");
        }
    if (want_json && !res.checks.empty()) {
        nlohmann::ordered_json j;
        j["version"] = kVersion;
        j["command"] = command;
        j["seed"] = cfg.run.seed;
        bool all_pass = true;
        for (const auto& c : res.checks) all_pass = all_pass && c.pass;
        j["all_pass"] = all_pass;
        j["checks"] = nlohmann::ordered_json::array();
        for (const auto& c : res.checks) j["checks"].push_back(c.to_json());
        std::ofstream out(outdir / "results.json", std::ios::binary);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("write failed for results.json");
        artifacts.push_back("results.json");
    }
    {
        nlohmann::ordered_json j;
        j["version"] = kVersion;
        j["command"] = command;
        j["config"] = config_echo(cfg);
        j["artifacts"] = artifacts;
        j["wall_time_seconds"] = wall;
        if (res.exploded) j["explosion"] = res.note;
        std::ofstream out(outdir / "manifest.json", std::ios::binary);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("write failed for manifest.json");
    }

    if (!ov.quiet) {
        for (const auto& c : res.checks)
            std::printf("[%s] %-34s z=%-8.3g lhs=%-12.6g rhs=%-12.6g\n",
                        c.pass ? "PASS" : "FAIL", c.name.c_str(), c.z, c.lhs, c.rhs);
        if (res.exploded) {
            std::printf("[EXPLODED] %s; artifacts in %s\n", res.note.c_str(),
                        outdir.string().c_str());
        } else {
            std::size_t passed = 0;
            for (const auto& c : res.checks)
                if (c.pass) ++passed;
            std::printf("%zu/%zu checks passed; artifacts in %s\n", passed, res.checks.size(),
                        outdir.string().c_str());
        }
    }

    if (res.exploded) return 2;
    for (const auto& c : res.checks)
        if (!c.pass) return 1;
    return 0;
}

} // namespace branchsim
