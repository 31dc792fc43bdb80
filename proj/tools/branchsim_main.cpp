#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "branchsim/config.hpp"
#include "branchsim/experiment.hpp"
#include "branchsim/version.hpp"

using namespace branchsim;

namespace {

struct CommonFlags {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
    std::size_t replicas = 0;
    int jobs = 0;
    bool quiet = false;
    CLI::Option *o_config = nullptr, *o_seed = nullptr, *o_out = nullptr,
                *o_replicas = nullptr, *o_jobs = nullptr;
};

void add_common_flags(CLI::App* sub, CommonFlags& c) {
    c.o_config = sub->add_option("--config", c.config, "INI experiment config");
    c.o_seed = sub->add_option("--seed", c.seed, "RNG seed override");
    c.o_out = sub->add_option("--out", c.out, "output directory");
    c.o_replicas = sub->add_option("--replicas", c.replicas, "replica count override");
    c.o_jobs = sub->add_option("--jobs", c.jobs, "worker threads, 0 = hardware");
    sub->add_flag("--quiet", c.quiet, "suppress the per-check summary");
}

struct ModelFlags {
    std::string kind, rate, split;
    double r = 1.0, a = 1.0, b = 0.0, xstar = 10.0, p = 2.0;
    double growth = 1.0, diffusivity = 0.0, sigma = 1.0, g = 1.0;
    int dim = 1;
    std::vector<double> fractions;
    double weight = 1.0, vpower = 2.0;
    CLI::Option *o_kind = nullptr, *o_rate = nullptr, *o_split = nullptr, *o_r = nullptr,
                *o_a = nullptr, *o_b = nullptr, *o_xstar = nullptr, *o_p = nullptr,
                *o_growth = nullptr, *o_diff = nullptr, *o_sigma = nullptr, *o_g = nullptr,
                *o_dim = nullptr, *o_fractions = nullptr, *o_weight = nullptr,
                *o_vpower = nullptr;
};

void add_model_flags(CLI::App* sub, ModelFlags& f) {
    f.o_kind = sub->add_option("--model", f.kind, "mitosis | parasite | ou | fragmentation");
    f.o_rate = sub->add_option("--rate", f.rate, "constant | affine | plateau | power");
    f.o_split = sub->add_option("--split", f.split, "half | uniform | beta22");
    f.o_r = sub->add_option("--r", f.r, "constant division rate (shorthand for --a)");
    f.o_a = sub->add_option("--a", f.a, "rate coefficient a");
    f.o_b = sub->add_option("--b", f.b, "rate coefficient b");
    f.o_r->excludes(f.o_a);
    f.o_xstar = sub->add_option("--xstar", f.xstar, "plateau knee");
    f.o_p = sub->add_option("--p", f.p, "power rate exponent");
    f.o_growth = sub->add_option("--growth", f.growth, "parasite growth");
    f.o_diff = sub->add_option("--diffusivity", f.diffusivity, "parasite diffusivity");
    f.o_sigma = sub->add_option("--sigma", f.sigma, "ou noise");
    f.o_g = sub->add_option("--g", f.g, "ou mean reversion");
    f.o_dim = sub->add_option("--dim", f.dim, "ou dimension");
    f.o_fractions =
        sub->add_option("--fractions", f.fractions, "fragmentation fractions")->delimiter(',');
    f.o_weight = sub->add_option("--weight", f.weight, "fragmentation partition mass");
    f.o_vpower = sub->add_option("--vpower", f.vpower, "fragmentation eigenfunction power");
}

void apply_model_flags(const ModelFlags& f, ModelCfg& mc) {
    if (f.o_kind->count()) mc.kind = f.kind;
    if (f.o_rate->count()) mc.rate = f.rate;
    if (f.o_split->count()) mc.split = f.split;
    if (f.o_r->count()) mc.a = f.r;
    if (f.o_a->count()) mc.a = f.a;
    if (f.o_b->count()) mc.b = f.b;
    if (f.o_xstar->count()) mc.xstar = f.xstar;
    if (f.o_p->count()) mc.p = f.p;
    if (f.o_growth->count()) mc.growth = f.growth;
    if (f.o_diff->count()) mc.diffusivity = f.diffusivity;
    if (f.o_sigma->count()) mc.sigma = f.sigma;
    if (f.o_g->count()) mc.g = f.g;
    if (f.o_dim->count()) mc.dim = f.dim;
    if (f.o_fractions->count()) mc.fractions = f.fractions;
    if (f.o_weight->count()) mc.weight = f.weight;
    if (f.o_vpower->count()) mc.vpower = f.vpower;
}

struct EigenFlags {
    std::string kind, variant;
    double x_max = 25.0;
    int n_cells = 2048;
    CLI::Option *o_kind = nullptr, *o_variant = nullptr, *o_x_max = nullptr,
                *o_n_cells = nullptr;
};

void add_eigen_flags(CLI::App* sub, EigenFlags& f) {
    f.o_kind = sub->add_option("--eigen", f.kind, "closed-form | numeric | none");
    f.o_variant = sub->add_option("--eigen-variant", f.variant, "parasite: linear | affine");
    f.o_x_max = sub->add_option("--x-max", f.x_max, "grid upper bound");
    f.o_n_cells = sub->add_option("--n-cells", f.n_cells, "grid cell count");
}

void apply_eigen_flags(const EigenFlags& f, EigenCfg& ec) {
    if (f.o_kind->count()) ec.kind = f.kind;
    if (f.o_variant->count()) ec.variant = f.variant;
    if (f.o_x_max->count()) ec.x_max = f.x_max;
    if (f.o_n_cells->count()) ec.n_cells = f.n_cells;
}

struct RunFlags {
    double x0 = 1.0, horizon = 1.0, dt = 1e-3, t = 1.0;
    std::vector<double> snapshots;
    std::uint64_t max_particles = 0;
    CLI::Option *o_x0 = nullptr, *o_horizon = nullptr, *o_dt = nullptr, *o_t = nullptr,
                *o_snapshots = nullptr, *o_max_particles = nullptr;
};

void add_run_flags(CLI::App* sub, RunFlags& f) {
    f.o_x0 = sub->add_option("--x0", f.x0, "starting state");
    f.o_horizon = sub->add_option("--T", f.horizon, "simulation horizon");
    f.o_dt = sub->add_option("--dt", f.dt, "time step for diffusive motion");
    f.o_t = sub->add_option("--t", f.t, "check time");
    f.o_snapshots =
        sub->add_option("--snapshots", f.snapshots, "snapshot times")->delimiter(',');
    f.o_max_particles =
        sub->add_option("--max-particles", f.max_particles, "population cap");
}

void apply_run_flags(const RunFlags& f, ExperimentConfig& cfg) {
    if (f.o_x0->count()) cfg.run.x0 = f.x0;
    if (f.o_horizon->count()) cfg.run.horizon = f.horizon;
    if (f.o_dt->count()) cfg.run.dt = f.dt;
    if (f.o_t->count()) cfg.check.t = f.t;
    if (f.o_snapshots->count()) cfg.run.snapshot_times = f.snapshots;
    if (f.o_max_particles->count()) cfg.run.max_particles = f.max_particles;
    // --T without --t: single-time commands treat them as the same instant
    if (f.o_horizon->count() && !f.o_t->count()) cfg.check.t = f.horizon;
    if (f.o_t->count() && !f.o_horizon->count() && f.t > cfg.run.horizon)
        cfg.run.horizon = f.t;
}

struct CheckFlags {
    std::vector<int> orders;
    bool mc = false;
    std::size_t n_particles = 10000, ks_samples = 0;
    int points = 100;
    double x = 1.0, y = 3.0, t_limit = 0.0, ks_bound = 0.02;
    double burn_in = 12.0, thin = 1.0;
    CLI::Option *o_orders = nullptr, *o_mc = nullptr, *o_n = nullptr, *o_ks_samples = nullptr,
                *o_points = nullptr, *o_x = nullptr, *o_y = nullptr, *o_t_limit = nullptr,
                *o_ks_bound = nullptr, *o_burn_in = nullptr, *o_thin = nullptr;
};

void apply_check_flags(const CheckFlags& f, ExperimentConfig& cfg) {
    if (f.o_orders && f.o_orders->count()) cfg.check.orders = f.orders;
    if (f.o_mc && f.o_mc->count()) cfg.check.mc = f.mc;
    if (f.o_n && f.o_n->count()) cfg.check.n_particles = f.n_particles;
    if (f.o_ks_samples && f.o_ks_samples->count()) cfg.check.ks_samples = f.ks_samples;
    if (f.o_points && f.o_points->count()) cfg.check.points = f.points;
    if (f.o_x && f.o_x->count()) cfg.check.x = f.x;
    if (f.o_y && f.o_y->count()) cfg.check.y = f.y;
    if (f.o_t_limit && f.o_t_limit->count()) cfg.check.t_limit = f.t_limit;
    if (f.o_ks_bound && f.o_ks_bound->count()) cfg.check.ks_bound = f.ks_bound;
    if (f.o_burn_in && f.o_burn_in->count()) cfg.run.burn_in = f.burn_in;
    if (f.o_thin && f.o_thin->count()) cfg.run.thin = f.thin;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"branching particle simulator with spine and PDE cross-checks"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    struct SubState {
        CLI::App* sub = nullptr;
        CommonFlags common;
        ModelFlags model;
        EigenFlags eigen;
        RunFlags run;
        CheckFlags check;
        std::size_t default_replicas = 0; // 0 = keep config default
    };
    std::vector<SubState> subs(14);
    const char* names[14] = {"simulate", "aux",  "mto",   "tree", "fork",  "moments", "density",
                             "couple",   "pde",  "macro", "ou",   "frag",  "clt",     "run"};
    const char* descs[14] = {
        "simulate branching replicas, write population.csv",
        "sample auxiliary process paths, write aux_path.csv",
        "weighted many-to-one cross-check battery",
        "whole-tree occupation formula cross-check",
        "fork (two-particle) formula cross-check",
        "closed-form moment sweep, optional MC cross-check",
        "invariant density table, optional KS check",
        "coupled pair simulation, displacement identity and W1 bound",
        "finite-volume transport-division solve, write pde_profile.csv",
        "large-population law of large numbers vs the PDE",
        "branching Ornstein-Uhlenbeck mean and limit-law checks",
        "fragmentation eigenpair residual",
        "scaled fluctuation variance vs the bracket integral",
        "execute the [check] list from a config file",
    };

    for (int i = 0; i < 14; ++i) {
        SubState& s = subs[i];
        s.sub = app.add_subcommand(names[i], descs[i]);
        add_common_flags(s.sub, s.common);
        const std::string name = names[i];
        if (name != "run" && name != "moments" && name != "density" && name != "couple")
            add_model_flags(s.sub, s.model);
        if (name == "aux" || name == "mto" || name == "tree" || name == "fork" ||
            name == "ou" || name == "frag")
            add_eigen_flags(s.sub, s.eigen);
        if (name == "pde" || name == "macro" || name == "clt") {
            s.eigen.o_x_max = s.sub->add_option("--x-max", s.eigen.x_max, "grid upper bound");
            s.eigen.o_n_cells =
                s.sub->add_option("--n-cells", s.eigen.n_cells, "grid cell count");
        }
        if (name != "run") add_run_flags(s.sub, s.run);

        CheckFlags& c = s.check;
        if (name == "moments") {
            c.o_orders = s.sub->add_option("--orders", c.orders, "moment orders")
                             ->delimiter(',');
            c.o_mc = s.sub->add_flag("--mc", c.mc, "also run the MC cross-check");
            s.model.o_r = s.sub->add_option("--r", s.model.r, "constant division rate");
        }
        if (name == "density") {
            s.model.o_r = s.sub->add_option("--r", s.model.r, "constant division rate");
            c.o_points = s.sub->add_option("--points", c.points, "table rows");
            c.o_ks_samples =
                s.sub->add_option("--ks-samples", c.ks_samples, "long-run KS sample count");
            c.o_ks_bound = s.sub->add_option("--ks-bound", c.ks_bound, "KS pass bound");
            c.o_burn_in = s.sub->add_option("--burn-in", c.burn_in, "long-run burn-in time");
            c.o_thin = s.sub->add_option("--thin", c.thin, "long-run thinning interval");
        }
        if (name == "couple") {
            s.model.o_r = s.sub->add_option("--r", s.model.r, "constant division rate");
            c.o_x = s.sub->add_option("--x", c.x, "first starting state");
            c.o_y = s.sub->add_option("--y", c.y, "second starting state");
            c.o_points = s.sub->add_option("--points", c.points, "CSV time grid size");
        }
        if (name == "aux") c.o_points = s.sub->add_option("--points", c.points, "time grid");
        if (name == "macro" || name == "clt")
            c.o_n = s.sub->add_option("--n", c.n_particles, "initial particle count");
        if (name == "ou") {
            c.o_t_limit =
                s.sub->add_option("--t-limit", c.t_limit, "limit-law horizon, 0 disables");
            c.o_ks_bound = s.sub->add_option("--ks-bound", c.ks_bound, "KS pass bound");
        }
        if (name == "simulate") s.default_replicas = 4;
        if (name == "aux") s.default_replicas = 8;
        if (name == "couple") s.default_replicas = 1000;
        if (name == "macro") s.default_replicas = 16;
        if (name == "clt") s.default_replicas = 500;
        if (name == "moments") s.default_replicas = 20000;
        if (name == "run") s.common.o_config->required();
    }

    CLI11_PARSE(app, argc, argv);

    const SubState* chosen = nullptr;
    for (const SubState& s : subs)
        if (s.sub->parsed()) chosen = &s;
    if (!chosen) {
        std::fprintf(stderr, "error: no subcommand\n");
        return 3;
    }

    try {
        ExperimentConfig cfg;
        if (chosen->common.o_config->count())
            cfg = load_experiment_config(chosen->common.config);

        // special-cased single flags first, then the full packs
        const std::string name = chosen->sub->get_name();
        if ((name == "moments" || name == "density" || name == "couple") &&
            chosen->model.o_r && chosen->model.o_r->count()) {
            cfg.model.kind = "mitosis";
            cfg.model.rate = "constant";
            cfg.model.split = "half";
            cfg.model.a = chosen->model.r;
        }
        if (chosen->model.o_kind) apply_model_flags(chosen->model, cfg.model);
        if (chosen->eigen.o_kind) {
            apply_eigen_flags(chosen->eigen, cfg.eigen);
        } else {
            if (chosen->eigen.o_x_max && chosen->eigen.o_x_max->count())
                cfg.eigen.x_max = chosen->eigen.x_max;
            if (chosen->eigen.o_n_cells && chosen->eigen.o_n_cells->count())
                cfg.eigen.n_cells = chosen->eigen.n_cells;
        }
        if (chosen->run.o_x0) apply_run_flags(chosen->run, cfg);
        apply_check_flags(chosen->check, cfg);
        if (name == "ou") cfg.model.kind = "ou";
        if (name == "frag") cfg.model.kind = "fragmentation";

        if (!chosen->common.o_replicas->count() && !chosen->common.o_config->count() &&
            chosen->default_replicas > 0)
            cfg.run.replicas = chosen->default_replicas;

        validate_experiment(cfg);

        CliOverrides ov;
        if (chosen->common.o_seed->count()) ov.seed = chosen->common.seed;
        if (chosen->common.o_out->count()) ov.out = chosen->common.out;
        if (chosen->common.o_replicas->count()) ov.replicas = chosen->common.replicas;
        if (chosen->common.o_jobs->count()) ov.jobs = chosen->common.jobs;
        ov.quiet = chosen->common.quiet;

        return run_command(name, cfg, ov);
    } catch (const config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const explosion_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
