#include "branchsim/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace branchsim {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

double parse_number(const std::string& section, const std::string& key, const std::string& v) {
    const char* begin = v.c_str();
    char* end = nullptr;
    const double x = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw config_error("config: " + section + "." + key + " is not a number: '" + v + "'");
    return x;
}

// one section with consumption tracking so leftovers can be reported
class SectionReader {
public:
    SectionReader(const IniFile& ini, std::string name) : name_(std::move(name)) {
        entries_ = ini.find(name_);
        if (entries_) used_.assign(entries_->size(), false);
    }

    std::optional<std::string> raw(const std::string& key) {
        if (!entries_) return std::nullopt;
        for (std::size_t i = 0; i < entries_->size(); ++i) {
            if ((*entries_)[i].first == key) {
                used_[i] = true;
                return (*entries_)[i].second;
            }
        }
        return std::nullopt;
    }

    double number(const std::string& key, double def) {
        const auto v = raw(key);
        return v ? parse_number(name_, key, *v) : def;
    }

    std::int64_t integer(const std::string& key, std::int64_t def) {
        const auto v = raw(key);
        if (!v) return def;
        const double x = parse_number(name_, key, *v);
        if (std::floor(x) != x || std::abs(x) > 9e15)
            throw config_error("config: " + name_ + "." + key + " must be an integer");
        return static_cast<std::int64_t>(x);
    }

    std::uint64_t uinteger(const std::string& key, std::uint64_t def) {
        const std::int64_t x = integer(key, -1);
        if (x == -1 && !raw_seen(key)) return def;
        if (x < 0)
            throw config_error("config: " + name_ + "." + key + " must be >= 0");
        return static_cast<std::uint64_t>(x);
    }

    bool boolean(const std::string& key, bool def) {
        const auto v = raw(key);
        if (!v) return def;
        if (*v == "true" || *v == "1") return true;
        if (*v == "false" || *v == "0") return false;
        throw config_error("config: " + name_ + "." + key + " must be true or false");
    }

    std::string text(const std::string& key, const std::string& def) {
        const auto v = raw(key);
        return v ? *v : def;
    }

    std::vector<double> number_list(const std::string& key, std::vector<double> def) {
        const auto v = raw(key);
        if (!v) return def;
        std::vector<double> out;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty())
                throw config_error("config: " + name_ + "." + key + " has an empty list entry");
            out.push_back(parse_number(name_, key, item));
        }
        return out;
    }

    std::vector<std::string> text_list(const std::string& key, std::vector<std::string> def) {
        const auto v = raw(key);
        if (!v) return def;
        std::vector<std::string> out;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

    bool has(const std::string& key) const {
        if (!entries_) return false;
        for (const auto& [k, v] : *entries_)
            if (k == key) return true;
        return false;
    }

    void collect_leftovers(std::vector<std::string>& out) const {
        if (!entries_) return;
        for (std::size_t i = 0; i < entries_->size(); ++i)
            if (!used_[i]) out.push_back(name_ + "." + (*entries_)[i].first);
    }

private:
    bool raw_seen(const std::string& key) const { return has(key); }

    std::string name_;
    const std::vector<std::pair<std::string, std::string>>* entries_ = nullptr;
    std::vector<bool> used_;
};

} // namespace

const std::vector<std::pair<std::string, std::string>>* IniFile::find(
    const std::string& name) const {
    for (const auto& [sec, entries] : sections)
        if (sec == name) return &entries;
    return nullptr;
}

IniFile IniFile::parse_string(const std::string& text, const std::string& origin) {
    IniFile ini;
    std::vector<std::pair<std::string, std::string>>* cur = nullptr;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (s.front() == '[') {
            const auto close = s.find(']');
            if (close == std::string::npos || trim(s.substr(close + 1)).size() != 0)
                throw config_error("config: malformed section header at " + where);
            const std::string name = trim(s.substr(1, close - 1));
            if (name.empty()) throw config_error("config: empty section name at " + where);
            ini.sections.emplace_back(name,
                                      std::vector<std::pair<std::string, std::string>>{});
            cur = &ini.sections.back().second;
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw config_error("config: expected key = value at " + where);
        if (!cur)
            throw config_error("config: key before any [section] at " + where);
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw config_error("config: empty key at " + where);
        for (const auto& [k, v] : *cur)
            if (k == key)
                throw config_error("config: duplicate key '" + key + "' at " + where);
        cur->emplace_back(key, value);
    }
    return ini;
}

IniFile IniFile::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("config: cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

ExperimentConfig experiment_from_ini(const IniFile& ini) {
    static const std::set<std::string> known_sections = {"model", "eigen", "run", "check",
                                                         "output"};
    std::vector<std::string> unknown;
    for (const auto& [sec, entries] : ini.sections)
        if (!known_sections.count(sec)) unknown.push_back(sec + ".*");

    ExperimentConfig cfg;

    SectionReader model(ini, "model");
    cfg.model.kind = model.text("kind", cfg.model.kind);
    cfg.model.rate = model.text("rate", cfg.model.rate);
    cfg.model.a = model.number("a", cfg.model.a);
    cfg.model.b = model.number("b", cfg.model.b);
    cfg.model.xstar = model.number("xstar", cfg.model.xstar);
    cfg.model.p = model.number("p", cfg.model.p);
    cfg.model.split = model.text("split", cfg.model.split);
    cfg.model.growth = model.number("growth", cfg.model.growth);
    cfg.model.diffusivity = model.number("diffusivity", cfg.model.diffusivity);
    cfg.model.dim = static_cast<int>(model.integer("dim", cfg.model.dim));
    cfg.model.sigma = model.number("sigma", cfg.model.sigma);
    cfg.model.g = model.number("g", cfg.model.g);
    cfg.model.fractions = model.number_list("fractions", cfg.model.fractions);
    cfg.model.weight = model.number("weight", cfg.model.weight);
    cfg.model.vpower = model.number("vpower", cfg.model.vpower);
    model.collect_leftovers(unknown);

    SectionReader eigen(ini, "eigen");
    cfg.eigen.kind = eigen.text("kind", cfg.eigen.kind);
    cfg.eigen.variant = eigen.text("variant", cfg.eigen.variant);
    cfg.eigen.x_max = eigen.number("x_max", cfg.eigen.x_max);
    cfg.eigen.n_cells = static_cast<int>(eigen.integer("n_cells", cfg.eigen.n_cells));
    cfg.eigen.tol = eigen.number("tol", cfg.eigen.tol);
    eigen.collect_leftovers(unknown);

    SectionReader run(ini, "run");
    if (!run.has("seed")) throw config_error("config: run.seed is mandatory");
    cfg.run.seed = run.uinteger("seed", cfg.run.seed);
    cfg.run.replicas = static_cast<std::size_t>(run.uinteger("replicas", cfg.run.replicas));
    cfg.run.aux_replicas =
        static_cast<std::size_t>(run.uinteger("aux_replicas", cfg.run.aux_replicas));
    cfg.run.inner_replicas =
        static_cast<std::size_t>(run.uinteger("inner_replicas", cfg.run.inner_replicas));
    cfg.run.time_nodes = static_cast<int>(run.integer("time_nodes", cfg.run.time_nodes));
    cfg.run.horizon = run.number("horizon", cfg.run.horizon);
    cfg.run.dt = run.number("dt", cfg.run.dt);
    cfg.run.snapshot_times = run.number_list("snapshot_times", cfg.run.snapshot_times);
    cfg.run.x0 = run.number("x0", cfg.run.x0);
    cfg.run.max_particles = run.uinteger("max_particles", cfg.run.max_particles);
    cfg.run.fork_pop_cap = run.number("fork_pop_cap", cfg.run.fork_pop_cap);
    cfg.run.pi_samples = static_cast<std::size_t>(run.uinteger("pi_samples", cfg.run.pi_samples));
    cfg.run.burn_in = run.number("burn_in", cfg.run.burn_in);
    cfg.run.thin = run.number("thin", cfg.run.thin);
    cfg.run.jobs = static_cast<int>(run.integer("jobs", cfg.run.jobs));
    run.collect_leftovers(unknown);

    SectionReader check(ini, "check");
    cfg.check.checks = check.text_list("checks", cfg.check.checks);
    cfg.check.t = check.number("t", cfg.check.t);
    cfg.check.t_limit = check.number("t_limit", cfg.check.t_limit);
    {
        std::vector<double> defaults(cfg.check.orders.begin(), cfg.check.orders.end());
        std::vector<int> orders;
        for (double v : check.number_list("orders", defaults)) {
            if (std::floor(v) != v || v < 0)
                throw config_error("config: check.orders must be nonnegative integers");
            orders.push_back(static_cast<int>(v));
        }
        cfg.check.orders = std::move(orders);
    }
    cfg.check.mc = check.boolean("mc", cfg.check.mc);
    cfg.check.n_particles =
        static_cast<std::size_t>(check.uinteger("n_particles", cfg.check.n_particles));
    cfg.check.points = static_cast<int>(check.integer("points", cfg.check.points));
    cfg.check.x = check.number("x", cfg.check.x);
    cfg.check.y = check.number("y", cfg.check.y);
    cfg.check.ks_samples =
        static_cast<std::size_t>(check.uinteger("ks_samples", cfg.check.ks_samples));
    cfg.check.ks_bound = check.number("ks_bound", cfg.check.ks_bound);
    cfg.check.l1_bound = check.number("l1_bound", cfg.check.l1_bound);
    cfg.check.rel_tol = check.number("rel_tol", cfg.check.rel_tol);
    check.collect_leftovers(unknown);

    SectionReader output(ini, "output");
    if (output.has("directory")) {
        cfg.output.directory = output.text("directory", cfg.output.directory);
        cfg.output.directory_from_config = true;
    }
    cfg.output.formats = output.text_list("formats", cfg.output.formats);
    output.collect_leftovers(unknown);

    if (!unknown.empty()) {
        std::string msg = "config: unknown keys:";
        for (const auto& k : unknown) msg += " " + k;
        throw config_error(msg);
    }

    validate_experiment(cfg);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    return experiment_from_ini(IniFile::parse_file(path));
}

void validate_experiment(const ExperimentConfig& cfg) {
    static const std::set<std::string> kinds = {"mitosis", "parasite", "ou", "fragmentation"};
    static const std::set<std::string> rates = {"constant", "affine", "plateau", "power"};
    static const std::set<std::string> splits = {"half", "uniform", "beta22"};
    static const std::set<std::string> eigens = {"closed-form", "numeric", "none"};
    static const std::set<std::string> check_names = {
        "eigen", "mto",    "tree",  "fork",    "martingale", "longtime", "moments", "yule",
        "density", "couple", "macro", "clt",     "ou_mean",    "ou_limit", "growth"};
    static const std::set<std::string> formats = {"json", "csv"};

    const ModelCfg& mc = cfg.model;
    if (!kinds.count(mc.kind)) throw config_error("config: unknown model kind '" + mc.kind + "'");
    if (!rates.count(mc.rate)) throw config_error("config: unknown rate kind '" + mc.rate + "'");
    if (!splits.count(mc.split))
        throw config_error("config: unknown split law '" + mc.split + "'");
    if (mc.a < 0.0 || mc.b < 0.0)
        throw config_error("config: rate coefficients must be >= 0");
    if (mc.rate == "plateau" && mc.xstar <= 0.0)
        throw config_error("config: plateau xstar must be > 0");
    if (mc.rate == "power" && mc.p <= 0.0)
        throw config_error("config: power exponent p must be > 0");
    if (mc.kind == "ou") {
        if (mc.dim < 1) throw config_error("config: ou dim must be >= 1");
        if (mc.sigma <= 0.0 || mc.g <= 0.0)
            throw config_error("config: ou sigma and g must be > 0");
        if (mc.rate != "constant" && mc.rate != "affine")
            throw config_error("config: ou takes its rate b|x|^2 + a from keys a, b");
    }
    if (mc.kind == "fragmentation") {
        if (mc.fractions.empty())
            throw config_error("config: fragmentation needs a fractions list");
        double sum = 0.0;
        for (double f : mc.fractions) {
            if (f <= 0.0) throw config_error("config: fragmentation fractions must be > 0");
            sum += f;
        }
        if (sum > 1.0 + 1e-12)
            throw config_error("config: fragmentation fractions must sum to <= 1");
        if (mc.weight <= 0.0) throw config_error("config: fragmentation weight must be > 0");
    }
    if (mc.kind == "parasite" && mc.diffusivity < 0.0)
        throw config_error("config: parasite diffusivity must be >= 0");

    const EigenCfg& ec = cfg.eigen;
    if (!eigens.count(ec.kind))
        throw config_error("config: unknown eigen kind '" + ec.kind + "'");

    const RunCfg& rc = cfg.run;
    if (rc.replicas < 1) throw config_error("config: run.replicas must be >= 1");
    if (rc.horizon < 0.0) throw config_error("config: run.horizon must be >= 0");
    if (rc.dt <= 0.0) throw config_error("config: run.dt must be > 0");
    if (rc.max_particles < 2) throw config_error("config: run.max_particles must be >= 2");
    if (rc.jobs < 0) throw config_error("config: run.jobs must be >= 0");
    if (rc.time_nodes < 3) throw config_error("config: run.time_nodes must be >= 3");
    for (std::size_t i = 0; i < rc.snapshot_times.size(); ++i) {
        const double s = rc.snapshot_times[i];
        if (s < 0.0 || s > rc.horizon + 1e-12)
            throw config_error("config: run.snapshot_times must lie in [0, horizon]");
        if (i > 0 && s < rc.snapshot_times[i - 1])
            throw config_error("config: run.snapshot_times must be nondecreasing");
    }

    for (const auto& name : cfg.check.checks)
        if (!check_names.count(name))
            throw config_error("config: unknown check '" + name + "'");
    if (cfg.check.points < 2) throw config_error("config: check.points must be >= 2");
    if (cfg.check.t < 0.0) throw config_error("config: check.t must be >= 0");

    for (const auto& f : cfg.output.formats)
        if (!formats.count(f))
            throw config_error("config: unknown output format '" + f + "'");
}

RateKind build_rate(const ModelCfg& mc) {
    if (mc.rate == "constant") return ConstantRate{mc.a};
    if (mc.rate == "affine") return AffineRate{mc.a, mc.b};
    if (mc.rate == "plateau") return PlateauRate{mc.a, mc.b, mc.xstar};
    if (mc.rate == "power") return PowerRate{mc.a, mc.p};
    throw config_error("config: unknown rate kind '" + mc.rate + "'");
}

namespace {
SplitLaw build_split(const std::string& name) {
    if (name == "half") return split_deterministic_half();
    if (name == "uniform") return split_uniform();
    if (name == "beta22") return split_beta22();
    throw config_error("config: unknown split law '" + name + "'");
}
} // namespace

ModelSpec build_model(const ModelCfg& mc) {
    if (mc.kind == "mitosis") {
        if (mc.split == "half") return make_equal_mitosis(build_rate(mc));
        return make_asymmetric_mitosis(build_rate(mc), build_split(mc.split));
    }
    if (mc.kind == "parasite")
        return make_parasite(mc.growth, mc.diffusivity, build_rate(mc), build_split(mc.split));
    if (mc.kind == "ou") return make_branching_ou(mc.dim, mc.sigma, mc.g, mc.a, mc.b);
    if (mc.kind == "fragmentation")
        return make_fragmentation(0.0, {FragPartition{mc.fractions, mc.weight}});
    throw config_error("config: unknown model kind '" + mc.kind + "'");
}

// Availability rules are checked here, not in validate_experiment: a config is
// allowed to carry an eigen section that its command never uses.
static void check_eigen_availability(const ExperimentConfig& cfg) {
    const ModelCfg& mc = cfg.model;
    const EigenCfg& ec = cfg.eigen;
    if (ec.kind == "closed-form") {
        if (mc.kind == "mitosis" && mc.rate != "constant" && mc.rate != "affine")
            throw config_error("config: eigen closed-form for mitosis needs a constant or "
                               "affine rate; use eigen kind 'numeric' for rate '" +
                               mc.rate + "'");
        if (mc.kind == "parasite") {
            if (ec.variant != "linear" && ec.variant != "affine")
                throw config_error("config: parasite eigen variant must be linear or affine");
            if (ec.variant == "affine") {
                if (mc.rate != "constant" && mc.rate != "affine")
                    throw config_error("config: parasite affine eigen variant needs a "
                                       "constant or affine rate");
                const double intercept = mc.rate == "constant" ? mc.a : mc.b;
                if (!(intercept > mc.growth))
                    throw config_error("config: parasite affine eigen variant needs rate "
                                       "intercept > growth");
            }
        }
        if (mc.kind == "ou" &&
            !(mc.g * mc.g > 2.0 * mc.b * mc.sigma * mc.sigma))
            throw config_error("config: ou closed form needs g > sigma sqrt(2 b)");
    }
    if (ec.kind == "numeric") {
        if (mc.kind == "ou")
            throw config_error("config: eigen kind 'numeric' needs a 1-D size-structured "
                               "model without diffusion");
        if (mc.kind == "parasite" && mc.diffusivity > 0.0)
            throw config_error("config: eigen kind 'numeric' needs zero parasite diffusivity");
        if (ec.n_cells < 16 || ec.x_max <= 0.0)
            throw config_error("config: numeric eigen needs n_cells >= 16 and x_max > 0");
    }
}

EigenPair build_eigen(const ModelSpec& m, const ExperimentConfig& cfg) {
    const ModelCfg& mc = cfg.model;
    const EigenCfg& ec = cfg.eigen;
    if (ec.kind == "none")
        throw config_error("config: this command needs an eigenpair; set eigen kind to "
                           "closed-form or numeric");
    check_eigen_availability(cfg);
    if (ec.kind == "numeric") {
        Grid grid;
        grid.x_max = ec.x_max;
        grid.n_cells = ec.n_cells;
        return eigenpair_from_numeric(pde_power_iteration(m, grid, ec.tol));
    }
    if (mc.kind == "mitosis") {
        if (mc.rate == "constant") return eigenpair_affine_mitosis(0.0, mc.a);
        return eigenpair_affine_mitosis(mc.a, mc.b);
    }
    if (mc.kind == "parasite") {
        if (ec.variant == "affine") {
            const double slope = mc.rate == "constant" ? 0.0 : mc.a;
            const double intercept = mc.rate == "constant" ? mc.a : mc.b;
            return eigenpair_parasite_affine(mc.growth, slope, intercept);
        }
        return eigenpair_parasite_linear(mc.growth);
    }
    if (mc.kind == "ou") return eigenpair_branching_ou(mc.dim, mc.sigma, mc.g, mc.a, mc.b);
    if (mc.kind == "fragmentation")
        return eigenpair_fragmentation(mc.vpower, {FragPartition{mc.fractions, mc.weight}});
    throw config_error("config: unknown model kind '" + mc.kind + "'");
}

nlohmann::ordered_json config_echo(const ExperimentConfig& cfg) {
    nlohmann::ordered_json j;
    j["model"] = {{"kind", cfg.model.kind},
                  {"rate", cfg.model.rate},
                  {"a", cfg.model.a},
                  {"b", cfg.model.b},
                  {"xstar", cfg.model.xstar},
                  {"p", cfg.model.p},
                  {"split", cfg.model.split},
                  {"growth", cfg.model.growth},
                  {"diffusivity", cfg.model.diffusivity},
                  {"dim", cfg.model.dim},
                  {"sigma", cfg.model.sigma},
                  {"g", cfg.model.g},
                  {"fractions", cfg.model.fractions},
                  {"weight", cfg.model.weight},
                  {"vpower", cfg.model.vpower}};
    j["eigen"] = {{"kind", cfg.eigen.kind},
                  {"variant", cfg.eigen.variant},
                  {"x_max", cfg.eigen.x_max},
                  {"n_cells", cfg.eigen.n_cells},
                  {"tol", cfg.eigen.tol}};
    j["run"] = {{"seed", cfg.run.seed},
                {"replicas", cfg.run.replicas},
                {"aux_replicas", cfg.run.aux_replicas},
                {"inner_replicas", cfg.run.inner_replicas},
                {"time_nodes", cfg.run.time_nodes},
                {"horizon", cfg.run.horizon},
                {"dt", cfg.run.dt},
                {"snapshot_times", cfg.run.snapshot_times},
                {"x0", cfg.run.x0},
                {"max_particles", cfg.run.max_particles},
                {"fork_pop_cap", cfg.run.fork_pop_cap},
                {"pi_samples", cfg.run.pi_samples},
                {"burn_in", cfg.run.burn_in},
                {"thin", cfg.run.thin},
                {"jobs", cfg.run.jobs}};
    j["check"] = {{"checks", cfg.check.checks},
                  {"t", cfg.check.t},
                  {"t_limit", cfg.check.t_limit},
                  {"orders", cfg.check.orders},
                  {"mc", cfg.check.mc},
                  {"n_particles", cfg.check.n_particles},
                  {"points", cfg.check.points},
                  {"x", cfg.check.x},
                  {"y", cfg.check.y},
                  {"ks_samples", cfg.check.ks_samples},
                  {"ks_bound", cfg.check.ks_bound},
                  {"l1_bound", cfg.check.l1_bound},
                  {"rel_tol", cfg.check.rel_tol}};
    j["output"] = {{"directory", cfg.output.directory}, {"formats", cfg.output.formats}};
    return j;
}

} // namespace branchsim
