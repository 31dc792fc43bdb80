// End-to-end contract tests for the command-line binary. argv[1] is the path
// to the binary under test; everything runs inside a scratch directory under
// the system temp root and the process exit code is the test verdict.
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int g_failures = 0;

void expect(bool ok, const std::string& what) {
    if (!ok) {
        ++g_failures;
        std::printf("[FAIL] %s\n", what.c_str());
    }
}

int run_cmd(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return "<unreadable " + p.string() + ">";
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

json parse_json(const fs::path& p) { return json::parse(slurp(p)); }

// parse a CSV of doubles with a header row
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

Csv read_csv(const fs::path& p) {
    Csv out;
    std::ifstream in(p, std::ios::binary);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string item;
        if (first) {
            while (std::getline(ss, item, ',')) out.header.push_back(item);
            first = false;
            continue;
        }
        std::vector<double> row;
        while (std::getline(ss, item, ',')) row.push_back(std::strtod(item.c_str(), nullptr));
        out.rows.push_back(std::move(row));
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::printf("usage: cli_tests <path-to-binary>\n");
        return 2;
    }
    const std::string bin = fs::absolute(argv[1]).string();
    const fs::path root = fs::temp_directory_path() / "branchsim_cli_scratch";
    fs::remove_all(root);
    fs::create_directories(root);
    auto dir = [&](const std::string& name) {
        const fs::path d = root / name;
        fs::create_directories(d);
        return d.string();
    };
    const std::string devnull = " > /dev/null 2>&1";

    // --version exits cleanly
    expect(run_cmd(bin + " --version" + devnull) == 0, "--version exits 0");

    // no subcommand is a usage error
    expect(run_cmd(bin + devnull) != 0, "bare invocation fails");

    // --r and --a are mutually exclusive
    expect(run_cmd(bin + " moments --r 1 --a 2" + devnull) != 0, "--r excludes --a");

    {
        // closed-form moment table: byte-exact golden, manifest but no results
        const std::string d = dir("moments");
        expect(run_cmd(bin + " moments --r 1 --out " + d + " --quiet" + devnull) == 0,
               "moments exits 0");
        const std::string want = "order,value\n"
                                 "0,2.718281828459045\n"
                                 "1,2.718281828459045\n"
                                 "2,3.422198884707849\n";
        expect(slurp(fs::path(d) / "moments.csv") == want, "moments.csv golden bytes");
        expect(!fs::exists(fs::path(d) / "results.json"), "no results.json without checks");
        const json man = parse_json(fs::path(d) / "manifest.json");
        expect(man["command"] == "moments", "manifest command echo");
        expect(man.contains("version") && man.contains("wall_time_seconds"),
               "manifest version and timing");
        expect(man["config"]["model"]["kind"] == "mitosis", "manifest resolved model kind");
        bool has_csv = false;
        for (const auto& a : man["artifacts"])
            if (a == "moments.csv") has_csv = true;
        expect(has_csv, "manifest lists moments.csv");
    }

    {
        // moment MC cross-check populates results.json
        const std::string d = dir("moments_mc");
        expect(run_cmd(bin + " moments --r 1 --mc --replicas 4000 --seed 5 --out " + d +
                       " --quiet" + devnull) == 0,
               "moments --mc exits 0");
        const json res = parse_json(fs::path(d) / "results.json");
        expect(res["all_pass"] == true, "moments --mc all_pass");
        expect(res["command"] == "moments", "results command echo");
        expect(res["seed"] == 5, "results seed echo");
        expect(res["checks"].size() == 3, "one check per order");
    }

    {
        // invariant density table: mass 1, cdf monotone in [0, 1]
        const std::string d = dir("density");
        expect(run_cmd(bin + " density --r 1 --points 400 --out " + d + " --quiet" + devnull) ==
                   0,
               "density exits 0");
        const Csv tab = read_csv(fs::path(d) / "density.csv");
        expect(tab.header == std::vector<std::string>{"x", "pdf", "cdf"}, "density header");
        expect(tab.rows.size() == 400, "density row count");
        double mass = 0.0;
        bool monotone = true, in_range = true, nonneg = true;
        for (std::size_t i = 0; i < tab.rows.size(); ++i) {
            if (i) {
                const double dx = tab.rows[i][0] - tab.rows[i - 1][0];
                mass += 0.5 * dx * (tab.rows[i][1] + tab.rows[i - 1][1]);
                monotone = monotone && tab.rows[i][2] >= tab.rows[i - 1][2];
            }
            nonneg = nonneg && tab.rows[i][1] >= 0.0;
            in_range = in_range && tab.rows[i][2] >= 0.0 && tab.rows[i][2] <= 1.0;
        }
        expect(std::abs(mass - 1.0) < 2e-3, "density integrates to 1 (trapezoid, tail cut)");
        expect(monotone && in_range && nonneg, "cdf monotone in [0,1], pdf >= 0");
    }

    {
        // coupled pair: the displacement sum is conserved pathwise and the
        // transport bound column follows |x-y| e^{-rt}
        const std::string d = dir("couple");
        expect(run_cmd(bin + " couple --r 1 --x 1 --y 3 --T 2 --points 60 --replicas 300" +
                       " --seed 3 --out " + d + " --quiet" + devnull) == 0,
               "couple exits 0");
        const Csv tab = read_csv(fs::path(d) / "couple.csv");
        expect(tab.header == std::vector<std::string>{"t", "displacement_sum", "w1_bound"},
               "couple header");
        bool conserved = true, bound_ok = true;
        for (const auto& row : tab.rows) {
            conserved = conserved && std::abs(row[1] - 2.0) < 1e-9;
            bound_ok = bound_ok && std::abs(row[2] - 2.0 * std::exp(-row[0])) < 1e-12;
        }
        expect(conserved, "couple displacement sum is 2 on every row");
        expect(bound_ok, "couple w1_bound column matches the contraction rate");
        const json res = parse_json(fs::path(d) / "results.json");
        expect(res["all_pass"] == true, "couple checks pass");
    }

    {
        // population blow-up: truncation exits 2 and is recorded in the manifest
        const std::string d = dir("explode");
        expect(run_cmd(bin + " simulate --rate power --a 1 --p 2 --T 5 --max-particles 64" +
                       std::string(" --out ") + d + " --quiet" + devnull) == 2,
               "superlinear rate with a small cap exits 2");
        const json man = parse_json(fs::path(d) / "manifest.json");
        expect(man.contains("explosion"), "manifest records the explosion note");
        expect(!fs::exists(fs::path(d) / "results.json"), "no results.json on explosion");
    }

    {
        // config errors exit 3 and name every offending key
        const fs::path cfg = root / "bad_keys.cfg";
        write_file(cfg, "[model]\nknid = mitosis\n[run]\nseed = 1\nreplickas = 5\n");
        const fs::path err = root / "bad_keys.err";
        expect(run_cmd(bin + " run --config " + cfg.string() + " > /dev/null 2> " +
                       err.string()) == 3,
               "unknown keys exit 3");
        const std::string msg = slurp(err);
        expect(msg.find("model.knid") != std::string::npos &&
                   msg.find("run.replickas") != std::string::npos,
               "error message lists every unknown key");

        const fs::path dup = root / "dup.cfg";
        write_file(dup, "[run]\nseed = 1\nseed = 2\n");
        expect(run_cmd(bin + " run --config " + dup.string() + devnull) == 3,
               "duplicate key exits 3");

        // an eigen-requiring command with no closed form available
        expect(run_cmd(bin + " mto --rate plateau --out " + dir("badeigen") + devnull) == 3,
               "mto with a plateau rate and closed-form eigen exits 3");
        expect(run_cmd(bin + " run" + devnull) != 0, "run without --config fails");
    }

    {
        // empty check list: manifest only, exit 0
        const fs::path cfg = root / "empty.cfg";
        const std::string d = dir("empty");
        write_file(cfg, "[run]\nseed = 4\n[output]\ndirectory = " + d + "\n");
        expect(run_cmd(bin + " run --config " + cfg.string() + " --quiet" + devnull) == 0,
               "empty check list exits 0");
        expect(fs::exists(fs::path(d) / "manifest.json"), "manifest written for empty list");
        expect(!fs::exists(fs::path(d) / "results.json"), "no results for empty list");
    }

    // shared round-trip config for the determinism block
    const std::string round_cfg_body = "[model]\n"
                                       "kind = mitosis\n"
                                       "rate = constant\n"
                                       "a = 1\n"
                                       "[run]\n"
                                       "seed = 11\n"
                                       "replicas = 3000\n"
                                       "horizon = 2\n"
                                       "[check]\n"
                                       "checks = eigen,moments,yule,couple\n"
                                       "t = 1\n"
                                       "orders = 0,1,2\n";
    const fs::path round_cfg = root / "round.cfg";
    write_file(round_cfg, round_cfg_body);

    {
        // same seed, same bytes; more workers, same bytes; new seed, new numbers
        const std::string d1 = dir("det1"), d2 = dir("det2"), d4 = dir("det4"),
                          d9 = dir("det9");
        expect(run_cmd(bin + " run --config " + round_cfg.string() + " --out " + d1 +
                       " --quiet" + devnull) == 0,
               "round-trip run exits 0");
        expect(run_cmd(bin + " run --config " + round_cfg.string() + " --out " + d2 +
                       " --quiet" + devnull) == 0,
               "round-trip rerun exits 0");
        expect(run_cmd(bin + " run --config " + round_cfg.string() + " --out " + d4 +
                       " --jobs 4 --quiet" + devnull) == 0,
               "round-trip with 4 workers exits 0");
        expect(run_cmd(bin + " run --config " + round_cfg.string() + " --out " + d9 +
                       " --seed 99 --quiet" + devnull) == 0,
               "round-trip with a new seed exits 0");
        const std::string r1 = slurp(fs::path(d1) / "results.json");
        expect(r1 == slurp(fs::path(d2) / "results.json"), "results.json reproduces");
        expect(r1 == slurp(fs::path(d4) / "results.json"), "worker count changes nothing");
        const json j1 = json::parse(r1);
        const json j9 = parse_json(fs::path(d9) / "results.json");
        expect(j1["all_pass"] == true && j9["all_pass"] == true, "both seeds pass");
        expect(j1["checks"].size() == j9["checks"].size(), "same check battery");
        bool any_diff = false;
        for (std::size_t i = 0; i < j1["checks"].size(); ++i)
            if (j1["checks"][i]["lhs"] != j9["checks"][i]["lhs"]) any_diff = true;
        expect(any_diff, "a new seed moves the Monte Carlo estimates");
        for (const auto& c : j1["checks"])
            expect(c.contains("name") && c.contains("z") && c.contains("pass"),
                   "check rows carry name, z, pass");
    }

    {
        // output directory precedence: flag > config > environment
        const std::string denv = dir("env_out");
        expect(run_cmd("BRANCHSIM_OUT=" + denv + " " + bin + " moments --r 1 --quiet" +
                       devnull) == 0,
               "env-directed moments exits 0");
        expect(fs::exists(fs::path(denv) / "moments.csv"), "BRANCHSIM_OUT honored");

        const std::string dcfg = dir("cfg_out");
        const fs::path cfg = root / "outdir.cfg";
        write_file(cfg, round_cfg_body + "[output]\ndirectory = " + dcfg + "\n");
        const std::string decoy = dir("decoy");
        expect(run_cmd("BRANCHSIM_OUT=" + decoy + " " + bin + " run --config " + cfg.string() +
                       " --quiet" + devnull) == 0,
               "config-directed run exits 0");
        expect(fs::exists(fs::path(dcfg) / "results.json"), "config directory beats env");
        expect(!fs::exists(fs::path(decoy) / "results.json"), "env directory not used");

        const std::string dflag = dir("flag_out");
        expect(run_cmd("BRANCHSIM_OUT=" + decoy + " " + bin + " run --config " + cfg.string() +
                       " --out " + dflag + " --quiet" + devnull) == 0,
               "flag-directed run exits 0");
        expect(fs::exists(fs::path(dflag) / "results.json"), "--out beats config and env");
    }

    {
        // human summary lines
        const fs::path log = root / "summary.log";
        expect(run_cmd(bin + " moments --r 1 --mc --replicas 2000 --out " + dir("sum") +
                       " > " + log.string() + " 2>&1") == 0,
               "summary run exits 0");
        const std::string text = slurp(log);
        expect(text.find("checks passed") != std::string::npos, "summary line printed");
        expect(text.find("[PASS]") != std::string::npos, "per-check lines printed");

        const fs::path elog = root / "explode.log";
        run_cmd(bin + " simulate --rate power --a 1 --p 2 --T 5 --max-particles 64 --out " +
                dir("sum2") + " > " + elog.string() + " 2>&1");
        expect(slurp(elog).find("[EXPLODED]") != std::string::npos,
               "explosion reported in the summary");
    }

    if (g_failures == 0) {
        std::printf("cli contract: all checks passed\n");
        fs::remove_all(root);
        return 0;
    }
    std::printf("cli contract: %d failure(s); artifacts kept in %s\n", g_failures,
                root.string().c_str());
    return 1;
}
