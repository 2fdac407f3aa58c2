#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fd.hpp"
#include "metaexplore/advisor.hpp"
#include "metaexplore/harness/config.hpp"
#include "metaexplore/harness/output.hpp"
#include "metaexplore/oracle.hpp"

using namespace metaexplore;
using namespace metaexplore::harness;
using metaexplore::testing::central_difference;
using metaexplore::testing::relative_error;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = METAEXPLORE_CONFIG_DIR;
const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5};

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int cli(const std::string& args, const fs::path& log)
{
    const std::string cmd = std::string(METAEXPLORE_CLI) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const std::string& cell(const CsvTable& t, std::size_t row, const std::string& column)
{
    return t.rows.at(row).at(static_cast<std::size_t>(t.column(column)));
}

double lookup(const CsvTable& t, const std::string& key_column, const std::string& key, const std::string& column)
{
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (cell(t, r, key_column) == key) {
            return std::stod(cell(t, r, column));
        }
    }
    throw std::runtime_error("no row '" + key + "'");
}

// Train then evaluate one config at one seed through the CLI. Returns the eval
// directory; throws when either command fails.
fs::path train_and_eval(const fs::path& out, const std::string& config, std::uint64_t seed)
{
    const fs::path dir = out / (fs::path(config).stem().string() + "-seed" + std::to_string(seed));
    const fs::path train = dir / "train";
    const fs::path eval = dir / "eval";
    if (fs::exists(eval / "summary.txt") && fs::exists(train / "checkpoints" / "mu_final.json")) {
        return eval;
    }
    fs::create_directories(dir);
    const std::string common = "--config " + (kConfigs / config).string() + " --seed " + std::to_string(seed);
    if (cli("train " + common + " --out " + train.string(), dir / "train.log") != 0) {
        throw std::runtime_error("train failed, see " + (dir / "train.log").string());
    }
    if (cli("eval " + common + " --checkpoint " + (train / "checkpoints" / "mu_final.json").string() + " --out "
                + eval.string(),
            dir / "eval.log")
        != 0) {
        throw std::runtime_error("eval failed, see " + (dir / "eval.log").string());
    }
    return eval;
}

struct OracleLines {
    std::vector<CheckLine> lines;
    double seconds = 0.0;
};

OracleLines oracle_lines()
{
    static OracleLines cached = [] {
        const auto cfg = parse_run_config(load_config(kConfigs / "oracle.json"));
        OracleLines o;
        const auto t0 = std::chrono::steady_clock::now();
        o.lines = run_oracle_suite(cfg.oracle);
        o.seconds = seconds_since(t0);
        return o;
    }();
    return cached;
}

Outcome oracle_prefix(const std::string& prefix, std::size_t min_count, double budget_s)
{
    const auto o = oracle_lines();
    std::size_t n = 0;
    std::size_t passed = 0;
    for (const auto& l : o.lines) {
        if (l.name.rfind(prefix, 0) == 0) {
            ++n;
            passed += l.pass ? 1 : 0;
        }
    }
    Outcome out;
    out.pass = n >= min_count && passed == n && o.seconds < budget_s;
    out.detail = std::to_string(passed) + "/" + std::to_string(n) + " checks, suite " + fmt("%.2fs", o.seconds);
    return out;
}

Outcome criterion1()
{
    return oracle_prefix("lemma1/random-", 100, 1.0);
}

Outcome criterion2()
{
    return oracle_prefix("theorem1/exact-", 5, 10.0);
}

Outcome criterion3()
{
    const auto o = oracle_lines();
    for (const auto& l : o.lines) {
        if (l.name == "theorem1/monte-carlo-quantized-q") {
            Outcome out;
            out.pass = l.pass && o.seconds < 120.0;
            out.detail = "|diff| " + fmt("%.4g", l.diff) + " vs 3 SE " + fmt("%.4g", l.tolerance);
            return out;
        }
    }
    return {false, "no Monte Carlo check in the suite"};
}

Outcome criterion4()
{
    double worst = 0.0;
    int points = 0;
    Rng rng(4242);
    auto random_vec = [&](int n) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) {
            x = rng.uniform(-1.0, 1.0);
        }
        return v;
    };
    auto make = [](int in, int out, HeadKind head) {
        MlpSpec s;
        s.input_dim = in;
        s.hidden = {6, 5};
        s.output_dim = out;
        s.head = head;
        return s;
    };

    for (HeadKind head : {HeadKind::softmax, HeadKind::factored_bernoulli}) {
        const auto spec = make(3, head == HeadKind::softmax ? 4 : 3, head);
        for (int k = 0; k < 10; ++k) {
            const auto p = PolicyParams::random(spec, rng);
            const auto obs = random_vec(3);
            const int a = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(spec.num_actions())));
            const auto analytic = grad_log_prob(p, obs, a);
            const auto numeric = central_difference(
                [&](const std::vector<double>& x) {
                    return std::log(policy_forward(PolicyParams{spec, x}, obs).probs[static_cast<std::size_t>(a)]);
                },
                p.values);
            worst = std::max(worst, relative_error(analytic, numeric));
            ++points;
        }
    }

    const auto vspec = make(3, 1, HeadKind::scalar);
    for (int k = 0; k < 10; ++k) {
        const auto p = PolicyParams::random(vspec, rng);
        const auto obs = random_vec(3);
        const auto numeric = central_difference(
            [&](const std::vector<double>& x) { return value_forward(PolicyParams{vspec, x}, obs); }, p.values);
        worst = std::max(worst, relative_error(value_gradient(p, obs), numeric));
        ++points;
    }

    const auto pspec = make(3, 2, HeadKind::softmax);
    for (int k = 0; k < 10; ++k) {
        const auto old_pol = PolicyParams::random(pspec, rng);
        auto pol = old_pol;
        for (auto& w : pol.values) {
            w += rng.uniform(-0.05, 0.05);
        }
        const auto val = PolicyParams::random(vspec, rng);
        PpoBatch batch(3);
        for (int t = 0; t < 12; ++t) {
            batch.push(random_vec(3), static_cast<int>(rng.uniform_index(2)), rng.uniform(-1, 1), random_vec(3),
                       t == 11, rng.uniform() < 0.7);
            batch.advantages.back() = rng.uniform(-1, 1);
        }
        fill_old_log_probs(batch, old_pol);
        PpoConfig cfg;
        std::vector<std::size_t> idx(batch.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        const auto obj = ppo_objective(batch, idx, pol, val, cfg);
        const auto dp = central_difference(
            [&](const std::vector<double>& x) {
                return ppo_objective(batch, idx, PolicyParams{pspec, x}, val, cfg).objective;
            },
            pol.values, 1e-6);
        const auto dv = central_difference(
            [&](const std::vector<double>& x) {
                return ppo_objective(batch, idx, pol, PolicyParams{vspec, x}, cfg).objective;
            },
            val.values, 1e-6);
        worst = std::max({worst, relative_error(obj.policy_grad, dp), relative_error(obj.value_grad, dv)});
        ++points;
    }
    return {worst < 1e-5, std::to_string(points) + " points, worst relative error " + fmt("%.3g", worst)};
}

Outcome criterion5()
{
    Rng rng(55);
    double worst_td = 0.0;
    double worst_mc = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(40));
        std::vector<double> r(static_cast<std::size_t>(n));
        std::vector<double> v(static_cast<std::size_t>(n + 1));
        for (auto& x : r) {
            x = rng.uniform(-2, 2);
        }
        for (auto& x : v) {
            x = rng.uniform(-2, 2);
        }
        if (rng.uniform() < 0.5) {
            v.back() = 0.0;
        }
        const double gamma = rng.uniform(0.5, 1.0);
        const auto td = compute_gae(r, v, {gamma, 0.0});
        const auto mc = compute_gae(r, v, {1.0, 1.0});
        double g = v.back();
        for (int t = n - 1; t >= 0; --t) {
            const auto i = static_cast<std::size_t>(t);
            worst_td = std::max(worst_td, std::abs(td[i] - (r[i] + gamma * v[i + 1] - v[i])));
            g += r[i];
            worst_mc = std::max(worst_mc, std::abs(mc[i] - (g - v[i])));
        }
    }
    return {worst_td < 1e-12 && worst_mc < 1e-12,
            "max |err| lambda=0 " + fmt("%.2g", worst_td) + ", lambda=1 " + fmt("%.2g", worst_mc)};
}

// One-sided sign test: P(X >= k) for X ~ Binomial(n, 1/2).
double sign_test_p(int k, int n)
{
    double p = 0.0;
    for (int j = k; j <= n; ++j) {
        double c = 1.0;
        for (int m = 0; m < j; ++m) {
            c = c * (n - m) / (m + 1);
        }
        p += c * std::pow(0.5, n);
    }
    return p;
}

Outcome criterion6(const fs::path& out)
{
    double adv = 0.0;
    double rnd = 0.0;
    int wins = 0;
    std::string ratios;
    for (auto seed : kSeeds) {
        const auto summary = read_csv(train_and_eval(out, "cartpole_reinforce.json", seed) / "eval_summary.csv");
        const double a = lookup(summary, "label", "advisor", "mean");
        const double b = lookup(summary, "label", "random", "mean");
        adv += a;
        rnd += b;
        wins += a > b ? 1 : 0;
        ratios += (ratios.empty() ? "" : " ") + fmt("%.3f", a / b);
    }
    const double gain = adv / rnd - 1.0;
    const double p = sign_test_p(wins, static_cast<int>(kSeeds.size()));
    return {gain >= 0.15 && p <= 0.1,
            "gain " + fmt("%+.1f%%", 100 * gain) + ", sign test " + std::to_string(wins) + "/5 p=" + fmt("%.4f", p)
                + ", ratios " + ratios};
}

Outcome criterion7(const fs::path& out)
{
    const double enumerated = static_cast<double>(count_poor_actions(0.0)) / kAnimatActions;
    double total = 0.0;
    std::string per_seed;
    for (auto seed : kSeeds) {
        const auto curves = read_csv(train_and_eval(out, "animat_reinforce.json", seed) / "eval_curves.csv");
        const std::size_t n = curves.rows.size();
        double sum = 0.0;
        int used = 0;
        for (std::size_t e = n - n / 4; e < n; ++e) {
            const double v = std::stod(cell(curves, e, "advisor_poor_rate"));
            if (std::isfinite(v)) {
                sum += v;
                ++used;
            }
        }
        const double rate = used > 0 ? sum / used : NAN;
        total += rate;
        per_seed += (per_seed.empty() ? "" : " ") + fmt("%.4f", rate);
    }
    const double rate = total / static_cast<double>(kSeeds.size());
    return {rate < 0.75 * enumerated,
            "mu rate " + fmt("%.4f", rate) + " vs enumerated " + fmt("%.4f", enumerated) + " (limit "
                + fmt("%.4f", 0.75 * enumerated) + "), seeds " + per_seed};
}

Outcome criterion8(const fs::path& out)
{
    int ordered = 0;
    int total = 0;
    double min_margin = INFINITY;
    for (auto seed : kSeeds) {
        const auto fig6 = read_csv(train_and_eval(out, "cartpole_reinforce.json", seed) / "fig6.csv");
        for (int j = 0; j < 3; ++j) {
            const std::string t = "task" + std::to_string(j);
            const double explore = lookup(fig6, "label", t + "/exploration", "mean_return");
            const double exploit = lookup(fig6, "label", t + "/exploitation", "mean_return");
            ordered += explore < exploit ? 1 : 0;
            min_margin = std::min(min_margin, exploit - explore);
            ++total;
        }
    }
    return {ordered == total && total == 15,
            std::to_string(ordered) + "/" + std::to_string(total) + " strictly ordered, smallest margin "
                + fmt("%.2f", min_margin)};
}

Outcome criterion9(const fs::path& out)
{
    const fs::path dir = out / "table1";
    if (!fs::exists(dir / "table1.csv")) {
        if (cli("reproduce-table1 --config " + (kConfigs / "table1_desk.json").string() + " --out " + dir.string(),
                out / "table1.log")
            != 0) {
            return {false, "reproduce-table1 failed, see " + (out / "table1.log").string()};
        }
    }
    const auto t = read_csv(dir / "table1.csv");
    auto value = [&](const std::string& problem, const std::string& method) {
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            if (cell(t, r, "problem") == problem && cell(t, r, "method") == method) {
                if (cell(t, r, "n") != "25") {
                    throw std::runtime_error("expected 25 scores for " + problem + " " + method);
                }
                return std::stod(cell(t, r, "mean"));
            }
        }
        throw std::runtime_error("table1.csv has no " + problem + " " + method);
    };
    const double ppo = value("Pole-balance (d)", "PPO");
    const double ppo_adv = value("Pole-balance (d)", "PPO+Advisor");
    const double r = value("Animat", "R");
    const double r_adv = value("Animat", "R+Advisor");
    return {ppo_adv >= ppo && r_adv >= r,
            "pole PPO " + fmt("%.2f", ppo) + " vs PPO+Advisor " + fmt("%.2f", ppo_adv) + "; animat R " + fmt("%.2f", r)
                + " vs R+Advisor " + fmt("%.2f", r_adv)};
}

Outcome criterion10(const fs::path& out)
{
    const fs::path dir = out / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string pole = (kConfigs / "cartpole_reinforce.json").string();
    const std::string small = " --set lifetime.episodes=10 --set train.meta_episodes=4 --set eval.n_tasks=2"
                              " --set eval.exploitation_episodes=20 --set eval.rollout_steps=200";
    struct Run {
        std::string name;
        std::string args;
        std::string file;
    };
    const std::vector<Run> runs{
        {"train", "train --config " + pole + " --seed 7" + small, "metrics.csv"},
        {"eval",
         "eval --config " + pole + " --seed 7" + small + " --checkpoint "
             + (dir / "train-a" / "checkpoints" / "mu_final.json").string(),
         "metrics.csv"},
        {"verify", "verify --config " + (kConfigs / "oracle.json").string() + " --seed 3", "report.txt"},
        {"reproduce-table1",
         "reproduce-table1 --config " + (kConfigs / "table1_desk.json").string() + " --seed 7 --scale 0.05",
         "metrics.csv"},
    };
    std::string detail;
    bool pass = true;
    for (const auto& run : runs) {
        std::string texts[2];
        for (int k = 0; k < 2; ++k) {
            const fs::path o = dir / (run.name + (k == 0 ? "-a" : "-b"));
            if (cli(run.args + " --out " + o.string(), dir / (run.name + ".log")) != 0) {
                return {false, run.name + " failed, see " + (dir / (run.name + ".log")).string()};
            }
            texts[k] = read_file(o / run.file);
        }
        const bool same = !texts[0].empty() && texts[0] == texts[1];
        pass = pass && same;
        detail += (detail.empty() ? "" : ", ") + run.name + (same ? " identical" : " DIFFERS");
    }
    return {pass, detail};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria"};
    fs::path out = "acceptance_out";
    std::vector<int> only;
    app.add_option("--out", out, "working directory for CLI runs");
    bool reuse = false;
    app.add_option("--only", only, "run only these criteria");
    app.add_flag("--reuse", reuse, "keep training and table runs already in --out");
    CLI11_PARSE(app, argc, argv);
    if (!reuse) {
        fs::remove_all(out);
    }
    fs::create_directories(out);

    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1},
        {2, criterion2},
        {3, criterion3},
        {4, criterion4},
        {5, criterion5},
        {6, [&] { return criterion6(out); }},
        {7, [&] { return criterion7(out); }},
        {8, [&] { return criterion8(out); }},
        {9, [&] { return criterion9(out); }},
        {10, [&] { return criterion10(out); }},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failed = 0;
    for (const auto& [id, run] : criteria) {
        if (!selected.empty() && !selected.contains(id)) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ", "
                  << fmt("%.1fs", seconds_since(t0)) << ")" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
