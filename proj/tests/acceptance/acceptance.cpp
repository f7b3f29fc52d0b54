// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "neat/cli.hpp"
#include "neat/corpus.hpp"
#include "neat/evaluator.hpp"
#include "neat/gaussian.hpp"
#include "neat/labelgen.hpp"
#include "neat/synth.hpp"
#include "neat/trainer.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace neat;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------

Outcome closed_form_vs_quadrature() {
    const auto start = Clock::now();
    std::mt19937_64 rng(20240101);
    std::uniform_real_distribution<double> mean(-4, 4), var(1e-2, 8);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const double ma = mean(rng), mb = mean(rng), va = var(rng), vb = var(rng);
        const std::vector<double> a{ma}, b{mb};
        const double closed = log_expected_likelihood(GaussianView{a, va}, GaussianView{b, vb});
        worst = std::max(worst, std::abs(closed - oracle::integrated_log_overlap(ma, va, mb, vb)));
    }
    const double secs = since(start);
    return {worst <= 1e-6 && secs < 10, fmt::format("1000 pairs, max |error| {:.3g}, {:.2f}s", worst, secs)};
}

Outcome gradients_vs_finite_differences() {
    const auto start = Clock::now();
    std::mt19937_64 rng(777);
    std::size_t samples = 0, partials = 0, skipped = 0;
    std::vector<std::string> failures;
    for (std::size_t dim : {2u, 10u}) {
        for (auto mode : {TrainMode::Neat, TrainMode::NeatBpr}) {
            for (int n = 0; n < 125;) {
                auto c = oracle::random_case(rng, dim, mode);
                const auto hinges = oracle::hinge_values(c.sample, c.table, c.config.margin);
                if (std::any_of(hinges.begin(), hinges.end(), [](double h) { return std::abs(h) < 1e-3; })) {
                    ++skipped;
                    continue;
                }
                const auto check = oracle::finite_difference_check(c.sample, c.table, c.config, 1e-5, 1e-4);
                partials += check.checked;
                for (const auto& m : check.mismatches) {
                    failures.push_back(fmt::format("d={} {} {}: {} vs {}", dim, to_string(mode), m.parameter,
                                                   m.analytic, m.numeric));
                }
                ++samples;
                ++n;
            }
        }
    }
    const double secs = since(start);
    std::string detail = fmt::format("{} samples, {} partials, {} near-kink draws skipped, {} mismatches, {:.2f}s",
                                     samples, partials, skipped, failures.size(), secs);
    if (!failures.empty()) detail += "; first: " + failures.front();
    return {failures.empty() && secs < 30, detail};
}

Outcome chi2_vs_raw_counts() {
    std::mt19937_64 rng(31337);
    std::size_t corpora = 0, compared = 0, mismatches = 0;
    while (corpora < 100) {
        const std::size_t items = std::uniform_int_distribution<std::size_t>(3, 15)(rng);
        const std::size_t txns = std::uniform_int_distribution<std::size_t>(5, 40)(rng);
        const auto corpus = oracle::random_corpus(rng, txns, items, 4);
        const auto pairs = sample_pairs(corpus, 5);
        if (pairs.empty() || pairs.size() > 200) continue;
        ++corpora;
        std::vector<std::pair<std::uint32_t, std::uint32_t>> records;
        for (const auto& p : pairs) records.emplace_back(p.query.value, p.rec.value);
        const auto labels = generate_labels(build_stats(pairs), 0.05);
        const double threshold = oracle::chi2_critical(0.05);

        std::set<std::pair<std::uint32_t, std::uint32_t>> distinct(records.begin(), records.end());
        std::size_t tested = 0, skipped = 0;
        for (const auto& [q, r] : distinct) oracle::raw_chi2(records, q, r).degenerate ? ++skipped : ++tested;
        if (tested != labels.diagnostics.pairs_tested || skipped != labels.diagnostics.skipped_degenerate ||
            tested != labels.all.size()) {
            ++mismatches;
            continue;
        }
        for (const auto& rec : labels.all) {
            ++compared;
            const auto raw = oracle::raw_chi2(records, rec.query.value, rec.rec.value);
            const auto expected = raw.chi2 <= threshold                        ? Dependence::Independent
                                  : static_cast<double>(raw.o1) > raw.e1 ? Dependence::Positive
                                                                          : Dependence::Negative;
            if (raw.degenerate || rec.chi2 != raw.chi2 || rec.o1 != raw.o1 || rec.e1 != raw.e1 ||
                rec.dependence != expected) {
                ++mismatches;
            }
        }
    }
    const auto table = ContingencyTable::from_counts(30, 40, 50, 1000);
    const double chi2 = chi_squared(table);
    const bool worked = std::abs(chi2 - 429.83) <= 0.01 && table.e1 == 2.0;
    return {mismatches == 0 && worked,
            fmt::format("{} corpora, {} pairs compared exactly, {} mismatches; worked table chi2 {:.4f}, e1 {}",
                        corpora, compared, mismatches, chi2, table.e1)};
}

Outcome threshold_fidelity() {
    const double t001 = threshold_for(0.001), t01 = threshold_for(0.01), t05 = threshold_for(0.05);
    const bool ok = t001 >= 10.827 && t001 <= 10.829 && std::abs(t05 - 3.841) <= 0.001 &&
                    std::abs(t01 - 6.635) <= 0.001;
    return {ok, fmt::format("0.001 -> {:.6f}, 0.01 -> {:.6f}, 0.05 -> {:.6f}", t001, t01, t05)};
}

Outcome label_nesting() {
    std::mt19937_64 rng(99);
    std::vector<CoPurchaseStats> inputs;
    for (int i = 0; i < 40; ++i) {
        const std::size_t items = std::uniform_int_distribution<std::size_t>(4, 30)(rng);
        const std::size_t txns = std::uniform_int_distribution<std::size_t>(20, 800)(rng);
        const auto corpus = oracle::random_corpus(rng, txns, items, 6);
        auto pairs = sample_pairs(corpus, 5);
        if (!pairs.empty()) inputs.push_back(build_stats(pairs));
    }
    SynthSpec spec;
    spec.transactions = 10'000;
    const auto synthetic = generate_synthetic(spec, 5);
    inputs.push_back(build_stats(sample_pairs(synthetic, 5)));

    std::size_t violations = 0;
    std::size_t n05 = 0, n01 = 0, n001 = 0;
    for (const auto& stats : inputs) {
        auto keys = [&](double p) {
            std::set<std::pair<std::uint32_t, std::uint32_t>> out;
            for (const auto& r : generate_labels(stats, p).qualified) out.emplace(r.query.value, r.rec.value);
            return out;
        };
        const auto a = keys(0.05), b = keys(0.01), c = keys(0.001);
        n05 += a.size();
        n01 += b.size();
        n001 += c.size();
        if (!std::includes(a.begin(), a.end(), b.begin(), b.end()) ||
            !std::includes(b.begin(), b.end(), c.begin(), c.end())) {
            ++violations;
        }
    }
    return {violations == 0,
            fmt::format("{} stats inputs, {} violations; totals p=0.05: {}, p=0.01: {}, p=0.001: {}", inputs.size(),
                        violations, n05, n01, n001)};
}

Outcome metric_suite() {
    std::vector<std::string> errors;
    const std::vector<ItemIndex> ranked{ItemIndex{7}, ItemIndex{3}, ItemIndex{5}};
    if (hr_at_k(ranked, ItemIndex{7}, 1) != 1 || ndcg_at_k(ranked, ItemIndex{7}, 1) != 1.0) {
        errors.push_back("rank 1");
    }
    if (ndcg_at_k(ranked, ItemIndex{5}, 3) != 0.5 || hr_at_k(ranked, ItemIndex{5}, 3) != 1) {
        errors.push_back("rank 3");
    }
    if (hr_at_k(ranked, ItemIndex{9}, 20) != 0 || ndcg_at_k(ranked, ItemIndex{9}, 20) != 0.0) {
        errors.push_back("absent");
    }
    std::mt19937_64 rng(4242);
    std::size_t violations = 0;
    for (int trial = 0; trial < 10'000; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 40)(rng);
        std::vector<ItemIndex> list;
        for (std::uint32_t i = 0; i < n; ++i) list.push_back(ItemIndex{i});
        std::shuffle(list.begin(), list.end(), rng);
        const ItemIndex label{std::uniform_int_distribution<std::uint32_t>(0, 45)(rng)};
        for (std::size_t k : {1, 3, 5, 10, 20}) {
            if (ndcg_at_k(list, label, k) > hr_at_k(list, label, k)) ++violations;
        }
    }
    return {errors.empty() && violations == 0,
            fmt::format("examples {}; 10000 random rankings, {} NDCG > HR violations",
                        errors.empty() ? "exact" : "failed: " + errors.front(), violations)};
}

// ---------------------------------------------------------------------------
// Planted synthetic pipeline, run through the command line tool.

struct PipelineRun {
    bool ok = false;
    std::string error;
    double seconds = 0;
    fs::path dir;
    std::map<std::pair<std::string, std::size_t>, std::pair<double, double>> metrics;  // (method, K) -> HR, NDCG
    std::size_t planted_labels = 0;
    double noise_variance = 0;
    double planted_variance = 0;
};

constexpr const char* kSpec =
    "items = 500\n"
    "transactions = 50000\n"
    "planted_pairs = 50\n"
    "noise_items = 3\n"
    "basket_mean = 1.5\n"
    "noise_prob = 0.6\n"
    "boost = 0.3\n";

SynthSpec acceptance_spec() {
    std::istringstream in(kSpec);
    return SynthSpec::from_config(KeyValueConfig::parse(in));
}

bool cli(const std::vector<std::string>& args, std::string& error) {
    std::ostringstream out, err;
    if (neat::cli::run(args, out, err) == 0) return true;
    error = fmt::format("'{}' failed: {}", args.size() > 2 ? args[2] : args.front(), err.str());
    return false;
}

PipelineRun run_pipeline(const fs::path& dir, int seed) {
    PipelineRun run;
    run.dir = dir;
    const auto start = Clock::now();
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream spec(dir / "spec.ini");
        spec << kSpec;
    }
    const auto p = [&](const char* name) { return (dir / name).string(); };
    const std::string s = std::to_string(seed);
    std::string& e = run.error;
    if (!cli({"--seed", s, "synth", "--spec", p("spec.ini"), "--out", p("tx.csv")}, e)) return run;
    if (!cli({"ingest", "-i", p("tx.csv"), "-o", p("train"), "--to", "40000"}, e)) return run;
    if (!cli({"ingest", "-i", p("tx.csv"), "-o", p("holdout"), "--from", "40000"}, e)) return run;
    if (!cli({"--seed", s, "--deterministic", "train", "-d", p("train"), "-m", p("model"), "--dim", "100",
              "--epochs", "5", "--learning-rate", "0.5", "--init-scale", "2", "--margin", "0.5", "--batch-size",
              "128", "--num-negatives", "5"},
             e)) {
        return run;
    }
    if (!cli({"labelgen", "-d", p("holdout"), "-o", p("labels.tsv"), "--p-value", "0.05"}, e)) return run;

    // Keep labels on planted complement pairs only; this also keeps the
    // noise items out of the label set.
    const auto spec = acceptance_spec();
    std::set<std::pair<std::string, std::string>> planted;
    for (const auto& [a, b] : spec.planted()) {
        planted.emplace(a, b);
        planted.emplace(b, a);
    }
    {
        std::ifstream in(dir / "labels.tsv");
        std::ofstream out(dir / "planted_labels.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.starts_with("#") || line.starts_with("query_item\t")) {
                out << line << '\n';
                continue;
            }
            const auto t1 = line.find('\t');
            const auto t2 = line.find('\t', t1 + 1);
            if (planted.contains({line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1)})) {
                out << line << '\n';
                ++run.planted_labels;
            }
        }
    }
    if (!cli({"eval", "-d", p("train"), "-l", p("planted_labels.tsv"), "-m", p("model"), "-o", p("report.csv"),
              "--method", "neat,popco,pop"},
             e)) {
        return run;
    }
    run.seconds = since(start);

    std::ifstream csv(dir / "report.csv");
    std::string line;
    std::getline(csv, line);
    while (std::getline(csv, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        if (f.size() < 4) continue;
        run.metrics[{f[0], std::stoul(f[1])}] = {std::stod(f[2]), std::stod(f[3])};
    }

    const auto table = load_table(dir / "model");
    double sum = 0;
    std::size_t n = 0;
    for (const auto& id : spec.noise()) {
        sum += table.item(id).variance;
        ++n;
    }
    run.noise_variance = sum / static_cast<double>(n);
    sum = 0;
    n = 0;
    for (const auto& [a, b] : spec.planted()) {
        for (const auto& id : {a, b}) {
            if (const auto row = table.find_item(id)) {
                sum += table.variance(*row);
                ++n;
            }
        }
    }
    run.planted_variance = sum / static_cast<double>(n);
    run.ok = true;
    return run;
}

Outcome noise_resistance(const PipelineRun& run) {
    if (!run.ok) return {false, run.error};
    auto get = [&](const char* m, std::size_t k) { return run.metrics.at({m, k}); };
    const auto neat5 = get("neat", 5), popco5 = get("popco", 5), pop5 = get("pop", 5);
    const double pop_hr1 = get("pop", 1).first;
    const bool ok = neat5.first >= popco5.first && popco5.first >= pop5.first && neat5.second >= popco5.second &&
                    popco5.second >= pop5.second && pop_hr1 == 0.0 && run.seconds < 600;
    return {ok, fmt::format("{} planted labels; HR@5 neat {:.4f} popco {:.4f} pop {:.4f}; NDCG@5 neat {:.4f} "
                            "popco {:.4f} pop {:.4f}; pop HR@1 {:.4f}; full run {:.1f}s",
                            run.planted_labels, neat5.first, popco5.first, pop5.first, neat5.second,
                            popco5.second, pop5.second, pop_hr1, run.seconds)};
}

Outcome variance_popularity(const std::vector<PipelineRun>& runs) {
    bool ok = runs.size() >= 3;
    std::string detail;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        if (!r.ok) return {false, r.error};
        ok = ok && r.noise_variance > r.planted_variance;
        detail += fmt::format("{}seed {}: noise {:.4f} > planted {:.4f}", i ? "; " : "", i + 1, r.noise_variance,
                              r.planted_variance);
    }
    return {ok, detail};
}

Outcome determinism(const PipelineRun& first, const PipelineRun& second) {
    if (!first.ok) return {false, first.error};
    if (!second.ok) return {false, second.error};
    const bool emb = slurp(first.dir / "model" / "items.emb") == slurp(second.dir / "model" / "items.emb");
    const bool csv = slurp(first.dir / "report.csv") == slurp(second.dir / "report.csv");
    return {emb && csv, fmt::format("items.emb {}, report.csv {}", emb ? "identical" : "DIFFERENT",
                                    csv ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_level(spdlog::level::err);
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "neat_acceptance";
    fs::create_directories(work);

    std::map<int, Outcome> results;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        results[id] = o;
        fmt::print("{} criterion {}: {} ({})\n", o.pass ? "PASS" : "FAIL", id, name, o.detail);
        std::fflush(stdout);
    };

    report(1, "closed-form log expected likelihood vs quadrature", closed_form_vs_quadrature);
    report(2, "analytic gradients vs central differences", gradients_vs_finite_differences);
    report(3, "chi-squared labels vs raw-count reimplementation", chi2_vs_raw_counts);
    report(4, "chi-squared critical values", threshold_fidelity);
    report(5, "label sets nest across significance levels", label_nesting);

    std::vector<PipelineRun> runs;
    for (int seed = 1; seed <= 3; ++seed) {
        runs.push_back(run_pipeline(work / fmt::format("seed{}", seed), seed));
    }
    report(6, "planted corpus ordering neat >= popco >= pop", [&] { return noise_resistance(runs.front()); });
    report(7, "noise items learn larger variance than planted items", [&] { return variance_popularity(runs); });
    report(8, "HR/NDCG examples and NDCG <= HR", metric_suite);
    report(9, "byte-identical reruns in deterministic mode", [&] {
        const auto again = run_pipeline(work / "seed1_again", 1);
        return determinism(runs.front(), again);
    });

    const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.second.pass; });
    fmt::print("{} of {} criteria passed\n", results.size() - failed, results.size());
    return failed == 0 ? 0 : 1;
}
