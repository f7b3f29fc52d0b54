#include "neat/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "neat/config.hpp"
#include "neat/corpus.hpp"
#include "neat/dataset.hpp"
#include "neat/error.hpp"
#include "neat/evaluator.hpp"
#include "neat/gaussian.hpp"
#include "neat/labelgen.hpp"
#include "neat/synth.hpp"
#include "neat/trainer.hpp"
#include "neat/version.hpp"
#include "tsv.hpp"

namespace neat::cli {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kSynthKeys = {"items",         "transactions", "users",
                                          "categories",    "basket_mean",  "popularity_skew",
                                          "planted_pairs", "boost",        "noise_items",
                                          "noise_prob"};
const std::set<std::string> kTrainKeys = {
    "margin", "dim",   "epochs", "learning_rate", "batch_size", "num_negatives",
    "window", "mode",  "seed",   "c_min",         "c_max",      "init_scale",
    "max_retries", "threads", "deterministic"};
const std::set<std::string> kOtherKeys = {"filter_same_category", "delimiter", "p_value",
                                          "k",                    "method",    "recall_size"};

struct Globals {
    std::uint64_t seed = 1;
    std::string config_path;
    bool deterministic = false;
    std::size_t threads = 1;
    KeyValueConfig config;

    bool seed_given = false;
    bool threads_given = false;

    std::uint64_t resolved_seed() const {
        if (seed_given) return seed;
        return static_cast<std::uint64_t>(config.get_int("seed", static_cast<long long>(seed)));
    }
};

KeyValueConfig only(const KeyValueConfig& config, const std::set<std::string>& keys) {
    KeyValueConfig out;
    for (const auto& [k, v] : config.values()) {
        if (keys.contains(k)) out.set(k, v);
    }
    return out;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto part : detail::split(text, ',')) {
        if (!part.empty()) out.emplace_back(part);
    }
    return out;
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Key/value block appended to `<dir>/manifest.txt`.
class Manifest {
public:
    explicit Manifest(std::string subcommand) {
        add("subcommand", std::move(subcommand));
        add("version", kVersion);
        add("started", timestamp());
    }
    void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
    void add(const std::string& key, const char* value) { add(key, std::string(value)); }
    void add(const std::string& key, const fs::path& value) { add(key, value.string()); }
    void add_config(const KeyValueConfig& config) {
        for (const auto& [k, v] : config.values()) add("config." + k, v);
    }
    void append_to(const fs::path& dir, double seconds) const {
        fs::create_directories(dir);
        std::ofstream out(dir / "manifest.txt", std::ios::app);
        if (!out) throw ParseError(fmt::format("cannot append to '{}'", (dir / "manifest.txt").string()));
        out << "[run]\n";
        for (const auto& [k, v] : entries_) out << k << " = " << v << '\n';
        out << "wallclock_seconds = " << fmt::format("{:.3f}", seconds) << "\n\n";
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

fs::path parent_or_cwd(const fs::path& file) {
    return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

struct SynthArgs {
    fs::path out;
    fs::path spec;
    long long transactions = -1;
    long long items = -1;
};

int cmd_synth(const Globals& g, const SynthArgs& a, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    KeyValueConfig kv = only(g.config, kSynthKeys);
    if (!a.spec.empty()) {
        const auto spec_file = KeyValueConfig::load(a.spec);
        for (const auto& [k, v] : spec_file.values()) kv.set(k, v);
    }
    if (a.transactions >= 0) kv.set("transactions", std::to_string(a.transactions));
    if (a.items >= 0) kv.set("items", std::to_string(a.items));
    const SynthSpec spec = SynthSpec::from_config(kv);
    const auto seed = g.resolved_seed();

    const auto corpus = generate_synthetic(spec, seed);
    {
        auto file = detail::open_output(a.out);
        write_transactions(file, corpus);
        if (!file) throw ParseError(fmt::format("failed writing '{}'", a.out.string()));
    }
    const auto s = corpus.summary();
    out << fmt::format("wrote {} transactions ({} items, {} users) to {}\n", s.transactions,
                       s.items, s.users, a.out.string());

    Manifest m("synth");
    m.add("seed", std::to_string(seed));
    if (!a.spec.empty()) m.add("input.spec", a.spec);
    m.add("output.transactions", a.out);
    m.add_config(kv);
    for (const auto& [x, y] : spec.planted()) m.add("planted", x + "," + y);
    for (const auto& n : spec.noise()) m.add("noise", n);
    m.append_to(parent_or_cwd(a.out), seconds_since(start));
    return 0;
}

struct IngestArgs {
    fs::path input;
    fs::path out;
    std::size_t window = 5;
    bool filter_same_category = false;
    std::string delimiter = ",";
    bool no_header = false;
    long long from = -1;
    long long to = -1;
};

int cmd_ingest(const Globals& g, IngestArgs a, const CLI::App& sub, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (sub.count("--window") == 0) {
        a.window = static_cast<std::size_t>(g.config.get_int("window", 5));
    }
    if (sub.count("--filter-same-category") == 0) {
        a.filter_same_category = g.config.get_string("filter_same_category", "false") == "true";
    }
    if (sub.count("--delimiter") == 0) a.delimiter = g.config.get_string("delimiter", a.delimiter);
    if (a.delimiter == "\\t" || a.delimiter == "tab") a.delimiter = "\t";
    if (a.delimiter.size() != 1) {
        throw ConfigError(fmt::format("delimiter must be a single character, got '{}'", a.delimiter));
    }

    TransactionFormat format{a.delimiter[0], !a.no_header};
    auto file = detail::open_input(a.input);
    auto corpus = ingest_transactions(file, format);
    if (a.from >= 0 || a.to >= 0) {
        const auto n = corpus.transactions.size();
        const auto begin = a.from >= 0 ? static_cast<std::size_t>(a.from) : 0;
        const auto end = a.to >= 0 ? static_cast<std::size_t>(a.to) : n;
        corpus = slice_transactions(corpus, begin, end);
    }
    const auto dataset = make_dataset(corpus, {a.window, a.filter_same_category});
    save_dataset(a.out, dataset);

    const auto s = corpus.summary();
    out << fmt::format("transactions {}\nitems {}\nusers {}\npurchases {}\npairs {}\ndistinct_pairs {}\n",
                       s.transactions, s.items, s.users, s.purchases, dataset.pairs.size(),
                       dataset.stats.distinct_pairs());

    Manifest m("ingest");
    m.add("input.transactions", a.input);
    m.add("output.data", a.out);
    m.add("window", std::to_string(a.window));
    m.add("filter_same_category", a.filter_same_category ? "true" : "false");
    if (a.from >= 0) m.add("from", std::to_string(a.from));
    if (a.to >= 0) m.add("to", std::to_string(a.to));
    m.add("transactions", std::to_string(s.transactions));
    m.add("items", std::to_string(s.items));
    m.add("users", std::to_string(s.users));
    m.add("pairs", std::to_string(dataset.pairs.size()));
    m.append_to(a.out, seconds_since(start));
    return 0;
}

struct TrainArgs {
    fs::path data;
    fs::path model;
    TrainConfig flags;
    std::string mode;
};

int cmd_train(const Globals& g, TrainArgs a, const CLI::App& sub, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    TrainConfig cfg = TrainConfig::from_config(only(g.config, kTrainKeys));

    auto given = [&](const char* flag) { return sub.count(flag) > 0; };
    if (given("--margin")) cfg.margin = a.flags.margin;
    if (given("--dim")) cfg.dim = a.flags.dim;
    if (given("--epochs")) cfg.epochs = a.flags.epochs;
    if (given("--learning-rate")) cfg.learning_rate = a.flags.learning_rate;
    if (given("--batch-size")) cfg.batch_size = a.flags.batch_size;
    if (given("--num-negatives")) cfg.num_negatives = a.flags.num_negatives;
    if (given("--window")) cfg.window = a.flags.window;
    if (given("--c-min")) cfg.c_min = a.flags.c_min;
    if (given("--c-max")) cfg.c_max = a.flags.c_max;
    if (given("--init-scale")) cfg.init_scale = a.flags.init_scale;
    if (given("--max-retries")) cfg.max_retries = a.flags.max_retries;
    if (given("--mode")) cfg.mode = parse_mode(a.mode);
    cfg.seed = g.resolved_seed();
    if (g.threads_given) {
        cfg.threads = g.threads;
        cfg.deterministic = g.threads == 1;
    }
    if (g.deterministic) cfg.deterministic = true;
    cfg.validate();

    const auto dataset = load_dataset(a.data);
    if (dataset.pairs.empty()) {
        throw DataError(fmt::format("'{}' holds no co-purchase pairs to train on", a.data.string()));
    }
    const auto result = train(dataset, cfg);
    save_table(a.model, result.table);
    {
        auto trace = detail::open_output(a.model / "loss.csv");
        write_loss_trace(trace, result.trace);
    }
    {
        auto resolved = detail::open_output(a.model / "train.ini");
        const auto resolved_config = cfg.to_config();
        for (const auto& [k, v] : resolved_config.values()) resolved << k << " = " << v << '\n';
    }
    for (const auto& e : result.trace) {
        out << fmt::format("epoch {} loss {:.6f} ({:.2f}s)\n", e.epoch, e.mean_loss,
                           e.wallclock_seconds);
    }
    out << fmt::format("wrote {} item embeddings{} to {}\n", result.table.item_count(),
                       result.table.user_count() > 0
                           ? fmt::format(" and {} user vectors", result.table.user_count())
                           : std::string(),
                       a.model.string());

    Manifest m("train");
    m.add("seed", std::to_string(cfg.seed));
    m.add("input.data", a.data);
    m.add("output.model", a.model);
    m.add_config(cfg.to_config());
    m.add("sampler_fallbacks", std::to_string(result.sampler_fallbacks));
    m.append_to(a.model, seconds_since(start));
    return 0;
}

struct LabelArgs {
    fs::path data;
    fs::path out;
    fs::path diagnostics;
    double p_value = 0.05;
};

int cmd_labelgen(const Globals& g, LabelArgs a, const CLI::App& sub, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (sub.count("--p-value") == 0) a.p_value = g.config.get_double("p_value", a.p_value);
    if (a.diagnostics.empty()) {
        a.diagnostics = a.out;
        a.diagnostics.replace_extension(".diagnostics.json");
    }
    const auto dataset = load_dataset(a.data, false);
    const auto labels = generate_labels(dataset.stats, a.p_value);
    {
        auto file = detail::open_output(a.out);
        write_labels(file, labels, dataset.catalog);
    }
    {
        auto file = detail::open_output(a.diagnostics);
        write_diagnostics(file, labels);
    }
    const auto& d = labels.diagnostics;
    out << fmt::format(
        "p_value {} threshold {:.4f}\ntested {}\npositively_dependent {}\nnegatively_dependent "
        "{}\nindependent {}\n",
        a.p_value, labels.threshold, d.pairs_tested, d.positively_dependent,
        d.negatively_dependent, d.independent);

    Manifest m("labelgen");
    m.add("input.data", a.data);
    m.add("output.labels", a.out);
    m.add("output.diagnostics", a.diagnostics);
    m.add("p_value", detail::format_double(a.p_value));
    m.add("threshold", detail::format_double(labels.threshold));
    m.append_to(parent_or_cwd(a.out), seconds_since(start));
    return 0;
}

struct EvalArgs {
    fs::path data;
    fs::path labels;
    fs::path model;
    fs::path out;
    std::string methods = "pop,popco,neat";
    std::string ks = "1,3,5,10,20";
    std::size_t recall_size = 100;
};

int cmd_eval(const Globals& g, EvalArgs a, const CLI::App& sub, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    if (sub.count("--method") == 0) a.methods = g.config.get_string("method", a.methods);
    if (sub.count("--k") == 0) a.ks = g.config.get_string("k", a.ks);
    if (sub.count("--recall-size") == 0) {
        a.recall_size = static_cast<std::size_t>(
            g.config.get_int("recall_size", static_cast<long long>(a.recall_size)));
    }

    EvalOptions options;
    options.recall_size = a.recall_size;
    options.threads = g.deterministic ? 1 : g.threads;
    options.ks.clear();
    for (const auto& k : split_list(a.ks)) {
        options.ks.push_back(detail::parse_number<std::size_t>(k, "--k"));
    }
    if (options.ks.empty()) throw ConfigError("--k needs at least one cutoff");
    const auto methods = split_list(a.methods);
    if (methods.empty()) throw ConfigError("--method needs at least one method");

    const auto dataset = load_dataset(a.data, false);
    LabelFile label_file;
    {
        auto file = detail::open_input(a.labels);
        label_file = read_labels(file);
    }
    const auto labels = resolve_labels(label_file.labels, dataset.catalog);

    std::size_t depth = 0;
    for (auto k : options.ks) depth = std::max(depth, k);
    std::optional<EmbeddingTable> table;
    std::vector<std::unique_ptr<Scorer>> scorers;
    for (const auto& name : methods) {
        if (name == "pop") {
            scorers.push_back(std::make_unique<PopScorer>(dataset.catalog.purchase_counts, depth));
        } else if (name == "popco") {
            scorers.push_back(std::make_unique<PopCoScorer>(dataset.stats));
        } else if (name == "neat") {
            if (a.model.empty()) throw ConfigError("--method neat needs --model");
            if (!fs::exists(a.model / "items.emb")) {
                throw LookupError(
                    fmt::format("no embeddings found at '{}'", (a.model / "items.emb").string()));
            }
            table = load_table(a.model);
            scorers.push_back(std::make_unique<NeatCosineScorer>(*table, dataset.catalog));
        } else {
            throw ConfigError(fmt::format("unknown method '{}' (expected pop, popco or neat)", name));
        }
    }
    std::vector<const Scorer*> views;
    for (const auto& s : scorers) views.push_back(s.get());

    const auto report = evaluate(labels, dataset.stats, views, options);
    print_report(out, report);
    if (!a.out.empty()) {
        auto file = detail::open_output(a.out);
        write_report_csv(file, report);
    }

    Manifest m("eval");
    m.add("input.data", a.data);
    m.add("input.labels", a.labels);
    if (!a.model.empty()) m.add("input.model", a.model);
    if (!a.out.empty()) m.add("output.report", a.out);
    m.add("method", a.methods);
    m.add("k", a.ks);
    m.add("recall_size", std::to_string(a.recall_size));
    for (const auto& r : report.methods) {
        m.add(r.method + ".n_evaluated", std::to_string(r.n_evaluated));
        m.add(r.method + ".n_skipped", std::to_string(r.n_skipped));
        m.add(r.method + ".missing_candidates", std::to_string(r.missing_candidates));
    }
    m.append_to(a.out.empty() ? fs::path(".") : parent_or_cwd(a.out), seconds_since(start));
    return 0;
}

struct RecommendArgs {
    fs::path data;
    fs::path model;
    std::string query;
    std::size_t n = 10;
    std::size_t recall_size = 100;
};

int cmd_recommend(const RecommendArgs& a, std::ostream& out) {
    const auto dataset = load_dataset(a.data, false);
    const auto query = dataset.catalog.find(a.query);
    if (!query) throw LookupError(fmt::format("unknown query item '{}'", a.query));
    const auto table = load_table(a.model);
    if (!table.find_item(a.query)) {
        throw LookupError(fmt::format("query item '{}' has no embedding", a.query));
    }
    const auto recall = RecallIndex(dataset.stats).recall(*query, a.recall_size);
    if (!recall) {
        throw LookupError(fmt::format("query item '{}' has no co-purchases to rank", a.query));
    }
    NeatCosineScorer scorer(table, dataset.catalog);
    std::size_t missing = 0;
    const auto ranked = scorer.rank(*recall, missing);
    if (!ranked) throw NumericError(fmt::format("query item '{}' cannot be scored", a.query));
    const auto q = table.item(a.query);
    for (std::size_t i = 0; i < ranked->size() && i < a.n; ++i) {
        const auto& id = dataset.catalog.item_id((*ranked)[i]);
        out << id << '\t' << fmt::format("{:.6f}", cosine_score(q, table.item(id))) << '\n';
    }
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gaussian item embeddings for complementary item recommendation", "neat"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    // Global options may also follow the subcommand.
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->each([&](const std::string&) { g.seed_given = true; });
    app.add_option("--config", g.config_path, "key = value configuration file")
        ->check(CLI::ExistingFile);
    app.add_flag("--deterministic", g.deterministic, "Single-threaded, bit-reproducible runs");
    app.add_option("--threads", g.threads, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->each([&](const std::string&) { g.threads_given = true; });

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a planted synthetic transaction file");
    s_synth->add_option("--out,-o", synth.out, "Transaction file to write")->required();
    s_synth->add_option("--spec", synth.spec, "Generator spec file")->check(CLI::ExistingFile);
    s_synth->add_option("--transactions", synth.transactions);
    s_synth->add_option("--items", synth.items);

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "Read transactions and write pair statistics");
    s_ingest->add_option("--input,-i", ingest.input, "Transaction file")->required();
    s_ingest->add_option("--out,-o", ingest.out, "Dataset directory")->required();
    s_ingest->add_option("--window", ingest.window, "Max position distance of a pair");
    s_ingest->add_flag("--filter-same-category", ingest.filter_same_category,
                       "Drop pairs whose items share a category");
    s_ingest->add_option("--delimiter", ingest.delimiter, "Field delimiter (',' or tab)");
    s_ingest->add_flag("--no-header", ingest.no_header, "The file has no header row");
    s_ingest->add_option("--from", ingest.from, "First transaction (file order) to keep");
    s_ingest->add_option("--to", ingest.to, "One past the last transaction to keep");

    TrainArgs tr;
    auto* s_train = app.add_subcommand("train", "Train Gaussian item embeddings");
    s_train->add_option("--data,-d", tr.data, "Dataset directory from ingest")->required();
    s_train->add_option("--model,-m", tr.model, "Output model directory")->required();
    s_train->add_option("--margin", tr.flags.margin);
    s_train->add_option("--dim", tr.flags.dim);
    s_train->add_option("--epochs", tr.flags.epochs);
    s_train->add_option("--learning-rate,--learning_rate,--lr", tr.flags.learning_rate);
    s_train->add_option("--batch-size,--batch_size", tr.flags.batch_size);
    s_train->add_option("--num-negatives,--num_negatives,--negatives", tr.flags.num_negatives);
    s_train->add_option("--window", tr.flags.window);
    s_train->add_option("--mode", tr.mode, "neat or neat-bpr");
    s_train->add_option("--c-min,--c_min", tr.flags.c_min);
    s_train->add_option("--c-max,--c_max", tr.flags.c_max);
    s_train->add_option("--init-scale,--init_scale", tr.flags.init_scale);
    s_train->add_option("--max-retries,--max_retries", tr.flags.max_retries);

    LabelArgs lg;
    auto* s_label = app.add_subcommand("labelgen", "Generate chi-squared evaluation labels");
    s_label->add_option("--data,-d", lg.data, "Dataset directory from ingest")->required();
    s_label->add_option("--out,-o", lg.out, "Label file to write")->required();
    s_label->add_option("--p-value,--p_value", lg.p_value, "Significance level");
    s_label->add_option("--diagnostics", lg.diagnostics, "Diagnostics JSON path");

    EvalArgs ev;
    auto* s_eval = app.add_subcommand("eval", "Score methods against a label file");
    s_eval->add_option("--data,-d", ev.data, "Training dataset directory")->required();
    s_eval->add_option("--labels,-l", ev.labels, "Label file")->required();
    s_eval->add_option("--model,-m", ev.model, "Model directory (for neat)");
    s_eval->add_option("--out,-o", ev.out, "CSV report to write");
    s_eval->add_option("--method", ev.methods, "Comma separated: pop,popco,neat");
    s_eval->add_option("--k", ev.ks, "Comma separated cutoffs");
    s_eval->add_option("--recall-size,--recall_size", ev.recall_size, "Candidates per query");

    RecommendArgs rec;
    auto* s_rec = app.add_subcommand("recommend", "Rank complements for one query item");
    s_rec->add_option("--data,-d", rec.data, "Training dataset directory")->required();
    s_rec->add_option("--model,-m", rec.model, "Model directory")->required();
    s_rec->add_option("--query,-q", rec.query, "Query item id")->required();
    s_rec->add_option("--n,-n", rec.n, "Number of items to print")->check(CLI::PositiveNumber);
    s_rec->add_option("--recall-size,--recall_size", rec.recall_size);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (!g.config_path.empty()) {
            g.config = KeyValueConfig::load(g.config_path);
            std::set<std::string> known = kSynthKeys;
            known.insert(kTrainKeys.begin(), kTrainKeys.end());
            known.insert(kOtherKeys.begin(), kOtherKeys.end());
            g.config.reject_unknown(known);
        }
        if (!g.threads_given && g.config.contains("threads")) {
            g.threads = static_cast<std::size_t>(g.config.get_int("threads", 1));
        }
        if (!g.deterministic && g.config.get_string("deterministic", "") == "true") {
            g.deterministic = true;
        }

        if (*s_synth) return cmd_synth(g, synth, out);
        if (*s_ingest) return cmd_ingest(g, ingest, *s_ingest, out);
        if (*s_train) return cmd_train(g, tr, *s_train, out);
        if (*s_label) return cmd_labelgen(g, lg, *s_label, out);
        if (*s_eval) return cmd_eval(g, ev, *s_eval, out);
        if (*s_rec) return cmd_recommend(rec, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace neat::cli
