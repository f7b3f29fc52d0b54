#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "neat/error.hpp"
#include "neat/evaluator.hpp"

using namespace neat;

namespace {

ItemIndex I(std::uint32_t v) { return ItemIndex{v}; }

// a=0, b=1, c=2, d=3, e=4
CoPurchaseStats neighbour_stats() {
    CoPurchaseStats s;
    s.add(I(0), I(1), 5);
    s.add(I(0), I(2), 5);
    s.add(I(0), I(3), 1);
    s.add(I(1), I(0), 5);
    s.add(I(2), I(0), 5);
    s.add(I(3), I(0), 1);
    return s;
}

Catalog catalog_of(std::size_t n, std::vector<std::uint64_t> counts = {}) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back(std::string(1, static_cast<char>('a' + i)));
    Catalog c;
    c.items = Vocabulary(ids);
    c.categories = Vocabulary({"x"});
    c.item_category.assign(n, 0);
    c.purchase_counts = counts.empty() ? std::vector<std::uint64_t>(n, 1) : counts;
    return c;
}

EmbeddingTable table_for(const Catalog& cat, std::vector<std::vector<double>> means) {
    std::vector<std::string> ids(cat.items.names().begin(), cat.items.names().end());
    EmbeddingTable t(means.front().size(), ids);
    for (std::size_t i = 0; i < means.size(); ++i) std::copy(means[i].begin(), means[i].end(), t.mean(i).begin());
    return t;
}

// Independent rank lookup: 1-based position of `label`, 0 if absent.
std::size_t position_of(const std::vector<ItemIndex>& ranked, ItemIndex label) {
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        if (ranked[i] == label) return i + 1;
    }
    return 0;
}

}  // namespace

TEST(Recall, TopNeighboursWithIdTieBreak) {
    const auto stats = neighbour_stats();
    const auto r = build_recall_set(I(0), stats, 2);
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(r->candidates, (std::vector<ItemIndex>{I(1), I(2)}));
    const auto all = build_recall_set(I(0), stats, 100);
    EXPECT_EQ(all->candidates, (std::vector<ItemIndex>{I(1), I(2), I(3)}));
    EXPECT_FALSE(build_recall_set(I(4), stats, 100).has_value());
}

TEST(Recall, NeverContainsTheQuery) {
    CoPurchaseStats s;
    s.add(I(0), I(0), 50);
    s.add(I(0), I(1), 1);
    const auto r = build_recall_set(I(0), s, 10);
    EXPECT_EQ(r->candidates, (std::vector<ItemIndex>{I(1)}));
}

TEST(Metrics, Examples) {
    const std::vector<ItemIndex> ranked{I(1), I(0), I(2)};
    EXPECT_EQ(hr_at_k(ranked, I(0), 1), 0);
    EXPECT_EQ(hr_at_k(ranked, I(0), 2), 1);
    EXPECT_EQ(hr_at_k(ranked, I(1), 1), 1);
    EXPECT_EQ(hr_at_k(ranked, I(9), 20), 0);
    EXPECT_DOUBLE_EQ(ndcg_at_k(ranked, I(1), 5), 1.0);
    EXPECT_NEAR(ndcg_at_k(ranked, I(0), 5), 1 / std::log2(3.0), 1e-15);
    EXPECT_NEAR(ndcg_at_k(ranked, I(2), 3), 0.5, 1e-15);
    EXPECT_EQ(ndcg_at_k(ranked, I(2), 2), 0.0);
    EXPECT_EQ(ndcg_at_k(ranked, I(9), 20), 0.0);
}

TEST(Metrics, RandomRankingsAgreeWithDirectDefinition) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 30)(rng);
        std::vector<ItemIndex> ranked;
        for (std::uint32_t i = 0; i < n; ++i) ranked.push_back(I(i));
        std::shuffle(ranked.begin(), ranked.end(), rng);
        const ItemIndex label = I(std::uniform_int_distribution<std::uint32_t>(0, 35)(rng));
        const std::size_t pos = position_of(ranked, label);
        double prev_hr = 0, prev_ndcg = 0;
        for (std::size_t k : {1, 3, 5, 10, 20}) {
            const bool hit = pos != 0 && pos <= k;
            EXPECT_EQ(hr_at_k(ranked, label, k), hit ? 1 : 0);
            const double gain = hit ? std::log(2.0) / std::log(1.0 + static_cast<double>(pos)) : 0.0;
            EXPECT_NEAR(ndcg_at_k(ranked, label, k), gain, 1e-12);
            EXPECT_LE(ndcg_at_k(ranked, label, k), hr_at_k(ranked, label, k));
            EXPECT_GE(hr_at_k(ranked, label, k), prev_hr);
            EXPECT_GE(ndcg_at_k(ranked, label, k), prev_ndcg);
            prev_hr = hr_at_k(ranked, label, k);
            prev_ndcg = ndcg_at_k(ranked, label, k);
        }
    }
}

TEST(Scorers, OrderByScoreBreaksTiesByIndex) {
    const auto out = order_by_score({{I(3), 1.0}, {I(1), 2.0}, {I(0), 1.0}, {I(2), 2.0}});
    EXPECT_EQ(out, (std::vector<ItemIndex>{I(1), I(2), I(0), I(3)}));
}

TEST(Scorers, PopCoFollowsCoPurchaseFrequency) {
    const auto stats = neighbour_stats();
    const PopCoScorer scorer(stats);
    std::size_t missing = 0;
    const auto recall = *build_recall_set(I(0), stats, 100);
    EXPECT_EQ(*scorer.rank(recall, missing), recall.candidates);
    EXPECT_EQ(missing, 0u);
}

TEST(Scorers, PopIgnoresRecallAndSkipsQuery) {
    const std::vector<std::uint64_t> counts{50, 3, 7, 100, 7};
    const PopScorer scorer(counts, 3);
    std::size_t missing = 0;
    RecallSet recall{I(3), {I(1)}};
    EXPECT_EQ(*scorer.rank(recall, missing), (std::vector<ItemIndex>{I(0), I(2), I(4)}));
    recall.query = I(1);
    EXPECT_EQ(*scorer.rank(recall, missing), (std::vector<ItemIndex>{I(3), I(0), I(2)}));
}

TEST(Scorers, NeatRanksByMeanCosine) {
    const auto cat = catalog_of(4);
    const auto table = table_for(cat, {{1, 0}, {0, 1}, {1, 0.1}, {-1, 0}});
    const NeatCosineScorer scorer(table, cat);
    std::size_t missing = 0;
    RecallSet recall{I(0), {I(1), I(2), I(3)}};
    EXPECT_EQ(*scorer.rank(recall, missing), (std::vector<ItemIndex>{I(2), I(1), I(3)}));

    // Identical mean ranks first.
    const auto same = table_for(cat, {{1, 2}, {1, 2}, {2, 1}, {0, 1}});
    const NeatCosineScorer s2(same, cat);
    EXPECT_EQ(s2.rank(recall, missing)->front(), I(1));
    EXPECT_EQ(missing, 0u);
}

TEST(Scorers, NeatCountsMissingEmbeddings) {
    const auto cat = catalog_of(4);
    EmbeddingTable partial(2, {"a", "b", "d"});
    partial.mean(0)[0] = 1;
    partial.mean(1)[1] = 1;
    partial.mean(2)[0] = 1;
    const NeatCosineScorer scorer(partial, cat);
    std::size_t missing = 0;
    RecallSet recall{I(0), {I(1), I(2), I(3)}};
    EXPECT_EQ(*scorer.rank(recall, missing), (std::vector<ItemIndex>{I(3), I(1)}));
    EXPECT_EQ(missing, 1u);
    recall.query = I(2);
    EXPECT_FALSE(scorer.rank(recall, missing).has_value());
}

TEST(Evaluate, SingleLabelAggregates) {
    const auto stats = neighbour_stats();
    const PopCoScorer popco(stats);
    const Scorer* scorers[] = {&popco};
    const std::vector<EvalLabel> labels{{I(0), I(2)}};
    const auto report = evaluate(labels, stats, scorers);
    const auto& m = report.method("popco");
    EXPECT_EQ(m.n_evaluated, 1u);
    EXPECT_EQ(m.hr[0], 0.0);  // K = 1
    EXPECT_EQ(m.hr[1], 1.0);  // K = 3
    EXPECT_NEAR(m.ndcg[1], 1 / std::log2(3.0), 1e-15);
    EXPECT_THROW(report.method("nope"), LookupError);
}

TEST(Evaluate, AveragesAndSkips) {
    const auto stats = neighbour_stats();
    const PopCoScorer popco(stats);
    const Scorer* scorers[] = {&popco};
    // One hit at rank 1, one miss, one query with no recall set (skipped),
    // one target unknown to training (always a miss).
    const std::vector<EvalLabel> labels{
        {I(0), I(1)}, {I(1), I(3)}, {I(4), I(0)}, {I(0), std::nullopt}};
    EvalOptions opts;
    opts.ks = {1};
    const auto m = evaluate(labels, stats, scorers, opts).method("popco");
    EXPECT_EQ(m.n_evaluated, 3u);
    EXPECT_EQ(m.n_skipped, 1u);
    EXPECT_DOUBLE_EQ(m.hr[0], 1.0 / 3);
}

TEST(Evaluate, HalfHitRate) {
    const auto stats = neighbour_stats();
    const PopCoScorer popco(stats);
    const Scorer* scorers[] = {&popco};
    const std::vector<EvalLabel> labels{{I(0), I(1)}, {I(0), I(2)}};
    EvalOptions opts;
    opts.ks = {1};
    EXPECT_DOUBLE_EQ(evaluate(labels, stats, scorers, opts).methods[0].hr[0], 0.5);
}

TEST(Evaluate, IndependentOfLabelOrderAndThreads) {
    std::mt19937_64 rng(4);
    CoPurchaseStats stats;
    for (int i = 0; i < 400; ++i) {
        const auto a = std::uniform_int_distribution<std::uint32_t>(0, 29)(rng);
        const auto b = std::uniform_int_distribution<std::uint32_t>(0, 29)(rng);
        if (a == b) continue;
        stats.add(I(a), I(b));
        stats.add(I(b), I(a));
    }
    std::vector<EvalLabel> labels;
    for (const auto& e : stats.entries()) labels.push_back({e.query, e.rec});
    const PopCoScorer popco(stats);
    std::vector<std::uint64_t> counts(30);
    for (std::uint32_t i = 0; i < 30; ++i) counts[i] = stats.marginal(I(i));
    const PopScorer pop(counts, 100);
    const Scorer* scorers[] = {&pop, &popco};

    std::ostringstream first, second;
    write_report_csv(first, evaluate(labels, stats, scorers));
    std::shuffle(labels.begin(), labels.end(), rng);
    EvalOptions opts;
    opts.threads = 4;
    write_report_csv(second, evaluate(labels, stats, scorers, opts));
    EXPECT_EQ(first.str(), second.str());
}

TEST(Evaluate, Errors) {
    const auto stats = neighbour_stats();
    const PopCoScorer popco(stats);
    const Scorer* scorers[] = {&popco};
    EXPECT_THROW(evaluate({}, stats, scorers), DataError);
    const std::vector<EvalLabel> unknown{{I(4), I(0)}};
    EXPECT_THROW(evaluate(unknown, stats, scorers), DataError);
    EvalOptions opts;
    opts.ks = {0};
    const std::vector<EvalLabel> fine{{I(0), I(1)}};
    EXPECT_THROW(evaluate(fine, stats, scorers, opts), ConfigError);
}

TEST(Evaluate, CsvLayout) {
    const auto stats = neighbour_stats();
    const PopCoScorer popco(stats);
    const Scorer* scorers[] = {&popco};
    const std::vector<EvalLabel> labels{{I(0), I(2)}};
    EvalOptions opts;
    opts.ks = {1, 3};
    std::ostringstream out;
    write_report_csv(out, evaluate(labels, stats, scorers, opts));
    const std::string expected = "method,K,HR,NDCG,n_evaluated,n_skipped\n"
                                 "popco,1,0,0,1,0\n"
                                 "popco,3,1," +
                                 out.str().substr(out.str().rfind("popco,3,1,") + 10);
    EXPECT_EQ(out.str(), expected);
    EXPECT_NE(out.str().find("popco,3,1,0.63092975357145"), std::string::npos);
}

TEST(Evaluate, ResolveLabelsByIdentifier) {
    const auto cat = catalog_of(3);
    const std::vector<LabelPair> pairs{{"a", "c", 5}, {"z", "a", 4}, {"b", "zz", 3}};
    const auto out = resolve_labels(pairs, cat);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].query, I(0));
    EXPECT_EQ(out[0].rec, I(2));
    EXPECT_FALSE(out[1].query.has_value());
    EXPECT_FALSE(out[2].rec.has_value());
}
