#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neat/corpus.hpp"
#include "neat/gaussian.hpp"
#include "neat/labelgen.hpp"

namespace neat {

struct RecallSet {
    ItemIndex query;
    std::vector<ItemIndex> candidates;  // pair_freq descending, ties by item id
};

/// Per-query co-purchase neighbourhoods of a stats table, built once.
class RecallIndex {
public:
    explicit RecallIndex(const CoPurchaseStats& stats);

    bool has_query(ItemIndex query) const;
    /// The `size` most co-purchased items for `query`; nullopt if the query
    /// never appears in the query slot.
    std::optional<RecallSet> recall(ItemIndex query, std::size_t size) const;

private:
    struct Neighbor {
        ItemIndex item;
        std::uint64_t count;
    };
    std::vector<std::vector<Neighbor>> neighbors_;  // per query, sorted
};

std::optional<RecallSet> build_recall_set(ItemIndex query, const CoPurchaseStats& stats,
                                          std::size_t size);

/// 1 iff `label` is among the first k entries.
int hr_at_k(std::span<const ItemIndex> ranked, ItemIndex label, std::size_t k);
/// 1 / log2(1 + rank) for a 1-based rank within the first k, else 0.
double ndcg_at_k(std::span<const ItemIndex> ranked, ItemIndex label, std::size_t k);

/// Orders candidates for a query. Implementations are read-only and may be
/// called concurrently.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::string name() const = 0;
    /// Ranked list for the query, or nullopt if the query cannot be scored.
    /// `missing` is incremented for each candidate that had to be dropped.
    virtual std::optional<std::vector<ItemIndex>> rank(const RecallSet& recall,
                                                       std::size_t& missing) const = 0;
};

/// Globally most purchased items, ignoring the recall set.
class PopScorer final : public Scorer {
public:
    PopScorer(std::span<const std::uint64_t> purchase_counts, std::size_t depth);
    std::string name() const override { return "pop"; }
    std::optional<std::vector<ItemIndex>> rank(const RecallSet& recall,
                                               std::size_t& missing) const override;

private:
    std::vector<ItemIndex> global_;  // depth + 1 most popular
    std::size_t depth_;
};

/// Recall candidates by co-purchase frequency with the query.
class PopCoScorer final : public Scorer {
public:
    explicit PopCoScorer(const CoPurchaseStats& stats) : stats_(&stats) {}
    std::string name() const override { return "popco"; }
    std::optional<std::vector<ItemIndex>> rank(const RecallSet& recall,
                                               std::size_t& missing) const override;

private:
    const CoPurchaseStats* stats_;
};

/// Recall candidates by cosine similarity of Gaussian mean vectors.
class NeatCosineScorer final : public Scorer {
public:
    /// Maps catalog items onto table rows by item id.
    NeatCosineScorer(const EmbeddingTable& table, const Catalog& catalog);
    std::string name() const override { return "neat"; }
    std::optional<std::vector<ItemIndex>> rank(const RecallSet& recall,
                                               std::size_t& missing) const override;

private:
    const EmbeddingTable* table_;
    std::vector<std::optional<std::size_t>> row_;  // per catalog item
};

/// Orders `candidates` by score descending, ties by item index ascending.
std::vector<ItemIndex> order_by_score(std::vector<std::pair<ItemIndex, double>> scored);

struct EvalOptions {
    std::vector<std::size_t> ks{1, 3, 5, 10, 20};
    std::size_t recall_size = 100;
    std::size_t threads = 1;
};

struct MethodReport {
    std::string method;
    std::vector<std::size_t> ks;
    std::vector<double> hr;
    std::vector<double> ndcg;
    std::size_t n_evaluated = 0;
    std::size_t n_skipped = 0;
    std::size_t missing_candidates = 0;
};

struct EvalReport {
    std::vector<MethodReport> methods;
    const MethodReport& method(const std::string& name) const;
};

/// A label mapped into the training catalog. `rec` is empty when the target
/// item never occurs in training (it can then only miss).
struct EvalLabel {
    std::optional<ItemIndex> query;
    std::optional<ItemIndex> rec;
};

std::vector<EvalLabel> resolve_labels(std::span<const LabelPair> labels, const Catalog& catalog);

/// Averages HR@K / NDCG@K over labels whose query has a recall set (and that
/// the scorer can rank). Throws DataError when labels is empty or every label
/// is skipped for some method.
EvalReport evaluate(std::span<const EvalLabel> labels, const CoPurchaseStats& train_stats,
                    std::span<const Scorer* const> scorers, const EvalOptions& options = {});

/// CSV `method,K,HR,NDCG,n_evaluated,n_skipped`.
void write_report_csv(std::ostream& out, const EvalReport& report);
/// Aligned human-readable table.
void print_report(std::ostream& out, const EvalReport& report);

}  // namespace neat
