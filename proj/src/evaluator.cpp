#include "neat/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include <fmt/format.h>

#include "neat/error.hpp"
#include "tsv.hpp"

namespace neat {

RecallIndex::RecallIndex(const CoPurchaseStats& stats) {
    for (const auto& e : stats.entries()) {
        if (e.query.value >= neighbors_.size()) neighbors_.resize(e.query.value + 1);
        neighbors_[e.query.value].push_back({e.rec, e.count});
    }
    for (auto& list : neighbors_) {
        std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) {
            if (a.count != b.count) return a.count > b.count;
            return a.item < b.item;
        });
    }
}

bool RecallIndex::has_query(ItemIndex query) const {
    return query.value < neighbors_.size() && !neighbors_[query.value].empty();
}

std::optional<RecallSet> RecallIndex::recall(ItemIndex query, std::size_t size) const {
    if (!has_query(query)) return std::nullopt;
    RecallSet out{query, {}};
    for (const auto& n : neighbors_[query.value]) {
        if (out.candidates.size() == size) break;
        if (n.item == query) continue;
        out.candidates.push_back(n.item);
    }
    return out;
}

std::optional<RecallSet> build_recall_set(ItemIndex query, const CoPurchaseStats& stats,
                                          std::size_t size) {
    return RecallIndex(stats).recall(query, size);
}

int hr_at_k(std::span<const ItemIndex> ranked, ItemIndex label, std::size_t k) {
    const auto end = ranked.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked.size()));
    return std::find(ranked.begin(), end, label) != end ? 1 : 0;
}

double ndcg_at_k(std::span<const ItemIndex> ranked, ItemIndex label, std::size_t k) {
    const std::size_t limit = std::min(k, ranked.size());
    for (std::size_t i = 0; i < limit; ++i) {
        if (ranked[i] == label) {
            return 1.0 / std::log2(static_cast<double>(i + 2));
        }
    }
    return 0.0;
}

std::vector<ItemIndex> order_by_score(std::vector<std::pair<ItemIndex, double>> scored) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<ItemIndex> out;
    out.reserve(scored.size());
    for (const auto& s : scored) out.push_back(s.first);
    return out;
}

PopScorer::PopScorer(std::span<const std::uint64_t> purchase_counts, std::size_t depth)
    : depth_(depth) {
    std::vector<std::pair<ItemIndex, double>> scored;
    scored.reserve(purchase_counts.size());
    for (std::uint32_t i = 0; i < purchase_counts.size(); ++i) {
        scored.emplace_back(ItemIndex{i}, static_cast<double>(purchase_counts[i]));
    }
    global_ = order_by_score(std::move(scored));
    if (global_.size() > depth + 1) global_.resize(depth + 1);
}

std::optional<std::vector<ItemIndex>> PopScorer::rank(const RecallSet& recall, std::size_t&) const {
    std::vector<ItemIndex> out;
    for (auto item : global_) {
        if (out.size() == depth_) break;
        if (item != recall.query) out.push_back(item);
    }
    return out;
}

std::optional<std::vector<ItemIndex>> PopCoScorer::rank(const RecallSet& recall,
                                                        std::size_t&) const {
    std::vector<std::pair<ItemIndex, double>> scored;
    scored.reserve(recall.candidates.size());
    for (auto c : recall.candidates) {
        scored.emplace_back(c, static_cast<double>(stats_->frequency(recall.query, c)));
    }
    return order_by_score(std::move(scored));
}

NeatCosineScorer::NeatCosineScorer(const EmbeddingTable& table, const Catalog& catalog)
    : table_(&table), row_(catalog.size()) {
    for (std::uint32_t i = 0; i < catalog.size(); ++i) {
        row_[i] = table.find_item(catalog.items.name(i));
    }
}

std::optional<std::vector<ItemIndex>> NeatCosineScorer::rank(const RecallSet& recall,
                                                             std::size_t& missing) const {
    auto row = [&](ItemIndex item) -> std::optional<std::size_t> {
        return item.value < row_.size() ? row_[item.value] : std::nullopt;
    };
    const auto query_row = row(recall.query);
    if (!query_row) return std::nullopt;
    const GaussianView query = table_->item(*query_row);
    if (dot(query.mean, query.mean) == 0.0) return std::nullopt;

    std::vector<std::pair<ItemIndex, double>> scored;
    scored.reserve(recall.candidates.size());
    for (auto c : recall.candidates) {
        const auto r = row(c);
        if (!r) {
            ++missing;
            continue;
        }
        const GaussianView cand = table_->item(*r);
        if (dot(cand.mean, cand.mean) == 0.0) {
            ++missing;
            continue;
        }
        scored.emplace_back(c, cosine_score(query, cand));
    }
    return order_by_score(std::move(scored));
}

const MethodReport& EvalReport::method(const std::string& name) const {
    for (const auto& m : methods) {
        if (m.method == name) return m;
    }
    throw LookupError(fmt::format("no report for method '{}'", name));
}

std::vector<EvalLabel> resolve_labels(std::span<const LabelPair> labels, const Catalog& catalog) {
    std::vector<EvalLabel> out;
    out.reserve(labels.size());
    for (const auto& l : labels) {
        out.push_back({catalog.find(l.query), catalog.find(l.rec)});
    }
    return out;
}

namespace {

struct LabelOutcome {
    bool skipped = true;
    std::vector<double> hr;
    std::vector<double> ndcg;
    std::size_t missing = 0;
};

LabelOutcome score_label(const EvalLabel& label, const RecallIndex& index, const Scorer& scorer,
                         const EvalOptions& options) {
    LabelOutcome out;
    if (!label.query) return out;
    const auto recall = index.recall(*label.query, options.recall_size);
    if (!recall) return out;
    const auto ranked = scorer.rank(*recall, out.missing);
    if (!ranked) return out;
    out.skipped = false;
    for (auto k : options.ks) {
        out.hr.push_back(label.rec ? hr_at_k(*ranked, *label.rec, k) : 0.0);
        out.ndcg.push_back(label.rec ? ndcg_at_k(*ranked, *label.rec, k) : 0.0);
    }
    return out;
}

}  // namespace

EvalReport evaluate(std::span<const EvalLabel> labels, const CoPurchaseStats& train_stats,
                    std::span<const Scorer* const> scorers, const EvalOptions& options) {
    if (labels.empty()) {
        throw DataError("evaluation needs at least one label");
    }
    for (auto k : options.ks) {
        if (k < 1) throw ConfigError("metric cutoffs K must be at least 1");
    }
    // Aggregating in a canonical order makes the report independent of the
    // label input order down to the last bit.
    std::vector<EvalLabel> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end(), [](const EvalLabel& a, const EvalLabel& b) {
        return std::tie(a.query, a.rec) < std::tie(b.query, b.rec);
    });

    const RecallIndex index(train_stats);
    EvalReport report;
    for (const Scorer* scorer : scorers) {
        std::vector<LabelOutcome> outcomes(sorted.size());
        const std::size_t workers = std::max<std::size_t>(1, std::min(options.threads, sorted.size()));
        auto run = [&](std::size_t w) {
            for (std::size_t i = w; i < sorted.size(); i += workers) {
                outcomes[i] = score_label(sorted[i], index, *scorer, options);
            }
        };
        if (workers == 1) {
            run(0);
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
        }

        MethodReport m;
        m.method = scorer->name();
        m.ks = options.ks;
        m.hr.assign(options.ks.size(), 0.0);
        m.ndcg.assign(options.ks.size(), 0.0);
        for (const auto& o : outcomes) {
            m.missing_candidates += o.missing;
            if (o.skipped) {
                ++m.n_skipped;
                continue;
            }
            ++m.n_evaluated;
            for (std::size_t j = 0; j < options.ks.size(); ++j) {
                m.hr[j] += o.hr[j];
                m.ndcg[j] += o.ndcg[j];
            }
        }
        if (m.n_evaluated == 0) {
            throw DataError(fmt::format("method '{}': all {} labels were skipped", m.method,
                                        sorted.size()));
        }
        for (std::size_t j = 0; j < options.ks.size(); ++j) {
            m.hr[j] /= static_cast<double>(m.n_evaluated);
            m.ndcg[j] /= static_cast<double>(m.n_evaluated);
        }
        report.methods.push_back(std::move(m));
    }
    return report;
}

void write_report_csv(std::ostream& out, const EvalReport& report) {
    out << "method,K,HR,NDCG,n_evaluated,n_skipped\n";
    for (const auto& m : report.methods) {
        for (std::size_t j = 0; j < m.ks.size(); ++j) {
            out << m.method << ',' << m.ks[j] << ',' << detail::format_double(m.hr[j]) << ','
                << detail::format_double(m.ndcg[j]) << ',' << m.n_evaluated << ',' << m.n_skipped
                << '\n';
        }
    }
}

void print_report(std::ostream& out, const EvalReport& report) {
    out << fmt::format("{:<8} {:>4} {:>8} {:>8} {:>11} {:>9}\n", "method", "K", "HR", "NDCG",
                       "evaluated", "skipped");
    for (const auto& m : report.methods) {
        for (std::size_t j = 0; j < m.ks.size(); ++j) {
            out << fmt::format("{:<8} {:>4} {:>8.4f} {:>8.4f} {:>11} {:>9}\n", m.method, m.ks[j],
                               m.hr[j], m.ndcg[j], m.n_evaluated, m.n_skipped);
        }
    }
}

}  // namespace neat
