#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "neat/config.hpp"
#include "neat/corpus.hpp"
#include "neat/dataset.hpp"
#include "neat/gaussian.hpp"

namespace neat {

enum class TrainMode { Neat, NeatBpr };

std::string_view to_string(TrainMode mode);
/// Accepts "neat", "neat-bpr" (also "neat_bpr", "NEAT_BPR").
TrainMode parse_mode(std::string_view text);

struct TrainConfig {
    double margin = 0.5;
    std::size_t dim = 100;
    std::size_t epochs = 5;
    double learning_rate = 0.05;
    std::size_t batch_size = 128;
    std::size_t num_negatives = 5;
    std::size_t window = 5;
    TrainMode mode = TrainMode::Neat;
    std::uint64_t seed = 1;
    double c_min = 1e-3;
    double c_max = 10.0;
    double init_scale = 0.0;  // <= 0 means 0.5 / dim
    std::size_t max_retries = 50;
    std::size_t threads = 1;
    bool deterministic = true;

    /// Throws ConfigError when a field is out of range.
    void validate() const;

    /// Overrides fields of `base` with the keys present in `config`.
    static TrainConfig from_config(const KeyValueConfig& config, TrainConfig base);
    static TrainConfig from_config(const KeyValueConfig& config);
    /// Every field as key/value text, in the keys from_config accepts.
    KeyValueConfig to_config() const;
};

/// User-side negatives for the BPR terms: q' for the query, v' for the rec.
struct BprNegatives {
    std::size_t user = 0;
    std::size_t query_negative = 0;
    std::size_t rec_negative = 0;
};

/// One training record in embedding-table row numbers.
struct TrainingSample {
    std::size_t query = 0;
    std::size_t positive = 0;
    std::vector<std::size_t> negatives;
    std::optional<BprNegatives> bpr;  // present iff mode is NeatBpr
};

/// max(0, margin - logE(q, v) + logE(q, v')).
double item_margin_loss(GaussianView query, GaussianView positive, GaussianView negative,
                        double margin);

/// 1 - sigmoid(<theta, pos_mean> - <theta, neg_mean>).
double bpr_loss(std::span<const double> theta, std::span<const double> pos_mean,
                std::span<const double> neg_mean);

/// Hinge summed over the negatives, plus both BPR terms in NeatBpr mode.
double sample_loss(const TrainingSample& sample, const EmbeddingTable& table,
                   const TrainConfig& config);

/// Partial derivatives of a loss with respect to the parameters it touched.
class SparseGradient {
public:
    struct ItemPart {
        std::size_t row = 0;
        std::vector<double> mean;
        double variance = 0.0;
    };
    struct UserPart {
        std::size_t row = 0;
        std::vector<double> theta;
    };

    ItemPart& item(std::size_t row, std::size_t dim);
    UserPart& user(std::size_t row, std::size_t dim);
    const ItemPart* find_item(std::size_t row) const;
    const UserPart* find_user(std::size_t row) const;

    const std::vector<ItemPart>& items() const { return items_; }
    const std::vector<UserPart>& users() const { return users_; }
    bool empty() const { return items_.empty() && users_.empty(); }
    void clear();

private:
    std::vector<ItemPart> items_;
    std::vector<UserPart> users_;
    std::unordered_map<std::size_t, std::size_t> item_slot_;
    std::unordered_map<std::size_t, std::size_t> user_slot_;
};

/// Analytic gradient of sample_loss. Clipped hinge terms (loss <= 0)
/// contribute nothing, so a fully clipped NEAT sample yields an empty set.
SparseGradient gradients(const TrainingSample& sample, const EmbeddingTable& table,
                         const TrainConfig& config);

/// Draws negatives from the unigram distribution over query-slot marginals
/// raised to the 3/4 power. draw(q) rejects q itself and every item
/// co-purchased with q; after max_retries rejections it gives up and returns
/// the last draw other than q.
class NegativeSampler {
public:
    static constexpr double kPower = 0.75;

    NegativeSampler(const CoPurchaseStats& stats, std::size_t catalog_size, std::uint64_t seed,
                    std::size_t max_retries = 50);

    std::size_t draw(std::size_t query);
    /// Rejects items in `purchased` (sorted ascending).
    std::size_t draw_for_user(std::span<const ItemIndex> purchased);

    double probability(std::size_t item) const;
    std::size_t catalog_size() const { return catalog_size_; }
    /// Number of draws that exhausted max_retries.
    std::uint64_t fallbacks() const { return fallbacks_; }

    /// Same distribution, independent random stream.
    NegativeSampler fork(std::uint64_t seed) const;

private:
    template <typename Reject>
    std::size_t draw_rejecting(std::size_t self, const char* what, Reject&& reject);
    void note_fallback(const char* what);

    const CoPurchaseStats* stats_;
    std::size_t catalog_size_;
    std::size_t max_retries_;
    std::shared_ptr<const std::vector<double>> probabilities_;
    std::discrete_distribution<std::size_t> dist_;
    std::mt19937_64 rng_;
    std::uint64_t fallbacks_ = 0;
};

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;  // mean over batches of the per-batch mean sample loss
    double wallclock_seconds = 0.0;
};

struct TrainResult {
    EmbeddingTable table;
    std::vector<EpochStats> trace;
    std::uint64_t sampler_fallbacks = 0;
};

/// Mini-batch SGD over the dataset's pairs. Each batch applies
/// param -= learning_rate * (mean of the per-sample gradients) and clamps
/// touched variances into [c_min, c_max]. Negatives are redrawn every epoch.
///
/// With deterministic set (or threads == 1) training is single threaded and
/// bit-reproducible for a fixed seed. Otherwise `threads` workers update the
/// shared table without locks; lost updates are tolerated.
///
/// Throws NumericError naming the batch when a parameter becomes non-finite.
TrainResult train(const Dataset& data, const TrainConfig& config);

/// CSV `epoch,mean_loss,wallclock_seconds`.
void write_loss_trace(std::ostream& out, std::span<const EpochStats> trace);

}  // namespace neat
