#include "neat/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "neat/error.hpp"
#include "tsv.hpp"

namespace neat {

std::string_view to_string(TrainMode mode) {
    return mode == TrainMode::Neat ? "neat" : "neat-bpr";
}

TrainMode parse_mode(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::replace(lower.begin(), lower.end(), '_', '-');
    if (lower == "neat") return TrainMode::Neat;
    if (lower == "neat-bpr" || lower == "neat+bpr") return TrainMode::NeatBpr;
    throw ConfigError(fmt::format("unknown training mode '{}' (expected neat or neat-bpr)", text));
}

void TrainConfig::validate() const {
    if (!(margin > 0.0) || !std::isfinite(margin)) {
        throw ConfigError(fmt::format("margin must be positive, got {}", margin));
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError(fmt::format("learning_rate must be positive, got {}", learning_rate));
    }
    auto at_least_one = [](std::size_t v, const char* name) {
        if (v < 1) throw ConfigError(fmt::format("{} must be at least 1", name));
    };
    at_least_one(dim, "dim");
    at_least_one(epochs, "epochs");
    at_least_one(batch_size, "batch_size");
    at_least_one(num_negatives, "num_negatives");
    at_least_one(window, "window");
    at_least_one(max_retries, "max_retries");
    at_least_one(threads, "threads");
    if (!(c_min > 0.0 && c_min < c_max) || !std::isfinite(c_max)) {
        throw ConfigError(fmt::format("clamp bounds need 0 < c_min < c_max, got [{}, {}]", c_min, c_max));
    }
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv, TrainConfig base) {
    auto count = [&](const char* key, std::size_t fallback) {
        auto v = kv.get_int(key, static_cast<long long>(fallback));
        if (v < 0) throw ConfigError(fmt::format("{} must be non-negative, got {}", key, v));
        return static_cast<std::size_t>(v);
    };
    TrainConfig c = base;
    c.margin = kv.get_double("margin", c.margin);
    c.dim = count("dim", c.dim);
    c.epochs = count("epochs", c.epochs);
    c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
    c.batch_size = count("batch_size", c.batch_size);
    c.num_negatives = count("num_negatives", c.num_negatives);
    c.window = count("window", c.window);
    if (auto mode = kv.get("mode")) c.mode = parse_mode(*mode);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
    c.c_min = kv.get_double("c_min", c.c_min);
    c.c_max = kv.get_double("c_max", c.c_max);
    c.init_scale = kv.get_double("init_scale", c.init_scale);
    c.max_retries = count("max_retries", c.max_retries);
    c.threads = count("threads", c.threads);
    if (auto det = kv.get("deterministic")) {
        if (*det == "true" || *det == "1") {
            c.deterministic = true;
        } else if (*det == "false" || *det == "0") {
            c.deterministic = false;
        } else {
            throw ConfigError(fmt::format("deterministic must be true or false, got '{}'", *det));
        }
    }
    return c;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) {
    return from_config(kv, TrainConfig{});
}

KeyValueConfig TrainConfig::to_config() const {
    KeyValueConfig kv;
    kv.set("margin", detail::format_double(margin));
    kv.set("dim", std::to_string(dim));
    kv.set("epochs", std::to_string(epochs));
    kv.set("learning_rate", detail::format_double(learning_rate));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("num_negatives", std::to_string(num_negatives));
    kv.set("window", std::to_string(window));
    kv.set("mode", std::string(to_string(mode)));
    kv.set("seed", std::to_string(seed));
    kv.set("c_min", detail::format_double(c_min));
    kv.set("c_max", detail::format_double(c_max));
    kv.set("init_scale", detail::format_double(init_scale > 0.0 ? init_scale : 0.5 / dim));
    kv.set("max_retries", std::to_string(max_retries));
    kv.set("threads", std::to_string(threads));
    kv.set("deterministic", deterministic ? "true" : "false");
    return kv;
}

namespace {

/// 1 - sigmoid(x), evaluated without overflow.
double one_minus_sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

/// d logE / d s for summed variance s and squared mean distance dist2.
double dlog_e_ds(double dist2, double s, double dim) {
    return -dim / (2.0 * s) + dist2 / (2.0 * s * s);
}

struct TableSource {
    const EmbeddingTable& table;
    GaussianView item(std::size_t row) const { return table.item(row); }
    std::span<const double> theta(std::size_t row) const { return table.theta(row); }
};

void check_rows(const TrainingSample& sample, const EmbeddingTable& table, const TrainConfig& config) {
    auto item = [&](std::size_t row) {
        if (row >= table.item_count()) {
            throw LookupError(fmt::format("sample references item row {} but the table has {} items",
                                          row, table.item_count()));
        }
    };
    item(sample.query);
    item(sample.positive);
    for (auto n : sample.negatives) item(n);
    if (config.mode == TrainMode::NeatBpr) {
        if (!sample.bpr) {
            throw DataError("neat-bpr sample is missing its user negatives");
        }
        item(sample.bpr->query_negative);
        item(sample.bpr->rec_negative);
        if (sample.bpr->user >= table.user_count()) {
            throw LookupError(fmt::format("sample references user row {} but the table has {} users",
                                          sample.bpr->user, table.user_count()));
        }
    }
}

/// Loss of one sample; when `grad` is set, adds scale * d(loss)/d(param).
template <typename Source>
double accumulate(const TrainingSample& sample, const Source& source, const TrainConfig& config,
                  SparseGradient* grad, double scale) {
    const GaussianView q = source.item(sample.query);
    const GaussianView v = source.item(sample.positive);
    const std::size_t d = q.dim();
    const double dim = static_cast<double>(d);
    const double pos_ll = log_expected_likelihood(q, v);

    double loss = 0.0;
    for (std::size_t neg : sample.negatives) {
        const GaussianView n = source.item(neg);
        const double hinge = config.margin - (pos_ll - log_expected_likelihood(q, n));
        if (hinge <= 0.0) continue;
        loss += hinge;
        if (!grad) continue;

        // -logE(q, v) appears once per active negative.
        // d/dmu_q = delta/s, d/dmu_v = -delta/s, d/dvar = -dlogE/ds.
        {
            const double s = q.variance + v.variance;
            double dist2 = 0.0;
            auto& gq = grad->item(sample.query, d);
            for (std::size_t k = 0; k < d; ++k) {
                const double delta = q.mean[k] - v.mean[k];
                dist2 += delta * delta;
                gq.mean[k] += scale * delta / s;
            }
            const double dvar = -dlog_e_ds(dist2, s, dim);
            gq.variance += scale * dvar;
            auto& gv = grad->item(sample.positive, d);
            for (std::size_t k = 0; k < d; ++k) {
                gv.mean[k] -= scale * (q.mean[k] - v.mean[k]) / s;
            }
            gv.variance += scale * dvar;
        }
        // +logE(q, v'): d/dmu_q = -delta'/s', d/dmu_v' = delta'/s', d/dvar = dlogE/ds'.
        {
            const double s = q.variance + n.variance;
            double dist2 = 0.0;
            auto& gq = grad->item(sample.query, d);
            for (std::size_t k = 0; k < d; ++k) {
                const double delta = q.mean[k] - n.mean[k];
                dist2 += delta * delta;
                gq.mean[k] -= scale * delta / s;
            }
            const double dvar = dlog_e_ds(dist2, s, dim);
            gq.variance += scale * dvar;
            auto& gn = grad->item(neg, d);
            for (std::size_t k = 0; k < d; ++k) {
                gn.mean[k] += scale * (q.mean[k] - n.mean[k]) / s;
            }
            gn.variance += scale * dvar;
        }
    }

    if (config.mode == TrainMode::NeatBpr && sample.bpr) {
        const auto theta = source.theta(sample.bpr->user);
        auto term = [&](std::size_t pos_row, std::size_t neg_row) {
            const auto pos = source.item(pos_row).mean;
            const auto neg = source.item(neg_row).mean;
            const double x = dot(theta, pos) - dot(theta, neg);
            const double value = one_minus_sigmoid(x);
            loss += value;
            if (!grad) return;
            // d(1 - sigmoid(x))/dx = -sigmoid(x) (1 - sigmoid(x))
            const double c = -(1.0 - value) * value * scale;
            {
                auto& gu = grad->user(sample.bpr->user, d);
                for (std::size_t k = 0; k < d; ++k) gu.theta[k] += c * (pos[k] - neg[k]);
            }
            {
                auto& gp = grad->item(pos_row, d);
                for (std::size_t k = 0; k < d; ++k) gp.mean[k] += c * theta[k];
            }
            {
                auto& gn = grad->item(neg_row, d);
                for (std::size_t k = 0; k < d; ++k) gn.mean[k] -= c * theta[k];
            }
        };
        term(sample.query, sample.bpr->query_negative);
        term(sample.positive, sample.bpr->rec_negative);
    }
    return loss;
}

double relaxed_load(const double& x) {
    return std::atomic_ref<double>(const_cast<double&>(x)).load(std::memory_order_relaxed);
}

void relaxed_store(double& x, double value) {
    std::atomic_ref<double>(x).store(value, std::memory_order_relaxed);
}

/// Private copy of the rows one batch touches, read with relaxed atomics so
/// concurrent workers never race on plain loads.
class Snapshot {
public:
    explicit Snapshot(std::size_t dim) : dim_(dim) {}

    void gather(const EmbeddingTable& table, std::span<const TrainingSample> batch) {
        item_offset_.clear();
        user_offset_.clear();
        means_.clear();
        variances_.clear();
        thetas_.clear();
        auto add_item = [&](std::size_t row) {
            if (!item_offset_.emplace(row, variances_.size()).second) return;
            variances_.push_back(relaxed_load(table.all_variances()[row]));
            for (double x : table.mean(row)) means_.push_back(relaxed_load(x));
        };
        for (const auto& s : batch) {
            add_item(s.query);
            add_item(s.positive);
            for (auto n : s.negatives) add_item(n);
            if (s.bpr) {
                add_item(s.bpr->query_negative);
                add_item(s.bpr->rec_negative);
                if (user_offset_.emplace(s.bpr->user, thetas_.size() / dim_).second) {
                    for (double x : table.theta(s.bpr->user)) thetas_.push_back(relaxed_load(x));
                }
            }
        }
    }

    GaussianView item(std::size_t row) const {
        const std::size_t slot = item_offset_.at(row);
        return {std::span<const double>(means_).subspan(slot * dim_, dim_), variances_[slot]};
    }

    std::span<const double> theta(std::size_t row) const {
        return std::span<const double>(thetas_).subspan(user_offset_.at(row) * dim_, dim_);
    }

private:
    std::size_t dim_;
    std::unordered_map<std::size_t, std::size_t> item_offset_;
    std::unordered_map<std::size_t, std::size_t> user_offset_;
    std::vector<double> means_;
    std::vector<double> variances_;
    std::vector<double> thetas_;
};

}  // namespace

double item_margin_loss(GaussianView query, GaussianView positive, GaussianView negative,
                        double margin) {
    return std::max(0.0, margin - (log_expected_likelihood(query, positive) -
                                   log_expected_likelihood(query, negative)));
}

double bpr_loss(std::span<const double> theta, std::span<const double> pos_mean,
                std::span<const double> neg_mean) {
    return one_minus_sigmoid(dot(theta, pos_mean) - dot(theta, neg_mean));
}

double sample_loss(const TrainingSample& sample, const EmbeddingTable& table,
                   const TrainConfig& config) {
    check_rows(sample, table, config);
    return accumulate(sample, TableSource{table}, config, nullptr, 1.0);
}

SparseGradient gradients(const TrainingSample& sample, const EmbeddingTable& table,
                         const TrainConfig& config) {
    check_rows(sample, table, config);
    SparseGradient grad;
    accumulate(sample, TableSource{table}, config, &grad, 1.0);
    return grad;
}

SparseGradient::ItemPart& SparseGradient::item(std::size_t row, std::size_t dim) {
    auto [it, fresh] = item_slot_.emplace(row, items_.size());
    if (fresh) items_.push_back({row, std::vector<double>(dim, 0.0), 0.0});
    return items_[it->second];
}

SparseGradient::UserPart& SparseGradient::user(std::size_t row, std::size_t dim) {
    auto [it, fresh] = user_slot_.emplace(row, users_.size());
    if (fresh) users_.push_back({row, std::vector<double>(dim, 0.0)});
    return users_[it->second];
}

const SparseGradient::ItemPart* SparseGradient::find_item(std::size_t row) const {
    auto it = item_slot_.find(row);
    return it == item_slot_.end() ? nullptr : &items_[it->second];
}

const SparseGradient::UserPart* SparseGradient::find_user(std::size_t row) const {
    auto it = user_slot_.find(row);
    return it == user_slot_.end() ? nullptr : &users_[it->second];
}

void SparseGradient::clear() {
    items_.clear();
    users_.clear();
    item_slot_.clear();
    user_slot_.clear();
}

NegativeSampler::NegativeSampler(const CoPurchaseStats& stats, std::size_t catalog_size,
                                 std::uint64_t seed, std::size_t max_retries)
    : stats_(&stats), catalog_size_(catalog_size), max_retries_(max_retries), rng_(seed) {
    if (catalog_size < 2) {
        throw DataError("negative sampling needs at least two items in the catalog");
    }
    std::vector<double> weights(catalog_size);
    double total = 0.0;
    for (std::size_t i = 0; i < catalog_size; ++i) {
        weights[i] = std::pow(static_cast<double>(stats.marginal(ItemIndex{static_cast<std::uint32_t>(i)})),
                              kPower);
        total += weights[i];
    }
    if (total == 0.0) {
        std::fill(weights.begin(), weights.end(), 1.0);
        total = static_cast<double>(catalog_size);
    }
    auto probs = std::make_shared<std::vector<double>>(catalog_size);
    for (std::size_t i = 0; i < catalog_size; ++i) (*probs)[i] = weights[i] / total;
    probabilities_ = std::move(probs);
    dist_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
}

double NegativeSampler::probability(std::size_t item) const {
    return probabilities_->at(item);
}

NegativeSampler NegativeSampler::fork(std::uint64_t seed) const {
    NegativeSampler copy(*this);
    copy.rng_.seed(seed);
    copy.fallbacks_ = 0;
    return copy;
}

void NegativeSampler::note_fallback(const char* what) {
    if (fallbacks_++ == 0) {
        spdlog::warn("negative sampler: no {} found after {} draws; using the last draw "
                     "(further occurrences are only counted)",
                     what, max_retries_);
    }
}

template <typename Reject>
std::size_t NegativeSampler::draw_rejecting(std::size_t self, const char* what, Reject&& reject) {
    std::optional<std::size_t> last;
    for (std::size_t attempt = 0; attempt < max_retries_; ++attempt) {
        const std::size_t candidate = dist_(rng_);
        if (candidate == self) continue;
        if (!reject(candidate)) return candidate;
        last = candidate;
    }
    note_fallback(what);
    if (!last) {
        // Only `self` carries weight: fall back to a uniform choice of another item.
        std::uniform_int_distribution<std::size_t> uniform(0, catalog_size_ - 2);
        std::size_t pick = uniform(rng_);
        last = pick >= self ? pick + 1 : pick;
    }
    return *last;
}

std::size_t NegativeSampler::draw(std::size_t query) {
    const ItemIndex q{static_cast<std::uint32_t>(query)};
    return draw_rejecting(query, "item outside the query's co-purchases", [&](std::size_t candidate) {
        return stats_->contains(q, ItemIndex{static_cast<std::uint32_t>(candidate)});
    });
}

std::size_t NegativeSampler::draw_for_user(std::span<const ItemIndex> purchased) {
    return draw_rejecting(catalog_size_, "item the user never purchased", [&](std::size_t candidate) {
        return std::binary_search(purchased.begin(), purchased.end(),
                                  ItemIndex{static_cast<std::uint32_t>(candidate)});
    });
}

TrainResult train(const Dataset& data, const TrainConfig& config) {
    config.validate();
    if (data.pairs.empty()) {
        throw DataError("training needs at least one co-purchase pair");
    }
    const bool bpr = config.mode == TrainMode::NeatBpr;
    std::vector<std::string> item_ids(data.catalog.items.names().begin(),
                                      data.catalog.items.names().end());
    std::vector<std::string> user_ids;
    if (bpr) user_ids.assign(data.users.names().begin(), data.users.names().end());
    if (bpr && data.user_items.size() != data.users.size()) {
        throw DataError("neat-bpr training needs per-user purchase lists");
    }

    TrainResult result;
    result.table = init_table(std::move(item_ids), std::move(user_ids), config.dim, config.seed,
                              config.init_scale);
    EmbeddingTable& table = result.table;

    const NegativeSampler base_sampler(data.stats, data.catalog.size(),
                                       config.seed ^ 0x5851f42d4c957f2dULL, config.max_retries);

    const std::size_t workers = config.deterministic ? 1 : config.threads;
    const std::size_t n_pairs = data.pairs.size();
    const std::size_t n_batches = (n_pairs + config.batch_size - 1) / config.batch_size;
    const std::size_t dim = config.dim;

    std::vector<std::size_t> order(n_pairs);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(config.seed + 0x9e3779b97f4a7c15ULL);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        std::vector<double> worker_loss(workers, 0.0);
        std::vector<std::uint64_t> worker_fallbacks(workers, 0);
        std::vector<std::exception_ptr> worker_error(workers);
        std::atomic<bool> abort{false};

        auto run_worker = [&](std::size_t w) {
            try {
                NegativeSampler sampler =
                    base_sampler.fork(config.seed * 1'000'003ULL + epoch * 7919ULL + w);
                Snapshot snapshot(dim);
                SparseGradient grad;
                std::vector<TrainingSample> batch;
                for (std::size_t b = w; b < n_batches && !abort.load(std::memory_order_relaxed);
                     b += workers) {
                    const std::size_t begin = b * config.batch_size;
                    const std::size_t end = std::min(n_pairs, begin + config.batch_size);
                    batch.resize(end - begin);
                    for (std::size_t i = begin; i < end; ++i) {
                        const auto& pair = data.pairs[order[i]];
                        auto& s = batch[i - begin];
                        s.query = pair.query.value;
                        s.positive = pair.rec.value;
                        s.negatives.resize(config.num_negatives);
                        for (auto& n : s.negatives) n = sampler.draw(s.query);
                        if (bpr) {
                            const auto& bought = data.user_items[pair.user.value];
                            BprNegatives neg;
                            neg.user = pair.user.value;
                            neg.query_negative = sampler.draw_for_user(bought);
                            neg.rec_negative = sampler.draw_for_user(bought);
                            s.bpr = neg;
                        } else {
                            s.bpr.reset();
                        }
                    }

                    snapshot.gather(table, batch);
                    grad.clear();
                    const double scale = 1.0 / static_cast<double>(batch.size());
                    double batch_loss = 0.0;
                    for (const auto& s : batch) {
                        batch_loss += accumulate(s, snapshot, config, &grad, scale);
                    }
                    worker_loss[w] += batch_loss * scale;

                    const double lr = config.learning_rate;
                    auto non_finite = [&](const char* what, const std::string& id) {
                        return NumericError(fmt::format(
                            "non-finite {} for '{}' after batch {} of epoch {}", what, id, b, epoch));
                    };
                    for (const auto& part : grad.items()) {
                        auto mean = table.mean(part.row);
                        for (std::size_t k = 0; k < dim; ++k) {
                            const double next = relaxed_load(mean[k]) - lr * part.mean[k];
                            if (!std::isfinite(next)) throw non_finite("mean", table.item_ids()[part.row]);
                            relaxed_store(mean[k], next);
                        }
                        double& var = table.variance(part.row);
                        const double next = relaxed_load(var) - lr * part.variance;
                        if (!std::isfinite(next)) throw non_finite("variance", table.item_ids()[part.row]);
                        relaxed_store(var, std::clamp(next, config.c_min, config.c_max));
                    }
                    for (const auto& part : grad.users()) {
                        auto theta = table.theta(part.row);
                        for (std::size_t k = 0; k < dim; ++k) {
                            const double next = relaxed_load(theta[k]) - lr * part.theta[k];
                            if (!std::isfinite(next)) throw non_finite("user vector", table.user_ids()[part.row]);
                            relaxed_store(theta[k], next);
                        }
                    }
                }
                worker_fallbacks[w] = sampler.fallbacks();
            } catch (...) {
                worker_error[w] = std::current_exception();
                abort.store(true);
            }
        };

        if (workers == 1) {
            run_worker(0);
        } else {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run_worker, w);
        }
        for (auto& err : worker_error) {
            if (err) std::rethrow_exception(err);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = std::accumulate(worker_loss.begin(), worker_loss.end(), 0.0) /
                          static_cast<double>(n_batches);
        stats.wallclock_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const auto fallbacks = std::accumulate(worker_fallbacks.begin(), worker_fallbacks.end(),
                                               std::uint64_t{0});
        result.sampler_fallbacks += fallbacks;
        spdlog::info("epoch {}/{}: mean loss {:.6f} ({:.2f}s, {} negative fallbacks)", epoch,
                     config.epochs, stats.mean_loss, stats.wallclock_seconds, fallbacks);
        result.trace.push_back(stats);
    }
    return result;
}

void write_loss_trace(std::ostream& out, std::span<const EpochStats> trace) {
    out << "epoch,mean_loss,wallclock_seconds\n";
    for (const auto& e : trace) {
        out << e.epoch << ',' << detail::format_double(e.mean_loss) << ','
            << fmt::format("{:.3f}", e.wallclock_seconds) << '\n';
    }
}

}  // namespace neat
