#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace neat {

/// Read-only view of one spherical Gaussian embedding N(mean, variance * I).
struct GaussianView {
    std::span<const double> mean;
    double variance = 1.0;

    std::size_t dim() const { return mean.size(); }
};

/// Owning spherical Gaussian embedding.
struct GaussianEmbedding {
    std::vector<double> mean;
    double variance = 1.0;

    std::size_t dim() const { return mean.size(); }
    GaussianView view() const { return {mean, variance}; }
    operator GaussianView() const { return view(); }
};

/// log of the integral of N(x; a) * N(x; b) over R^d, i.e. the log density of
/// N(0; mu_a - mu_b, (var_a + var_b) I):
///
///   -(d/2) log(2 pi s) - |mu_a - mu_b|^2 / (2 s),   s = var_a + var_b
///
/// Throws DataError on a dimension mismatch and NumericError if s <= 0.
double log_expected_likelihood(GaussianView a, GaussianView b);

/// Cosine similarity of the two mean vectors. Throws NumericError when
/// either mean has zero norm and DataError on a dimension mismatch.
double cosine_score(GaussianView a, GaussianView b);

double dot(std::span<const double> a, std::span<const double> b);

/// Item Gaussians and user preference vectors keyed by opaque identifiers.
/// Means and user vectors are stored row-major in contiguous buffers.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    EmbeddingTable(std::size_t dim, std::vector<std::string> item_ids,
                   std::vector<std::string> user_ids = {});

    std::size_t dim() const { return dim_; }
    std::size_t item_count() const { return item_ids_.size(); }
    std::size_t user_count() const { return user_ids_.size(); }
    const std::vector<std::string>& item_ids() const { return item_ids_; }
    const std::vector<std::string>& user_ids() const { return user_ids_; }

    std::optional<std::size_t> find_item(const std::string& id) const;
    std::optional<std::size_t> find_user(const std::string& id) const;
    /// Throws LookupError for unknown ids.
    std::size_t require_item(const std::string& id) const;
    std::size_t require_user(const std::string& id) const;

    GaussianView item(std::size_t row) const {
        return {std::span<const double>(means_).subspan(row * dim_, dim_), variances_[row]};
    }
    GaussianView item(const std::string& id) const { return item(require_item(id)); }

    std::span<double> mean(std::size_t row) { return std::span<double>(means_).subspan(row * dim_, dim_); }
    std::span<const double> mean(std::size_t row) const {
        return std::span<const double>(means_).subspan(row * dim_, dim_);
    }
    double& variance(std::size_t row) { return variances_[row]; }
    double variance(std::size_t row) const { return variances_[row]; }

    std::span<double> theta(std::size_t row) { return std::span<double>(thetas_).subspan(row * dim_, dim_); }
    std::span<const double> theta(std::size_t row) const {
        return std::span<const double>(thetas_).subspan(row * dim_, dim_);
    }

    std::span<double> all_means() { return means_; }
    std::span<double> all_variances() { return variances_; }
    std::span<double> all_thetas() { return thetas_; }
    std::span<const double> all_means() const { return means_; }
    std::span<const double> all_variances() const { return variances_; }
    std::span<const double> all_thetas() const { return thetas_; }

    friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
        return a.dim_ == b.dim_ && a.item_ids_ == b.item_ids_ && a.user_ids_ == b.user_ids_ &&
               a.means_ == b.means_ && a.variances_ == b.variances_ && a.thetas_ == b.thetas_;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> item_ids_;
    std::vector<std::string> user_ids_;
    std::unordered_map<std::string, std::size_t> item_index_;
    std::unordered_map<std::string, std::size_t> user_index_;
    std::vector<double> means_;
    std::vector<double> variances_;
    std::vector<double> thetas_;
};

/// Means and user vectors uniform in [-init_scale, init_scale]; variances 1.
/// A non-positive init_scale selects the default 0.5 / dim.
EmbeddingTable init_table(std::vector<std::string> item_ids, std::vector<std::string> user_ids,
                          std::size_t dim, std::uint64_t seed, double init_scale = 0.0);

/// Text persistence. Items: `#dim=<d>` then `item_id\tvariance\tm_1 ... m_d`.
/// Users: `#dim=<d>` then `user_id\tt_1 ... t_d`. Values round-trip exactly.
void write_items(std::ostream& out, const EmbeddingTable& table);
void write_users(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_table(std::istream& items, std::istream* users = nullptr);

void save_table(const std::filesystem::path& dir, const EmbeddingTable& table);
/// Reads items.emb and, when present, users.emb.
EmbeddingTable load_table(const std::filesystem::path& dir);

}  // namespace neat
