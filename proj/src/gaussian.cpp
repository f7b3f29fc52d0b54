#include "neat/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "neat/error.hpp"
#include "tsv.hpp"

namespace neat {

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DataError(fmt::format("dimension mismatch: {} vs {}", a.size(), b.size()));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) sum += a[k] * b[k];
    return sum;
}

double log_expected_likelihood(GaussianView a, GaussianView b) {
    if (a.dim() != b.dim()) {
        throw DataError(fmt::format("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    const double s = a.variance + b.variance;
    if (!(s > 0.0)) {
        throw NumericError(fmt::format("summed variance must be positive, got {}", s));
    }
    double dist2 = 0.0;
    for (std::size_t k = 0; k < a.dim(); ++k) {
        const double delta = a.mean[k] - b.mean[k];
        dist2 += delta * delta;
    }
    const double d = static_cast<double>(a.dim());
    return -0.5 * d * std::log(2.0 * std::numbers::pi * s) - dist2 / (2.0 * s);
}

double cosine_score(GaussianView a, GaussianView b) {
    const double ab = dot(a.mean, b.mean);
    const double aa = dot(a.mean, a.mean);
    const double bb = dot(b.mean, b.mean);
    if (aa == 0.0 || bb == 0.0) {
        throw NumericError("cosine of a zero-norm mean vector is undefined");
    }
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<std::string> item_ids,
                               std::vector<std::string> user_ids)
    : dim_(dim),
      item_ids_(std::move(item_ids)),
      user_ids_(std::move(user_ids)),
      means_(item_ids_.size() * dim, 0.0),
      variances_(item_ids_.size(), 1.0),
      thetas_(user_ids_.size() * dim, 0.0) {
    if (dim == 0) {
        throw ConfigError("embedding dimension must be at least 1");
    }
    for (std::size_t i = 0; i < item_ids_.size(); ++i) {
        if (!item_index_.emplace(item_ids_[i], i).second) {
            throw DataError(fmt::format("duplicate item id '{}'", item_ids_[i]));
        }
    }
    for (std::size_t u = 0; u < user_ids_.size(); ++u) {
        if (!user_index_.emplace(user_ids_[u], u).second) {
            throw DataError(fmt::format("duplicate user id '{}'", user_ids_[u]));
        }
    }
}

std::optional<std::size_t> EmbeddingTable::find_item(const std::string& id) const {
    auto it = item_index_.find(id);
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> EmbeddingTable::find_user(const std::string& id) const {
    auto it = user_index_.find(id);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingTable::require_item(const std::string& id) const {
    if (auto row = find_item(id)) return *row;
    throw LookupError(fmt::format("no embedding for item '{}'", id));
}

std::size_t EmbeddingTable::require_user(const std::string& id) const {
    if (auto row = find_user(id)) return *row;
    throw LookupError(fmt::format("no vector for user '{}'", id));
}

EmbeddingTable init_table(std::vector<std::string> item_ids, std::vector<std::string> user_ids,
                          std::size_t dim, std::uint64_t seed, double init_scale) {
    EmbeddingTable table(dim, std::move(item_ids), std::move(user_ids));
    const double scale = init_scale > 0.0 ? init_scale : 0.5 / static_cast<double>(dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-scale, scale);
    for (auto& m : table.all_means()) m = uniform(rng);
    for (auto& t : table.all_thetas()) t = uniform(rng);
    return table;
}

void write_items(std::ostream& out, const EmbeddingTable& table) {
    out << "#dim=" << table.dim() << '\n';
    for (std::size_t i = 0; i < table.item_count(); ++i) {
        out << table.item_ids()[i] << '\t' << detail::format_double(table.variance(i)) << '\t';
        auto mean = table.mean(i);
        for (std::size_t k = 0; k < mean.size(); ++k) {
            if (k) out << ' ';
            out << detail::format_double(mean[k]);
        }
        out << '\n';
    }
}

void write_users(std::ostream& out, const EmbeddingTable& table) {
    out << "#dim=" << table.dim() << '\n';
    for (std::size_t u = 0; u < table.user_count(); ++u) {
        out << table.user_ids()[u] << '\t';
        auto theta = table.theta(u);
        for (std::size_t k = 0; k < theta.size(); ++k) {
            if (k) out << ' ';
            out << detail::format_double(theta[k]);
        }
        out << '\n';
    }
}

namespace {

std::size_t read_dim_header(std::istream& in, const char* what) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(fmt::format("{}: missing '#dim=' header", what));
    }
    auto view = detail::chomp(line);
    if (!view.starts_with("#dim=")) {
        throw ParseError(fmt::format("{}: first line must be '#dim=<d>', got '{}'", what, view));
    }
    return detail::parse_number<std::size_t>(view.substr(5), what);
}

std::vector<double> parse_vector(std::string_view text, std::size_t dim, const std::string& where) {
    std::vector<double> out;
    out.reserve(dim);
    for (auto token : detail::split(text, ' ')) {
        if (token.empty()) continue;
        out.push_back(detail::parse_number<double>(token, where));
    }
    if (out.size() != dim) {
        throw ParseError(fmt::format("{}: expected {} components, found {}", where, dim, out.size()));
    }
    return out;
}

}  // namespace

EmbeddingTable read_table(std::istream& items_in, std::istream* users_in) {
    const std::size_t dim = read_dim_header(items_in, "item embeddings");
    std::vector<std::string> item_ids;
    std::vector<double> variances;
    std::vector<std::vector<double>> means;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(items_in, line)) {
        ++line_no;
        auto view = detail::chomp(line);
        if (view.empty()) continue;
        auto fields = detail::split(view, '\t');
        const auto where = fmt::format("item embeddings line {}", line_no);
        if (fields.size() != 3) {
            throw ParseError(fmt::format("{}: expected 3 tab-separated fields", where));
        }
        item_ids.emplace_back(fields[0]);
        variances.push_back(detail::parse_number<double>(fields[1], where));
        means.push_back(parse_vector(fields[2], dim, where));
    }

    std::vector<std::string> user_ids;
    std::vector<std::vector<double>> thetas;
    if (users_in) {
        const std::size_t udim = read_dim_header(*users_in, "user vectors");
        if (udim != dim) {
            throw DataError(fmt::format("user vectors have dim {} but items have dim {}", udim, dim));
        }
        line_no = 1;
        while (std::getline(*users_in, line)) {
            ++line_no;
            auto view = detail::chomp(line);
            if (view.empty()) continue;
            auto fields = detail::split(view, '\t');
            const auto where = fmt::format("user vectors line {}", line_no);
            if (fields.size() != 2) {
                throw ParseError(fmt::format("{}: expected 2 tab-separated fields", where));
            }
            user_ids.emplace_back(fields[0]);
            thetas.push_back(parse_vector(fields[1], dim, where));
        }
    }

    EmbeddingTable table(dim, std::move(item_ids), std::move(user_ids));
    for (std::size_t i = 0; i < means.size(); ++i) {
        std::copy(means[i].begin(), means[i].end(), table.mean(i).begin());
        table.variance(i) = variances[i];
    }
    for (std::size_t u = 0; u < thetas.size(); ++u) {
        std::copy(thetas[u].begin(), thetas[u].end(), table.theta(u).begin());
    }
    return table;
}

void save_table(const std::filesystem::path& dir, const EmbeddingTable& table) {
    std::filesystem::create_directories(dir);
    {
        auto out = detail::open_output(dir / "items.emb");
        write_items(out, table);
    }
    if (table.user_count() > 0) {
        auto out = detail::open_output(dir / "users.emb");
        write_users(out, table);
    }
}

EmbeddingTable load_table(const std::filesystem::path& dir) {
    auto items = detail::open_input(dir / "items.emb");
    if (std::filesystem::exists(dir / "users.emb")) {
        auto users = detail::open_input(dir / "users.emb");
        return read_table(items, &users);
    }
    return read_table(items);
}

}  // namespace neat
