#include "neat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "neat/error.hpp"

namespace neat {

void SynthSpec::validate() const {
    auto probability = [](double p, const char* name) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ConfigError(fmt::format("synth spec: {} must lie in [0, 1], got {}", name, p));
        }
    };
    probability(boost, "boost");
    probability(noise_prob, "noise_prob");
    if (items == 0) throw ConfigError("synth spec: items must be positive");
    if (users == 0) throw ConfigError("synth spec: users must be positive");
    if (categories == 0) throw ConfigError("synth spec: categories must be positive");
    if (!(basket_mean > 0.0) || !std::isfinite(basket_mean)) {
        throw ConfigError(fmt::format("synth spec: basket_mean must be positive, got {}", basket_mean));
    }
    if (!(popularity_skew >= 0.0) || !std::isfinite(popularity_skew)) {
        throw ConfigError("synth spec: popularity_skew must be non-negative");
    }
    if (2 * planted_pairs + noise_items > items) {
        throw ConfigError(fmt::format(
            "synth spec: {} planted pairs and {} noise items need more than {} items",
            planted_pairs, noise_items, items));
    }
    if (noise_items == items && noise_prob == 0.0) {
        throw ConfigError("synth spec: no regular items and noise_prob 0 can never fill a basket");
    }
}

SynthSpec SynthSpec::from_config(const KeyValueConfig& config) {
    config.reject_unknown({"items", "transactions", "users", "categories", "basket_mean",
                           "popularity_skew", "planted_pairs", "boost", "noise_items",
                           "noise_prob"});
    SynthSpec spec;
    auto count = [&](const char* key, std::size_t fallback) {
        auto v = config.get_int(key, static_cast<long long>(fallback));
        if (v < 0) throw ConfigError(fmt::format("synth spec: {} must be non-negative", key));
        return static_cast<std::size_t>(v);
    };
    spec.items = count("items", spec.items);
    spec.transactions = count("transactions", spec.transactions);
    spec.users = count("users", spec.users);
    spec.categories = count("categories", spec.categories);
    spec.basket_mean = config.get_double("basket_mean", spec.basket_mean);
    spec.popularity_skew = config.get_double("popularity_skew", spec.popularity_skew);
    spec.planted_pairs = count("planted_pairs", spec.planted_pairs);
    spec.boost = config.get_double("boost", spec.boost);
    spec.noise_items = count("noise_items", spec.noise_items);
    spec.noise_prob = config.get_double("noise_prob", spec.noise_prob);
    spec.validate();
    return spec;
}

namespace {

std::size_t digits(std::size_t n) {
    std::size_t d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

}  // namespace

std::string SynthSpec::item_id(std::size_t k) const {
    return fmt::format("i{:0{}}", k, digits(items > 0 ? items - 1 : 0));
}

std::vector<std::pair<std::string, std::string>> SynthSpec::planted() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t p = 0; p < planted_pairs; ++p) {
        out.emplace_back(item_id(2 * p), item_id(2 * p + 1));
    }
    return out;
}

std::vector<std::string> SynthSpec::noise() const {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < noise_items; ++k) {
        out.push_back(item_id(2 * planted_pairs + k));
    }
    return out;
}

TransactionCorpus generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);

    const std::size_t planted_end = 2 * spec.planted_pairs;
    const std::size_t noise_end = planted_end + spec.noise_items;

    // Anchors are every non-noise item.
    std::vector<std::size_t> anchors;
    std::vector<double> weights;
    for (std::size_t k = 0; k < spec.items; ++k) {
        if (k >= planted_end && k < noise_end) continue;
        weights.push_back(std::pow(static_cast<double>(anchors.size() + 1), -spec.popularity_skew));
        anchors.push_back(k);
    }
    std::discrete_distribution<std::size_t> pick_anchor(weights.begin(), weights.end());
    std::poisson_distribution<int> basket_draws(spec.basket_mean);
    std::bernoulli_distribution add_partner(spec.boost);
    std::bernoulli_distribution add_noise(spec.noise_prob);
    std::uniform_int_distribution<std::size_t> pick_user(0, spec.users - 1);

    std::vector<std::vector<std::size_t>> baskets;
    std::vector<std::size_t> basket_user;
    baskets.reserve(spec.transactions);
    std::vector<char> in_basket(spec.items, 0);

    for (std::size_t t = 0; t < spec.transactions; ++t) {
        std::vector<std::size_t> basket;
        while (basket.empty()) {
            auto include = [&](std::size_t k) {
                if (!in_basket[k]) {
                    in_basket[k] = 1;
                    basket.push_back(k);
                }
            };
            const int draws = anchors.empty() ? 0 : basket_draws(rng);
            for (int d = 0; d < draws; ++d) {
                const std::size_t k = anchors[pick_anchor(rng)];
                include(k);
                if (k < planted_end && add_partner(rng)) {
                    include(k ^ 1u);
                }
            }
            for (std::size_t k = planted_end; k < noise_end; ++k) {
                if (add_noise(rng)) include(k);
            }
            for (auto k : basket) in_basket[k] = 0;
        }
        std::shuffle(basket.begin(), basket.end(), rng);
        basket_user.push_back(pick_user(rng));
        baskets.push_back(std::move(basket));
    }

    TransactionCorpus corpus;
    std::vector<char> used(spec.items, 0);
    std::vector<char> user_used(spec.users, 0);
    for (std::size_t t = 0; t < baskets.size(); ++t) {
        for (auto k : baskets[t]) used[k] = 1;
        user_used[basket_user[t]] = 1;
    }
    std::vector<std::string> item_names, category_names, user_names;
    for (std::size_t k = 0; k < spec.items; ++k) {
        if (used[k]) {
            item_names.push_back(spec.item_id(k));
            category_names.push_back(
                fmt::format("c{:0{}}", k % spec.categories, digits(spec.categories - 1)));
        }
    }
    const std::size_t user_digits = digits(spec.users - 1);
    for (std::size_t u = 0; u < spec.users; ++u) {
        if (user_used[u]) user_names.push_back(fmt::format("u{:0{}}", u, user_digits));
    }
    auto& catalog = corpus.catalog;
    catalog.items = Vocabulary(item_names);
    catalog.categories = Vocabulary(category_names);
    corpus.users = Vocabulary(std::move(user_names));
    catalog.item_category.resize(catalog.size());
    catalog.purchase_counts.assign(catalog.size(), 0);
    for (std::size_t i = 0; i < item_names.size(); ++i) {
        auto idx = *catalog.items.find(item_names[i]);
        catalog.item_category[idx] = *catalog.categories.find(category_names[i]);
    }

    const std::size_t txn_digits = digits(spec.transactions > 0 ? spec.transactions - 1 : 0);
    corpus.transactions.reserve(baskets.size());
    for (std::size_t t = 0; t < baskets.size(); ++t) {
        Transaction txn;
        txn.transaction_id = fmt::format("t{:0{}}", t, txn_digits);
        txn.user = UserIndex{*corpus.users.find(fmt::format("u{:0{}}", basket_user[t], user_digits))};
        for (auto k : baskets[t]) {
            auto idx = *catalog.items.find(spec.item_id(k));
            txn.items.push_back(ItemIndex{idx});
            ++catalog.purchase_counts[idx];
        }
        corpus.transactions.push_back(std::move(txn));
    }
    return corpus;
}

}  // namespace neat
