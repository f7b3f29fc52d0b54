#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "neat/config.hpp"
#include "neat/corpus.hpp"

namespace neat {

/// Declarative description of a synthetic market-basket corpus.
///
/// Each basket draws Poisson(basket_mean) anchor items from the regular
/// catalog (with replacement, weight (rank+1)^-popularity_skew), so with
/// boost 0 item inclusions are independent. Whenever an anchor belongs to a
/// planted complement pair its partner is added with probability `boost`.
/// Each noise item joins every basket independently with `noise_prob`.
/// Baskets that come out empty are redrawn.
///
/// Item layout: items [0, 2*planted_pairs) form pairs (2k, 2k+1); the next
/// `noise_items` items are the popularity-noise items; the rest are fillers.
/// Item k belongs to category k % categories.
struct SynthSpec {
    std::size_t items = 500;
    std::size_t transactions = 50'000;
    std::size_t users = 1'000;
    std::size_t categories = 20;
    double basket_mean = 1.5;
    double popularity_skew = 0.0;
    std::size_t planted_pairs = 50;
    double boost = 0.3;
    std::size_t noise_items = 3;
    double noise_prob = 0.6;

    /// Throws ConfigError on out-of-range or mutually inconsistent fields.
    void validate() const;

    static SynthSpec from_config(const KeyValueConfig& config);

    std::string item_id(std::size_t k) const;
    std::vector<std::pair<std::string, std::string>> planted() const;
    std::vector<std::string> noise() const;
};

TransactionCorpus generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

}  // namespace neat
