#pragma once

#include <filesystem>
#include <vector>

#include "neat/corpus.hpp"

namespace neat {

/// Everything downstream stages need from an ingested corpus. Persisted as a
/// directory of tab-separated files:
///
///   items.tsv      item_id, category_id, purchases
///   purchases.tsv  user_id, item_id          (distinct user/item purchases)
///   pairs.tsv      query_item, rec_item, user_id
///   stats.tsv      query_item, rec_item, count
struct Dataset {
    Catalog catalog;
    Vocabulary users;
    std::vector<CoPurchasePair> pairs;
    CoPurchaseStats stats;
    std::vector<std::vector<ItemIndex>> user_items;  // sorted, per user
};

struct DatasetOptions {
    std::size_t window = 5;
    bool filter_same_category = false;
};

Dataset make_dataset(const TransactionCorpus& corpus, const DatasetOptions& options);

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);

/// Loads a dataset directory. With `with_pairs` false the pair list is left
/// empty (stats, catalog and purchases are still read).
Dataset load_dataset(const std::filesystem::path& dir, bool with_pairs = true);

}  // namespace neat
