#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace neat {

/// Dense index of an item within a Catalog. Index order equals item_id order.
struct ItemIndex {
    std::uint32_t value = 0;
    friend auto operator<=>(ItemIndex, ItemIndex) = default;
};

/// Dense index of a user within a user Vocabulary.
struct UserIndex {
    std::uint32_t value = 0;
    friend auto operator<=>(UserIndex, UserIndex) = default;
};

/// Sorted, deduplicated set of opaque string identifiers with O(1) lookup.
/// Index order is lexicographic identifier order, so ties broken "by id"
/// can be broken by index.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> names);

    std::size_t size() const { return names_.size(); }
    bool empty() const { return names_.empty(); }
    const std::string& name(std::uint32_t index) const { return names_.at(index); }
    std::optional<std::uint32_t> find(const std::string& name) const;
    std::span<const std::string> names() const { return names_; }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.names_ == b.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

/// Items with their category tag and raw purchase count.
struct Catalog {
    Vocabulary items;
    Vocabulary categories;
    std::vector<std::uint32_t> item_category;   // per item, index into categories
    std::vector<std::uint64_t> purchase_counts; // per item, baskets containing it

    std::size_t size() const { return items.size(); }
    std::optional<ItemIndex> find(const std::string& item_id) const;
    ItemIndex require(const std::string& item_id) const;
    const std::string& item_id(ItemIndex item) const { return items.name(item.value); }
    const std::string& category_of(ItemIndex item) const;
};

struct Transaction {
    std::string transaction_id;
    UserIndex user;
    std::vector<ItemIndex> items;  // purchase order, duplicates removed
};

struct CorpusSummary {
    std::size_t transactions = 0;
    std::size_t items = 0;
    std::size_t users = 0;
    std::size_t purchases = 0;  // sum of basket sizes after deduplication
};

struct TransactionCorpus {
    Catalog catalog;
    Vocabulary users;
    std::vector<Transaction> transactions;

    CorpusSummary summary() const;
};

/// Layout of the delimited transaction file: one purchase per row,
/// columns user_id, transaction_id, position, item_id, category_id.
struct TransactionFormat {
    char delimiter = ',';
    bool has_header = true;
};

/// Reads a transaction file. Rows of one transaction may be scattered;
/// items are ordered by position and deduplicated to first occurrence.
/// Throws ParseError on malformed rows (with byte offset and field name)
/// and DataError when an item carries conflicting category references.
TransactionCorpus ingest_transactions(std::istream& source, const TransactionFormat& format = {});

/// Transactions [begin, end) as a corpus of their own. The catalog and user
/// list are rebuilt from what those transactions use, so the result equals
/// what ingesting the written slice would produce.
TransactionCorpus slice_transactions(const TransactionCorpus& corpus, std::size_t begin,
                                     std::size_t end);

/// Writes a corpus in the format ingest_transactions reads.
void write_transactions(std::ostream& out, const TransactionCorpus& corpus);

/// Directed co-purchase record: query item, recommended item, purchasing user.
struct CoPurchasePair {
    ItemIndex query;
    ItemIndex rec;
    UserIndex user;
    friend bool operator==(const CoPurchasePair&, const CoPurchasePair&) = default;
};

/// Emits both directions of every item pair whose positions are at most
/// `window` apart within a basket.
std::vector<CoPurchasePair> sample_pairs(const TransactionCorpus& corpus, std::size_t window);

/// Keeps the pairs whose two items belong to different categories.
std::vector<CoPurchasePair> filter_same_category(std::span<const CoPurchasePair> pairs,
                                                 const Catalog& catalog);

/// Directed co-purchase frequency table with query-slot marginals.
class CoPurchaseStats {
public:
    void add(ItemIndex query, ItemIndex rec, std::uint64_t count = 1);
    void merge(const CoPurchaseStats& other);

    std::uint64_t frequency(ItemIndex query, ItemIndex rec) const;
    bool contains(ItemIndex query, ItemIndex rec) const;
    std::uint64_t marginal(ItemIndex item) const;
    std::uint64_t rec_marginal(ItemIndex item) const;
    std::uint64_t total() const { return total_; }
    std::size_t distinct_pairs() const { return pair_freq_.size(); }
    bool empty() const { return total_ == 0; }

    struct Entry {
        ItemIndex query;
        ItemIndex rec;
        std::uint64_t count;
    };
    /// All entries ordered by (query, rec).
    std::vector<Entry> entries() const;

    friend bool operator==(const CoPurchaseStats&, const CoPurchaseStats&) = default;

private:
    static std::uint64_t key(ItemIndex query, ItemIndex rec) {
        return (std::uint64_t{query.value} << 32) | rec.value;
    }

    std::unordered_map<std::uint64_t, std::uint64_t> pair_freq_;
    std::unordered_map<std::uint32_t, std::uint64_t> marginal_;
    std::unordered_map<std::uint32_t, std::uint64_t> rec_marginal_;
    std::uint64_t total_ = 0;
};

CoPurchaseStats build_stats(std::span<const CoPurchasePair> pairs);

}  // namespace neat

template <>
struct std::hash<neat::ItemIndex> {
    std::size_t operator()(neat::ItemIndex item) const noexcept { return item.value; }
};

template <>
struct std::hash<neat::UserIndex> {
    std::size_t operator()(neat::UserIndex user) const noexcept { return user.value; }
};
