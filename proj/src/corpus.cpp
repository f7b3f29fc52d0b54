#include "neat/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <iterator>
#include <ostream>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "neat/error.hpp"

namespace neat {

Vocabulary::Vocabulary(std::vector<std::string> names) : names_(std::move(names)) {
    std::sort(names_.begin(), names_.end());
    names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
    index_.reserve(names_.size());
    for (std::uint32_t i = 0; i < names_.size(); ++i) {
        index_.emplace(names_[i], i);
    }
}

std::optional<std::uint32_t> Vocabulary::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<ItemIndex> Catalog::find(const std::string& item_id) const {
    if (auto idx = items.find(item_id)) {
        return ItemIndex{*idx};
    }
    return std::nullopt;
}

ItemIndex Catalog::require(const std::string& item_id) const {
    if (auto idx = find(item_id)) {
        return *idx;
    }
    throw LookupError(fmt::format("unknown item '{}'", item_id));
}

const std::string& Catalog::category_of(ItemIndex item) const {
    if (item.value >= item_category.size()) {
        throw LookupError(fmt::format("item index {} is not in the catalog", item.value));
    }
    return categories.name(item_category[item.value]);
}

CorpusSummary TransactionCorpus::summary() const {
    CorpusSummary s;
    s.transactions = transactions.size();
    s.items = catalog.size();
    s.users = users.size();
    for (const auto& t : transactions) {
        s.purchases += t.items.size();
    }
    return s;
}

namespace {

constexpr std::string_view kColumns[] = {"user_id", "transaction_id", "position", "item_id",
                                         "category_id"};

std::string_view trim(std::string_view s) {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

struct RawRow {
    std::string user;
    std::string transaction;
    long long position;
    std::string item;
    std::string category;
};

struct RawTransaction {
    std::string user;
    std::vector<std::pair<long long, std::string>> items;  // (position, item)
    std::size_t first_offset;
};

RawRow parse_row(std::string_view line, char delimiter, std::size_t offset) {
    std::string_view fields[5];
    std::size_t n = 0;
    std::size_t start = 0;
    while (true) {
        auto end = line.find(delimiter, start);
        if (n == 5) {
            throw ParseError(fmt::format("byte offset {}: too many fields (expected 5)", offset));
        }
        fields[n++] = trim(line.substr(start, end == std::string_view::npos ? end : end - start));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    if (n != 5) {
        throw ParseError(fmt::format("byte offset {}: expected 5 fields, found {} (missing '{}')",
                                     offset, n, kColumns[n]));
    }
    for (std::size_t i = 0; i < 5; ++i) {
        if (fields[i].empty()) {
            throw ParseError(fmt::format("byte offset {}: field '{}' is empty", offset, kColumns[i]));
        }
    }
    RawRow row;
    auto pos = fields[2];
    auto [ptr, ec] = std::from_chars(pos.data(), pos.data() + pos.size(), row.position);
    if (ec != std::errc{} || ptr != pos.data() + pos.size()) {
        throw ParseError(fmt::format("byte offset {}: field 'position' is not an integer: '{}'",
                                     offset, pos));
    }
    row.user = fields[0];
    row.transaction = fields[1];
    row.item = fields[3];
    row.category = fields[4];
    return row;
}

}  // namespace

TransactionCorpus ingest_transactions(std::istream& source, const TransactionFormat& format) {
    std::string text{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};

    std::unordered_map<std::string, std::size_t> txn_slot;
    std::vector<std::string> txn_ids;
    std::vector<RawTransaction> raw;
    std::unordered_map<std::string, std::string> item_category;

    std::size_t offset = 0;
    bool header_pending = format.has_header;
    while (offset < text.size()) {
        auto eol = text.find('\n', offset);
        if (eol == std::string::npos) eol = text.size();
        std::string_view line(text.data() + offset, eol - offset);
        const std::size_t line_offset = offset;
        offset = eol + 1;

        if (trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        RawRow row = parse_row(line, format.delimiter, line_offset);

        auto [cat_it, inserted] = item_category.emplace(row.item, row.category);
        if (!inserted && cat_it->second != row.category) {
            throw DataError(fmt::format(
                "item '{}' references conflicting categories '{}' and '{}' (byte offset {})",
                row.item, cat_it->second, row.category, line_offset));
        }

        auto [slot_it, fresh] = txn_slot.emplace(row.transaction, raw.size());
        if (fresh) {
            txn_ids.push_back(row.transaction);
            raw.push_back(RawTransaction{row.user, {}, line_offset});
        }
        auto& txn = raw[slot_it->second];
        if (txn.user != row.user) {
            throw ParseError(fmt::format(
                "byte offset {}: field 'user_id' is '{}' but transaction '{}' belongs to '{}'",
                line_offset, row.user, row.transaction, txn.user));
        }
        txn.items.emplace_back(row.position, std::move(row.item));
    }

    TransactionCorpus corpus;
    {
        std::vector<std::string> items, categories, users;
        items.reserve(item_category.size());
        for (const auto& [item, category] : item_category) {
            items.push_back(item);
            categories.push_back(category);
        }
        for (const auto& t : raw) users.push_back(t.user);
        corpus.catalog.items = Vocabulary(std::move(items));
        corpus.catalog.categories = Vocabulary(std::move(categories));
        corpus.users = Vocabulary(std::move(users));
    }
    auto& catalog = corpus.catalog;
    catalog.item_category.resize(catalog.size());
    catalog.purchase_counts.assign(catalog.size(), 0);
    for (std::uint32_t i = 0; i < catalog.size(); ++i) {
        catalog.item_category[i] = *catalog.categories.find(item_category.at(catalog.items.name(i)));
    }

    corpus.transactions.reserve(raw.size());
    for (std::size_t t = 0; t < raw.size(); ++t) {
        auto& txn = raw[t];
        std::stable_sort(txn.items.begin(), txn.items.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t k = 1; k < txn.items.size(); ++k) {
            if (txn.items[k].first == txn.items[k - 1].first) {
                throw ParseError(fmt::format(
                    "transaction '{}' (first seen at byte offset {}): field 'position' value {} "
                    "is not unique",
                    txn_ids[t], txn.first_offset, txn.items[k].first));
            }
        }
        Transaction out;
        out.transaction_id = txn_ids[t];
        out.user = UserIndex{*corpus.users.find(txn.user)};
        std::unordered_set<std::uint32_t> seen;
        for (const auto& [position, item] : txn.items) {
            auto idx = *catalog.items.find(item);
            if (seen.insert(idx).second) {
                out.items.push_back(ItemIndex{idx});
                ++catalog.purchase_counts[idx];
            }
        }
        corpus.transactions.push_back(std::move(out));
    }
    return corpus;
}

TransactionCorpus slice_transactions(const TransactionCorpus& corpus, std::size_t begin,
                                     std::size_t end) {
    if (begin > end || end > corpus.transactions.size()) {
        throw ConfigError(fmt::format("transaction range [{}, {}) is outside [0, {}]", begin, end,
                                      corpus.transactions.size()));
    }
    const auto first = corpus.transactions.begin() + static_cast<std::ptrdiff_t>(begin);
    const auto last = corpus.transactions.begin() + static_cast<std::ptrdiff_t>(end);

    std::vector<char> item_used(corpus.catalog.size(), 0);
    std::vector<char> user_used(corpus.users.size(), 0);
    for (auto t = first; t != last; ++t) {
        user_used[t->user.value] = 1;
        for (auto item : t->items) item_used[item.value] = 1;
    }
    std::vector<std::string> items, categories, users;
    for (std::uint32_t i = 0; i < item_used.size(); ++i) {
        if (!item_used[i]) continue;
        items.push_back(corpus.catalog.items.name(i));
        categories.push_back(corpus.catalog.category_of(ItemIndex{i}));
    }
    for (std::uint32_t u = 0; u < user_used.size(); ++u) {
        if (user_used[u]) users.push_back(corpus.users.name(u));
    }

    TransactionCorpus out;
    auto& catalog = out.catalog;
    catalog.items = Vocabulary(items);
    catalog.categories = Vocabulary(categories);
    out.users = Vocabulary(std::move(users));
    catalog.item_category.resize(catalog.size());
    catalog.purchase_counts.assign(catalog.size(), 0);
    for (std::size_t k = 0; k < items.size(); ++k) {
        catalog.item_category[*catalog.items.find(items[k])] = *catalog.categories.find(categories[k]);
    }
    out.transactions.reserve(end - begin);
    for (auto t = first; t != last; ++t) {
        Transaction txn;
        txn.transaction_id = t->transaction_id;
        txn.user = UserIndex{*out.users.find(corpus.users.name(t->user.value))};
        for (auto item : t->items) {
            const auto idx = *catalog.items.find(corpus.catalog.item_id(item));
            txn.items.push_back(ItemIndex{idx});
            ++catalog.purchase_counts[idx];
        }
        out.transactions.push_back(std::move(txn));
    }
    return out;
}

void write_transactions(std::ostream& out, const TransactionCorpus& corpus) {
    out << "user_id,transaction_id,position,item_id,category_id\n";
    for (const auto& t : corpus.transactions) {
        const auto& user = corpus.users.name(t.user.value);
        for (std::size_t pos = 0; pos < t.items.size(); ++pos) {
            out << user << ',' << t.transaction_id << ',' << pos << ','
                << corpus.catalog.item_id(t.items[pos]) << ','
                << corpus.catalog.category_of(t.items[pos]) << '\n';
        }
    }
}

std::vector<CoPurchasePair> sample_pairs(const TransactionCorpus& corpus, std::size_t window) {
    if (window == 0) {
        throw ConfigError("window must be at least 1");
    }
    std::vector<CoPurchasePair> pairs;
    for (const auto& t : corpus.transactions) {
        const auto& items = t.items;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const std::size_t hi = std::min(items.size(), i + window + 1);
            for (std::size_t j = i + 1; j < hi; ++j) {
                pairs.push_back({items[i], items[j], t.user});
                pairs.push_back({items[j], items[i], t.user});
            }
        }
    }
    return pairs;
}

std::vector<CoPurchasePair> filter_same_category(std::span<const CoPurchasePair> pairs,
                                                 const Catalog& catalog) {
    std::vector<CoPurchasePair> kept;
    kept.reserve(pairs.size());
    auto category = [&](ItemIndex item) {
        if (item.value >= catalog.item_category.size()) {
            throw LookupError(fmt::format("item index {} has no category in the catalog", item.value));
        }
        return catalog.item_category[item.value];
    };
    for (const auto& p : pairs) {
        if (category(p.query) != category(p.rec)) {
            kept.push_back(p);
        }
    }
    return kept;
}

void CoPurchaseStats::add(ItemIndex query, ItemIndex rec, std::uint64_t count) {
    if (count == 0) return;
    pair_freq_[key(query, rec)] += count;
    marginal_[query.value] += count;
    rec_marginal_[rec.value] += count;
    total_ += count;
}

void CoPurchaseStats::merge(const CoPurchaseStats& other) {
    for (const auto& [k, count] : other.pair_freq_) {
        add(ItemIndex{static_cast<std::uint32_t>(k >> 32)},
            ItemIndex{static_cast<std::uint32_t>(k & 0xffffffffu)}, count);
    }
}

std::uint64_t CoPurchaseStats::frequency(ItemIndex query, ItemIndex rec) const {
    auto it = pair_freq_.find(key(query, rec));
    return it == pair_freq_.end() ? 0 : it->second;
}

bool CoPurchaseStats::contains(ItemIndex query, ItemIndex rec) const {
    return pair_freq_.contains(key(query, rec));
}

std::uint64_t CoPurchaseStats::marginal(ItemIndex item) const {
    auto it = marginal_.find(item.value);
    return it == marginal_.end() ? 0 : it->second;
}

std::uint64_t CoPurchaseStats::rec_marginal(ItemIndex item) const {
    auto it = rec_marginal_.find(item.value);
    return it == rec_marginal_.end() ? 0 : it->second;
}

std::vector<CoPurchaseStats::Entry> CoPurchaseStats::entries() const {
    std::vector<Entry> out;
    out.reserve(pair_freq_.size());
    for (const auto& [k, count] : pair_freq_) {
        out.push_back({ItemIndex{static_cast<std::uint32_t>(k >> 32)},
                       ItemIndex{static_cast<std::uint32_t>(k & 0xffffffffu)}, count});
    }
    std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) {
        return std::tie(a.query, a.rec) < std::tie(b.query, b.rec);
    });
    return out;
}

CoPurchaseStats build_stats(std::span<const CoPurchasePair> pairs) {
    CoPurchaseStats stats;
    for (const auto& p : pairs) {
        stats.add(p.query, p.rec);
    }
    return stats;
}

}  // namespace neat
