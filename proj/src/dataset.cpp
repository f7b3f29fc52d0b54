#include "neat/dataset.hpp"

#include <algorithm>
#include <set>

#include "tsv.hpp"

namespace neat {

namespace fs = std::filesystem;
using detail::chomp;
using detail::split;

Dataset make_dataset(const TransactionCorpus& corpus, const DatasetOptions& options) {
    Dataset ds;
    ds.catalog = corpus.catalog;
    ds.users = corpus.users;
    ds.pairs = sample_pairs(corpus, options.window);
    if (options.filter_same_category) {
        ds.pairs = filter_same_category(ds.pairs, ds.catalog);
    }
    ds.stats = build_stats(ds.pairs);
    ds.user_items.resize(ds.users.size());
    for (const auto& t : corpus.transactions) {
        auto& bought = ds.user_items[t.user.value];
        bought.insert(bought.end(), t.items.begin(), t.items.end());
    }
    for (auto& bought : ds.user_items) {
        std::sort(bought.begin(), bought.end());
        bought.erase(std::unique(bought.begin(), bought.end()), bought.end());
    }
    return ds;
}

void save_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    const auto& cat = ds.catalog;
    {
        auto out = detail::open_output(dir / "items.tsv");
        out << "item_id\tcategory_id\tpurchases\n";
        for (std::uint32_t i = 0; i < cat.size(); ++i) {
            out << cat.items.name(i) << '\t' << cat.category_of(ItemIndex{i}) << '\t'
                << cat.purchase_counts[i] << '\n';
        }
    }
    {
        auto out = detail::open_output(dir / "purchases.tsv");
        out << "user_id\titem_id\n";
        for (std::uint32_t u = 0; u < ds.user_items.size(); ++u) {
            for (auto item : ds.user_items[u]) {
                out << ds.users.name(u) << '\t' << cat.item_id(item) << '\n';
            }
        }
    }
    {
        auto out = detail::open_output(dir / "pairs.tsv");
        out << "query_item\trec_item\tuser_id\n";
        for (const auto& p : ds.pairs) {
            out << cat.item_id(p.query) << '\t' << cat.item_id(p.rec) << '\t'
                << ds.users.name(p.user.value) << '\n';
        }
    }
    {
        auto out = detail::open_output(dir / "stats.tsv");
        out << "query_item\trec_item\tcount\n";
        for (const auto& e : ds.stats.entries()) {
            out << cat.item_id(e.query) << '\t' << cat.item_id(e.rec) << '\t' << e.count << '\n';
        }
    }
}

namespace {

/// Calls `row(fields, line_number)` for every data line of a TSV file with a header.
template <typename Fn>
void for_each_row(const fs::path& path, std::size_t columns, Fn&& row) {
    auto in = detail::open_input(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) continue;
        auto view = chomp(line);
        if (view.empty()) continue;
        auto fields = split(view, '\t');
        if (fields.size() != columns) {
            throw ParseError(fmt::format("{}:{}: expected {} fields, found {}", path.string(),
                                         line_no, columns, fields.size()));
        }
        row(fields, line_no);
    }
}

}  // namespace

Dataset load_dataset(const fs::path& dir, bool with_pairs) {
    Dataset ds;
    auto& cat = ds.catalog;

    std::vector<std::string> items, categories;
    std::vector<std::string> item_cat;
    std::vector<std::uint64_t> counts;
    const auto items_path = dir / "items.tsv";
    for_each_row(items_path, 3, [&](const auto& f, std::size_t line_no) {
        items.emplace_back(f[0]);
        item_cat.emplace_back(f[1]);
        categories.emplace_back(f[1]);
        counts.push_back(detail::parse_number<std::uint64_t>(
            f[2], fmt::format("{}:{}", items_path.string(), line_no)));
    });
    cat.items = Vocabulary(items);
    cat.categories = Vocabulary(std::move(categories));
    if (cat.items.size() != items.size()) {
        throw DataError(fmt::format("{}: duplicate item ids", items_path.string()));
    }
    cat.item_category.resize(cat.size());
    cat.purchase_counts.resize(cat.size());
    for (std::size_t k = 0; k < items.size(); ++k) {
        auto idx = *cat.items.find(items[k]);
        cat.item_category[idx] = *cat.categories.find(item_cat[k]);
        cat.purchase_counts[idx] = counts[k];
    }

    auto item_of = [&](std::string_view name, const fs::path& path, std::size_t line_no) {
        auto idx = cat.find(std::string(name));
        if (!idx) {
            throw LookupError(fmt::format("{}:{}: item '{}' is not listed in items.tsv",
                                          path.string(), line_no, name));
        }
        return *idx;
    };

    const auto purchases_path = dir / "purchases.tsv";
    std::vector<std::pair<std::string, ItemIndex>> purchases;
    for_each_row(purchases_path, 2, [&](const auto& f, std::size_t line_no) {
        purchases.emplace_back(std::string(f[0]), item_of(f[1], purchases_path, line_no));
    });
    {
        std::vector<std::string> users;
        users.reserve(purchases.size());
        for (const auto& p : purchases) users.push_back(p.first);
        ds.users = Vocabulary(std::move(users));
    }
    ds.user_items.resize(ds.users.size());
    for (const auto& [user, item] : purchases) {
        ds.user_items[*ds.users.find(user)].push_back(item);
    }
    for (auto& bought : ds.user_items) {
        std::sort(bought.begin(), bought.end());
        bought.erase(std::unique(bought.begin(), bought.end()), bought.end());
    }

    const auto stats_path = dir / "stats.tsv";
    for_each_row(stats_path, 3, [&](const auto& f, std::size_t line_no) {
        auto where = fmt::format("{}:{}", stats_path.string(), line_no);
        ds.stats.add(item_of(f[0], stats_path, line_no), item_of(f[1], stats_path, line_no),
                     detail::parse_number<std::uint64_t>(f[2], where));
    });

    if (with_pairs) {
        const auto pairs_path = dir / "pairs.tsv";
        for_each_row(pairs_path, 3, [&](const auto& f, std::size_t line_no) {
            auto user = ds.users.find(std::string(f[2]));
            if (!user) {
                throw LookupError(fmt::format("{}:{}: user '{}' has no purchases",
                                              pairs_path.string(), line_no, f[2]));
            }
            ds.pairs.push_back({item_of(f[0], pairs_path, line_no),
                                item_of(f[1], pairs_path, line_no), UserIndex{*user}});
        });
    }
    return ds;
}

}  // namespace neat
