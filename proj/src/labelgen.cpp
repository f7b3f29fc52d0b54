#include "neat/labelgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "neat/error.hpp"
#include "tsv.hpp"

namespace neat {

ContingencyTable ContingencyTable::from_counts(std::uint64_t o1, std::uint64_t f_vi,
                                               std::uint64_t f_vj, std::uint64_t n) {
    if (n == 0) {
        throw DataError("contingency table needs at least one co-purchase record");
    }
    if (o1 > f_vi || o1 > f_vj || f_vi > n || f_vj > n || f_vi + f_vj > n + o1) {
        throw DataError(fmt::format(
            "inconsistent counts: o1={} F_vi={} F_vj={} n={} give a negative observed cell", o1,
            f_vi, f_vj, n));
    }
    ContingencyTable t;
    t.n = n;
    t.o1 = o1;
    t.o2 = f_vj - o1;
    t.o3 = f_vi - o1;
    t.o4 = n - f_vi - f_vj + o1;
    const double fi = static_cast<double>(f_vi);
    const double fj = static_cast<double>(f_vj);
    const double nn = static_cast<double>(n);
    t.e1 = fi * fj / nn;
    t.e2 = (nn - fi) * fj / nn;
    t.e3 = fi * (nn - fj) / nn;
    t.e4 = (nn - fi) * (nn - fj) / nn;
    return t;
}

ContingencyTable build_contingency(ItemIndex vi, ItemIndex vj, const CoPurchaseStats& stats) {
    if (!stats.contains(vi, vj)) {
        throw LookupError(fmt::format("pair ({}, {}) is not in the co-purchase table", vi.value, vj.value));
    }
    return ContingencyTable::from_counts(stats.frequency(vi, vj), stats.marginal(vi),
                                         stats.marginal(vj), stats.total());
}

double chi_squared(const ContingencyTable& t) {
    const std::array<double, 4> observed{static_cast<double>(t.o1), static_cast<double>(t.o2),
                                         static_cast<double>(t.o3), static_cast<double>(t.o4)};
    const std::array<double, 4> expected{t.e1, t.e2, t.e3, t.e4};
    double stat = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (!(expected[i] > 0.0)) {
            throw NumericError(fmt::format("expected cell e{} is zero", i + 1));
        }
        const double r = observed[i] - expected[i];
        stat += r * r / expected[i];
    }
    return stat;
}

double chi2_1dof_survival(double x) {
    if (x <= 0.0) return 1.0;
    return std::erfc(std::sqrt(0.5 * x));
}

double threshold_for(double p_value) {
    if (!(p_value > 0.0 && p_value < 1.0)) {
        throw ConfigError(fmt::format("p-value must lie in (0, 1), got {}", p_value));
    }
    if (p_value == 0.05) return 3.841458820694124;
    if (p_value == 0.01) return 6.634896601021214;
    if (p_value == 0.001) return 10.827566170662733;

    double lo = 0.0;
    double hi = 1.0;
    while (chi2_1dof_survival(hi) > p_value) hi *= 2.0;
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_1dof_survival(mid) > p_value) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

LabelSet generate_labels(const CoPurchaseStats& stats, double p_value) {
    if (stats.empty()) {
        throw DataError("label generation needs a non-empty co-purchase table");
    }
    LabelSet out;
    out.p_value = p_value;
    out.threshold = threshold_for(p_value);
    auto& diag = out.diagnostics;

    for (const auto& e : stats.entries()) {
        const auto table = build_contingency(e.query, e.rec, stats);
        if (table.e1 == 0.0 || table.e2 == 0.0 || table.e3 == 0.0 || table.e4 == 0.0) {
            ++diag.skipped_degenerate;
            spdlog::debug("skipping pair ({}, {}): zero expected cell", e.query.value, e.rec.value);
            continue;
        }
        LabelRecord rec;
        rec.query = e.query;
        rec.rec = e.rec;
        rec.chi2 = chi_squared(table);
        rec.o1 = table.o1;
        rec.e1 = table.e1;
        ++diag.pairs_tested;
        if (rec.chi2 > out.threshold) {
            if (static_cast<double>(rec.o1) > rec.e1) {
                rec.dependence = Dependence::Positive;
                ++diag.positively_dependent;
            } else {
                rec.dependence = Dependence::Negative;
                ++diag.negatively_dependent;
            }
        } else {
            ++diag.independent;
        }
        out.all.push_back(rec);
    }

    std::stable_sort(out.all.begin(), out.all.end(), [](const LabelRecord& a, const LabelRecord& b) {
        return a.chi2 > b.chi2;
    });
    for (const auto& rec : out.all) {
        if (rec.dependence == Dependence::Positive) out.qualified.push_back(rec);
    }
    return out;
}

std::vector<LabelRecord> dedup_symmetric(const std::vector<LabelRecord>& labels,
                                         const Catalog& catalog) {
    std::set<std::pair<std::uint32_t, std::uint32_t>> present;
    for (const auto& l : labels) present.emplace(l.query.value, l.rec.value);
    std::vector<LabelRecord> out;
    for (const auto& l : labels) {
        const bool twin = present.contains({l.rec.value, l.query.value});
        if (twin && catalog.item_id(l.rec) < catalog.item_id(l.query)) continue;
        out.push_back(l);
    }
    return out;
}

void write_labels(std::ostream& out, const LabelSet& labels, const Catalog& catalog) {
    out << "#p_value=" << detail::format_double(labels.p_value)
        << "\tthreshold=" << detail::format_double(labels.threshold) << '\n';
    out << "query_item\trec_item\tchi2\to1\te1\n";
    for (const auto& l : dedup_symmetric(labels.qualified, catalog)) {
        out << catalog.item_id(l.query) << '\t' << catalog.item_id(l.rec) << '\t'
            << detail::format_double(l.chi2) << '\t' << l.o1 << '\t'
            << detail::format_double(l.e1) << '\n';
    }
}

void write_diagnostics(std::ostream& out, const LabelSet& labels) {
    const auto& d = labels.diagnostics;
    nlohmann::ordered_json j;
    j["p_value"] = labels.p_value;
    j["threshold"] = labels.threshold;
    j["pairs_tested"] = d.pairs_tested;
    j["positively_dependent"] = d.positively_dependent;
    j["negatively_dependent"] = d.negatively_dependent;
    j["independent"] = d.independent;
    j["skipped_degenerate"] = d.skipped_degenerate;
    out << j.dump(2) << '\n';
}

LabelFile read_labels(std::istream& in) {
    LabelFile file;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto view = detail::chomp(line);
        if (view.empty()) continue;
        const auto where = fmt::format("labels line {}", line_no);
        if (view.front() == '#') {
            for (auto field : detail::split(view.substr(1), '\t')) {
                if (field.starts_with("p_value=")) {
                    file.p_value = detail::parse_number<double>(field.substr(8), where);
                } else if (field.starts_with("threshold=")) {
                    file.threshold = detail::parse_number<double>(field.substr(10), where);
                }
            }
            continue;
        }
        if (view.starts_with("query_item\t")) continue;
        auto fields = detail::split(view, '\t');
        if (fields.size() != 5) {
            throw ParseError(fmt::format("{}: expected 5 tab-separated fields, found {}", where,
                                         fields.size()));
        }
        file.labels.push_back({std::string(fields[0]), std::string(fields[1]),
                               detail::parse_number<double>(fields[2], where)});
    }
    return file;
}

}  // namespace neat
