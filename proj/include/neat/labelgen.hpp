#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "neat/corpus.hpp"

namespace neat {

/// 2x2 table of purchase events for a directed pair (v_i, v_j):
///
///              v_i       not v_i
///   v_j        o1        o2          F_vj
///   not v_j    o3        o4          n - F_vj
///              F_vi      n - F_vi    n
///
/// Expected counts e1..e4 are the same cells under independence.
struct ContingencyTable {
    std::uint64_t o1 = 0, o2 = 0, o3 = 0, o4 = 0;
    double e1 = 0, e2 = 0, e3 = 0, e4 = 0;
    std::uint64_t n = 0;

    /// Builds the table from raw counts. Throws DataError when a derived
    /// observed cell would be negative.
    static ContingencyTable from_counts(std::uint64_t o1, std::uint64_t f_vi, std::uint64_t f_vj,
                                        std::uint64_t n);
};

/// Throws LookupError if the pair is absent and DataError if n == 0 or the
/// marginals disagree with the pair table.
ContingencyTable build_contingency(ItemIndex vi, ItemIndex vj, const CoPurchaseStats& stats);

/// Pearson statistic sum (o - e)^2 / e without continuity correction.
/// Throws NumericError when any expected cell is zero.
double chi_squared(const ContingencyTable& table);

/// Upper-tail survival function of the chi-squared distribution with one
/// degree of freedom, erfc(sqrt(x / 2)).
double chi2_1dof_survival(double x);

/// Critical value t with P(X > t) = p_value for X ~ chi2(1). The usual
/// levels 0.05 / 0.01 / 0.001 come from a table; anything else is found by
/// bisection on the survival function. Throws ConfigError outside (0, 1).
double threshold_for(double p_value);

enum class Dependence { Positive, Negative, Independent };

struct LabelRecord {
    ItemIndex query;
    ItemIndex rec;
    double chi2 = 0.0;
    std::uint64_t o1 = 0;
    double e1 = 0.0;
    Dependence dependence = Dependence::Independent;
};

struct LabelDiagnostics {
    std::size_t pairs_tested = 0;
    std::size_t positively_dependent = 0;
    std::size_t negatively_dependent = 0;
    std::size_t independent = 0;
    std::size_t skipped_degenerate = 0;
};

struct LabelSet {
    double p_value = 0.0;
    double threshold = 0.0;
    /// Positively dependent pairs, chi2 descending then (query, rec) ascending.
    std::vector<LabelRecord> qualified;
    /// Every tested pair with its classification, in the same order.
    std::vector<LabelRecord> all;
    LabelDiagnostics diagnostics;
};

/// Tests every pair stored in `stats`. Qualified iff chi2 > threshold and
/// o1 > e1; negatively dependent iff chi2 > threshold and o1 <= e1.
/// Pairs with a zero expected cell are skipped and counted.
LabelSet generate_labels(const CoPurchaseStats& stats, double p_value);

/// Qualified labels with symmetric twins collapsed: of (a, b) and (b, a)
/// only the one whose query id is lexicographically smaller is kept.
std::vector<LabelRecord> dedup_symmetric(const std::vector<LabelRecord>& labels,
                                         const Catalog& catalog);

/// Label TSV: `#p_value=<p>\tthreshold=<t>`, a column header, then
/// `query_item\trec_item\tchi2\to1\te1` rows (symmetric twins collapsed).
void write_labels(std::ostream& out, const LabelSet& labels, const Catalog& catalog);
/// Diagnostics as a JSON object of partition counts.
void write_diagnostics(std::ostream& out, const LabelSet& labels);

/// A label row as read back from a label file.
struct LabelPair {
    std::string query;
    std::string rec;
    double chi2 = 0.0;
};

struct LabelFile {
    double p_value = 0.0;
    double threshold = 0.0;
    std::vector<LabelPair> labels;
};

LabelFile read_labels(std::istream& in);

}  // namespace neat
