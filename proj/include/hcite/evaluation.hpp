#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hcite/backends.hpp"
#include "hcite/corpus.hpp"
#include "hcite/labeling.hpp"

namespace hcite {

struct ConfusionMatrix {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    std::uint64_t actual_positive() const { return tp + fn; }
    std::uint64_t actual_negative() const { return fp + tn; }
    ConfusionMatrix& operator+=(const ConfusionMatrix& o);
    bool operator==(const ConfusionMatrix&) const = default;
};

/// Each rate is empty when its denominator is zero.
struct Metrics {
    std::optional<double> acc;
    std::optional<double> tpr;
    std::optional<double> fpr;
};

Metrics metrics(const ConfusionMatrix& m);

struct GroupConfusion {
    PublicationGroup group;
    ConfusionMatrix matrix;
};

struct ConfusionResult {
    std::vector<GroupConfusion> groups;  // chronological, only groups with pairs
    std::size_t failed_excluded = 0;     // failed prediction slots skipped
    std::size_t ungrouped = 0;           // pairs whose year is outside every group
};

/// Joins predictions to labels by record id and counts per group. Throws when
/// a prediction has no label or a record is predicted twice.
ConfusionResult confusion(const std::vector<CitationLabel>& labels, const std::vector<Prediction>& predictions);

namespace serial {
ConfusionResult confusion(const std::vector<CitationLabel>& labels, const std::vector<Prediction>& predictions);
}  // namespace serial

struct PositiveRate {
    std::size_t count = 0;
    std::size_t total = 0;
    double proportion = 0.0;  // full precision

    double reported() const { return round_to(proportion, 4); }
};

/// Over successful predictions. Throws on an empty list.
PositiveRate positive_rate(const std::vector<Prediction>& predictions);

/// Unweighted mean of the defined values; empty when none is defined.
std::optional<double> average_row(const std::vector<std::optional<double>>& values);

struct MetricRow {
    PublicationGroup group;
    ConfusionMatrix matrix;
    Metrics rates;
    std::size_t predicted_positive_count = 0;
    double predicted_positive_proportion = 0.0;
};

struct EvaluationReport {
    double k_percent = 0.0;
    std::string backend;
    std::vector<MetricRow> rows;
    Metrics average;
    std::optional<double> average_predicted_positive_proportion;
    std::size_t evaluated = 0;
    std::size_t failed_excluded = 0;
    double coverage = 0.0;  // evaluated / (evaluated + failed)
    UsageLedger ledger;
};

EvaluationReport evaluate(const std::vector<CitationLabel>& labels, const std::vector<Prediction>& predictions,
                          const std::string& backend_name, const UsageLedger& ledger);

std::string format_report(const EvaluationReport& report);
std::string report_to_json(const EvaluationReport& report);

struct GroupAgreement {
    PublicationGroup group;
    std::size_t compared = 0;
    std::size_t identical = 0;
    std::size_t excluded = 0;  // failed in either run
    std::optional<double> agreement;
};

struct AgreementReport {
    std::vector<GroupAgreement> groups;
    std::optional<double> average;
    std::size_t excluded = 0;
};

/// Both runs must cover the same record ids; otherwise throws listing the
/// symmetric difference.
AgreementReport agreement(const std::vector<Prediction>& run_a, const std::vector<Prediction>& run_b);

std::string format_agreement(const AgreementReport& report);
std::string agreement_to_json(const AgreementReport& report);

struct JournalRow {
    std::string journal;
    std::map<int, std::size_t> per_year;
    std::size_t total = 0;
};

struct JournalBreakdown {
    std::vector<int> years;
    std::vector<JournalRow> rows;  // total descending, then name ascending
};

JournalBreakdown journal_breakdown(const std::vector<Prediction>& predictions, const std::vector<PaperRecord>& records);

/// Predicted-positive rate per calendar year (forecast-era reporting).
std::map<int, PositiveRate> positive_rate_by_year(const std::vector<Prediction>& predictions,
                                                  const std::vector<PaperRecord>& records);

std::string format_journal_breakdown(const JournalBreakdown& table, std::size_t top_n = 0);
std::string journal_breakdown_to_json(const JournalBreakdown& table);

}  // namespace hcite
