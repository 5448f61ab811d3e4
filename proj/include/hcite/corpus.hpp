#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hcite/util.hpp"

namespace hcite {

/// One bibliographic record. Only publication-time text plus the citation
/// count used for ground truth; no author or network features.
struct PaperRecord {
    std::string id;
    std::string title;
    std::string abstract;
    std::vector<std::string> keywords;
    std::string journal;
    int year = 0;
    std::optional<std::int64_t> citations;  // absent for forecast-era records

    bool operator==(const PaperRecord&) const = default;
};

inline constexpr int kMinYear = 1900;
inline constexpr int kMaxYear = 2100;

enum class GroupKind { Historical, ForecastEra };

/// A reporting window: one of six historical five-year windows or the forecast era.
struct PublicationGroup {
    int start_year = 0;
    int end_year = 0;  // inclusive
    GroupKind kind = GroupKind::Historical;

    /// "1991-1995" style key, also used as the template file stem.
    std::string key() const;
    bool contains(int year) const { return year >= start_year && year <= end_year; }
    auto operator<=>(const PublicationGroup&) const = default;
};

/// 1991-1995 ... 2016-2020, in chronological order.
const std::vector<PublicationGroup>& historical_groups();
PublicationGroup forecast_group();
/// Historical groups followed by the forecast era.
const std::vector<PublicationGroup>& all_groups();

std::optional<PublicationGroup> group_of(int year);
std::optional<PublicationGroup> group_from_key(std::string_view key);

struct IngestIssue {
    std::size_t line = 0;  // 1-based
    std::string reason;
};

struct IngestReport {
    std::vector<IngestIssue> rejections;
    /// Accepted records that carry a caveat (currently: empty abstract).
    std::vector<IngestIssue> warnings;
    std::size_t lines_read = 0;
};

struct IngestResult {
    std::vector<PaperRecord> records;
    IngestReport report;
};

/// Parses one record per line. Malformed lines are skipped and reported;
/// blank lines are ignored.
IngestResult ingest(std::istream& in);
/// Throws Error if the file cannot be opened.
IngestResult ingest_file(const std::filesystem::path& path);

std::string to_json_line(const PaperRecord& record);
void write_corpus(std::ostream& out, const std::vector<PaperRecord>& records);

struct GroupStats {
    PublicationGroup group;
    std::size_t count = 0;
    double mean = 0.0;
    double median = 0.0;
    double sd = 0.0;
    double iqr = 0.0;
    std::int64_t min = 0;
    std::int64_t max = 0;
};

struct CorpusSummary {
    std::vector<GroupStats> groups;  // chronological; empty groups omitted
    std::size_t total = 0;
    std::size_t ungrouped = 0;
    std::size_t never_cited = 0;
    double never_cited_fraction = 0.0;
    std::size_t at_most_five = 0;
    double at_most_five_fraction = 0.0;
};

/// Sorted-sample quantile with linear interpolation between order statistics
/// (inclusive convention; the median of an even sample is the midpoint).
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Per-group citation statistics. With `slice_percent`, statistics cover only
/// the per-year Top-k% records as assigned by label_corpus.
CorpusSummary descriptive_stats(const std::vector<PaperRecord>& records,
                                std::optional<double> slice_percent = std::nullopt);

std::string format_summary_table(const CorpusSummary& summary);
std::string summary_to_json(const CorpusSummary& summary);

}  // namespace hcite
