#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hcite/corpus.hpp"

namespace hcite {

/// Top-k% threshold. Ties at the cutoff resolve by ascending record id, so
/// every year gets exactly positives_for(n, k) positives.
struct LabelSpec {
    double k_percent = 5.0;

    void validate() const;
};

struct CitationLabel {
    std::string record_id;
    int year = 0;
    double k_percent = 0.0;
    bool positive = false;
    std::size_t rank_in_year = 0;  // 1-based, citations descending
    std::int64_t cutoff_count = 0;  // citations of the last positive that year

    bool operator==(const CitationLabel&) const = default;
};

/// max(1, floor(k * n / 100)).
std::size_t positives_for(std::size_t n, double k_percent);

/// Labels every record against its calendar-year cohort. Years are ranked in
/// parallel; output order matches input order.
std::vector<CitationLabel> label_corpus(const std::vector<PaperRecord>& records, const LabelSpec& spec);

namespace serial {
/// Single-threaded reference used by tests and benchmarks.
std::vector<CitationLabel> label_corpus(const std::vector<PaperRecord>& records, const LabelSpec& spec);
}  // namespace serial

/// Descriptive statistics over the positive slice, per publication group.
CorpusSummary summarize_top_slice(const std::vector<PaperRecord>& records, const LabelSpec& spec);

std::string to_json_line(const CitationLabel& label);
std::vector<CitationLabel> read_labels(const std::filesystem::path& path);

}  // namespace hcite
