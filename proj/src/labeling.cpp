#include "hcite/labeling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

namespace hcite {

using json = nlohmann::ordered_json;

void LabelSpec::validate() const {
    if (!(k_percent > 0.0 && k_percent <= 100.0))
        throw Error("k_percent must be in (0, 100], got " + std::to_string(k_percent));
}

std::size_t positives_for(std::size_t n, double k_percent) {
    if (n == 0) return 0;
    // The epsilon absorbs representation error in k (e.g. 0.1 * 3 * 100).
    const double raw = k_percent * static_cast<double>(n) / 100.0;
    const auto m = static_cast<std::size_t>(std::floor(raw + 1e-9));
    return std::clamp<std::size_t>(m, 1, n);
}

namespace {

void require_citations(const std::vector<PaperRecord>& records) {
    for (const auto& r : records)
        if (!r.citations) throw Error("cannot label unlabeled-citation record " + r.id);
}

bool ranks_before(const PaperRecord& a, const PaperRecord& b) {
    if (*a.citations != *b.citations) return *a.citations > *b.citations;
    return a.id < b.id;
}

}  // namespace

std::vector<CitationLabel> label_corpus(const std::vector<PaperRecord>& records, const LabelSpec& spec) {
    spec.validate();
    require_citations(records);

    std::map<int, std::vector<std::size_t>> by_year;
    for (std::size_t i = 0; i < records.size(); ++i) by_year[records[i].year].push_back(i);
    std::vector<std::vector<std::size_t>*> cohorts;
    cohorts.reserve(by_year.size());
    for (auto& [year, idx] : by_year) cohorts.push_back(&idx);

    std::vector<CitationLabel> labels(records.size());
    const auto n_cohorts = static_cast<std::ptrdiff_t>(cohorts.size());

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < n_cohorts; ++c) {
        auto& idx = *cohorts[static_cast<std::size_t>(c)];
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return ranks_before(records[a], records[b]); });
        const std::size_t m = positives_for(idx.size(), spec.k_percent);
        const std::int64_t cutoff = *records[idx[m - 1]].citations;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            const auto& rec = records[idx[r]];
            labels[idx[r]] = CitationLabel{rec.id, rec.year, spec.k_percent, r < m, r + 1, cutoff};
        }
    }
    return labels;
}

namespace serial {

std::vector<CitationLabel> label_corpus(const std::vector<PaperRecord>& records, const LabelSpec& spec) {
    spec.validate();
    require_citations(records);

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (records[a].year != records[b].year) return records[a].year < records[b].year;
        return ranks_before(records[a], records[b]);
    });

    std::vector<CitationLabel> labels(records.size());
    std::size_t begin = 0;
    while (begin < order.size()) {
        std::size_t end = begin;
        while (end < order.size() && records[order[end]].year == records[order[begin]].year) ++end;
        const std::size_t m = positives_for(end - begin, spec.k_percent);
        const std::int64_t cutoff = *records[order[begin + m - 1]].citations;
        for (std::size_t p = begin; p < end; ++p) {
            const auto& rec = records[order[p]];
            labels[order[p]] = CitationLabel{rec.id, rec.year, spec.k_percent, p - begin < m, p - begin + 1, cutoff};
        }
        begin = end;
    }
    return labels;
}

}  // namespace serial

CorpusSummary summarize_top_slice(const std::vector<PaperRecord>& records, const LabelSpec& spec) {
    return descriptive_stats(records, spec.k_percent);
}

std::string to_json_line(const CitationLabel& l) {
    json j;
    j["id"] = l.record_id;
    j["year"] = l.year;
    j["k"] = l.k_percent;
    j["positive"] = l.positive;
    j["rank"] = l.rank_in_year;
    j["cutoff"] = l.cutoff_count;
    return j.dump();
}

std::vector<CitationLabel> read_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read labels file " + path.string());
    std::vector<CitationLabel> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            labels.push_back(CitationLabel{j.at("id").get<std::string>(), j.at("year").get<int>(),
                                           j.at("k").get<double>(), j.at("positive").get<bool>(),
                                           j.at("rank").get<std::size_t>(), j.at("cutoff").get<std::int64_t>()});
        } catch (const json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": bad label line (" + e.what() + ")");
        }
    }
    return labels;
}

}  // namespace hcite
