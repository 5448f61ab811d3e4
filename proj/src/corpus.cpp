#include "hcite/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "hcite/labeling.hpp"

namespace hcite {

using json = nlohmann::ordered_json;

std::string PublicationGroup::key() const {
    return fmt::format("{}-{}", start_year, end_year);
}

const std::vector<PublicationGroup>& historical_groups() {
    static const std::vector<PublicationGroup> groups = [] {
        std::vector<PublicationGroup> g;
        for (int start = 1991; start <= 2016; start += 5)
            g.push_back({start, start + 4, GroupKind::Historical});
        return g;
    }();
    return groups;
}

PublicationGroup forecast_group() { return {2021, 2023, GroupKind::ForecastEra}; }

const std::vector<PublicationGroup>& all_groups() {
    static const std::vector<PublicationGroup> groups = [] {
        auto g = historical_groups();
        g.push_back(forecast_group());
        return g;
    }();
    return groups;
}

std::optional<PublicationGroup> group_of(int year) {
    for (const auto& g : all_groups())
        if (g.contains(year)) return g;
    return std::nullopt;
}

std::optional<PublicationGroup> group_from_key(std::string_view key) {
    for (const auto& g : all_groups())
        if (g.key() == key) return g;
    return std::nullopt;
}

namespace {

// Returns the rejection reason, or empty on success.
std::string parse_record(const std::string& line, PaperRecord& rec) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error&) {
        return "malformed record";
    }
    if (!j.is_object()) return "record is not an object";

    auto text_field = [&](const char* name, std::string& out) -> bool {
        auto it = j.find(name);
        if (it == j.end() || it->is_null()) return true;
        if (!it->is_string()) return false;
        out = it->get<std::string>();
        return true;
    };

    if (!text_field("id", rec.id)) return "id must be a string";
    if (trim(rec.id).empty()) return "missing id";
    if (!text_field("title", rec.title)) return "title must be a string";
    if (trim(rec.title).empty()) return "empty title";
    if (!text_field("abstract", rec.abstract)) return "abstract must be a string";
    if (!text_field("journal", rec.journal)) return "journal must be a string";
    if (trim(rec.journal).empty()) return "empty journal";

    if (auto it = j.find("keywords"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) return "keywords must be an array of strings";
        for (const auto& k : *it) {
            if (!k.is_string()) return "keywords must be an array of strings";
            rec.keywords.push_back(k.get<std::string>());
        }
    }

    auto year = j.find("year");
    if (year == j.end() || !year->is_number_integer()) return "missing year";
    const auto y = year->get<std::int64_t>();
    if (y < kMinYear || y > kMaxYear) return "year out of range";
    rec.year = static_cast<int>(y);

    if (auto it = j.find("citations"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) return "citations must be an integer";
        const auto c = it->get<std::int64_t>();
        if (c < 0) return "negative citations";
        rec.citations = c;
    }
    return {};
}

}  // namespace

IngestResult ingest(std::istream& in) {
    IngestResult result;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ++result.report.lines_read;

        PaperRecord rec;
        if (auto reason = parse_record(line, rec); !reason.empty()) {
            result.report.rejections.push_back({line_no, std::move(reason)});
            continue;
        }
        if (!seen.insert(rec.id).second) {
            result.report.rejections.push_back({line_no, "duplicate id " + rec.id});
            continue;
        }
        if (trim(rec.abstract).empty())
            result.report.warnings.push_back({line_no, "missing abstract"});
        result.records.push_back(std::move(rec));
    }
    if (in.bad()) throw Error("read error while ingesting corpus");
    return result;
}

IngestResult ingest_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read corpus file " + path.string());
    return ingest(in);
}

std::string to_json_line(const PaperRecord& r) {
    json j;
    j["id"] = r.id;
    j["title"] = r.title;
    j["abstract"] = r.abstract;
    j["keywords"] = r.keywords;
    j["journal"] = r.journal;
    j["year"] = r.year;
    if (r.citations) j["citations"] = *r.citations;
    else j["citations"] = nullptr;
    return j.dump();
}

void write_corpus(std::ostream& out, const std::vector<PaperRecord>& records) {
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw Error("quantile of empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

GroupStats stats_for(const PublicationGroup& group, std::vector<double> values) {
    GroupStats s;
    s.group = group;
    s.count = values.size();
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    s.median = quantile_sorted(values, 0.5);
    s.iqr = quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25);
    s.min = static_cast<std::int64_t>(values.front());
    s.max = static_cast<std::int64_t>(values.back());
    return s;
}

}  // namespace

CorpusSummary descriptive_stats(const std::vector<PaperRecord>& records,
                                std::optional<double> slice_percent) {
    for (const auto& r : records)
        if (!r.citations) throw Error("unlabeled record in stats: " + r.id);

    CorpusSummary summary;
    summary.total = records.size();
    for (const auto& r : records) {
        if (*r.citations == 0) ++summary.never_cited;
        if (*r.citations <= 5) ++summary.at_most_five;
    }
    if (summary.total > 0) {
        summary.never_cited_fraction = static_cast<double>(summary.never_cited) / summary.total;
        summary.at_most_five_fraction = static_cast<double>(summary.at_most_five) / summary.total;
    }

    std::vector<bool> included(records.size(), true);
    if (slice_percent) {
        const auto labels = label_corpus(records, LabelSpec{*slice_percent});
        for (std::size_t i = 0; i < records.size(); ++i) included[i] = labels[i].positive;
    }

    const auto& groups = all_groups();
    std::vector<std::vector<double>> per_group(groups.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto g = group_of(records[i].year);
        if (!g) {
            ++summary.ungrouped;
            continue;
        }
        if (!included[i]) continue;
        auto idx = static_cast<std::size_t>(std::find(groups.begin(), groups.end(), *g) - groups.begin());
        per_group[idx].push_back(static_cast<double>(*records[i].citations));
    }
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (!per_group[g].empty()) summary.groups.push_back(stats_for(groups[g], std::move(per_group[g])));
    return summary;
}

std::string format_summary_table(const CorpusSummary& s) {
    std::string out = fmt::format("{:<18}{:>8}{:>12}{:>10}{:>12}{:>10}{:>10}\n", "Publication Group",
                                  "N", "Mean", "Median", "SD", "IQR", "Max");
    for (const auto& g : s.groups)
        out += fmt::format("{:<18}{:>8}{:>12.1f}{:>10.1f}{:>12.1f}{:>10.1f}{:>10}\n", g.group.key(), g.count,
                           g.mean, g.median, g.sd, g.iqr, g.max);
    out += fmt::format("records: {}  ungrouped: {}  never cited: {} ({:.1f}%)  <=5 citations: {} ({:.1f}%)\n",
                       s.total, s.ungrouped, s.never_cited, 100.0 * s.never_cited_fraction, s.at_most_five,
                       100.0 * s.at_most_five_fraction);
    return out;
}

std::string summary_to_json(const CorpusSummary& s) {
    json j;
    j["total"] = s.total;
    j["ungrouped"] = s.ungrouped;
    j["never_cited"] = s.never_cited;
    j["never_cited_fraction"] = s.never_cited_fraction;
    j["at_most_five"] = s.at_most_five;
    j["at_most_five_fraction"] = s.at_most_five_fraction;
    j["groups"] = json::array();
    for (const auto& g : s.groups) {
        j["groups"].push_back({{"group", g.group.key()},
                               {"count", g.count},
                               {"mean", g.mean},
                               {"median", g.median},
                               {"sd", g.sd},
                               {"iqr", g.iqr},
                               {"min", g.min},
                               {"max", g.max}});
    }
    return j.dump(2);
}

}  // namespace hcite
