#include "hcite/evaluation.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

namespace hcite {

using json = nlohmann::ordered_json;

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

Metrics metrics(const ConfusionMatrix& m) {
    auto ratio = [](std::uint64_t num, std::uint64_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    return {ratio(m.tp + m.tn, m.total()), ratio(m.tp, m.tp + m.fn), ratio(m.fp, m.fp + m.tn)};
}

namespace {

constexpr std::size_t kNoGroup = static_cast<std::size_t>(-1);

std::size_t group_index(int year) {
    const auto& groups = all_groups();
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (groups[g].contains(year)) return g;
    return kNoGroup;
}

struct Pair {
    std::size_t group;
    bool label;
    bool predicted;
};

// Validates the join and flattens it; failed slots are counted, not paired.
std::vector<Pair> join_pairs(const std::vector<CitationLabel>& labels, const std::vector<Prediction>& predictions,
                             std::size_t& failed) {
    std::unordered_map<std::string_view, std::size_t> by_id;
    by_id.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (!by_id.emplace(labels[i].record_id, i).second)
            throw Error("duplicate label for record " + labels[i].record_id);

    std::unordered_set<std::string_view> seen;
    std::vector<Pair> pairs;
    pairs.reserve(predictions.size());
    failed = 0;
    for (const auto& p : predictions) {
        auto it = by_id.find(p.record_id);
        if (it == by_id.end()) throw Error("prediction has no matching label: " + p.record_id);
        if (!seen.insert(p.record_id).second) throw Error("duplicate prediction for record " + p.record_id);
        if (!p.ok()) {
            ++failed;
            continue;
        }
        const auto& l = labels[it->second];
        pairs.push_back({group_index(l.year), l.positive, *p.verdict == Verdict::Positive});
    }
    return pairs;
}

void tally(ConfusionMatrix& m, bool label, bool predicted) {
    if (label && predicted) ++m.tp;
    else if (label) ++m.fn;
    else if (predicted) ++m.fp;
    else ++m.tn;
}

ConfusionResult collect(const std::vector<ConfusionMatrix>& per_group, std::size_t ungrouped, std::size_t failed) {
    ConfusionResult result;
    result.failed_excluded = failed;
    result.ungrouped = ungrouped;
    const auto& groups = all_groups();
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (per_group[g].total() > 0) result.groups.push_back({groups[g], per_group[g]});
    return result;
}

}  // namespace

ConfusionResult confusion(const std::vector<CitationLabel>& labels, const std::vector<Prediction>& predictions) {
    std::size_t failed = 0;
    const auto pairs = join_pairs(labels, predictions, failed);
    const std::size_t n_groups = all_groups().size();

    std::vector<ConfusionMatrix> per_group(n_groups);
    std::size_t ungrouped = 0;
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());

#pragma omp parallel
    {
        std::vector<ConfusionMatrix> local(n_groups);
        std::size_t local_ungrouped = 0;
#pragma omp for schedule(static) nowait
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto& pr = pairs[static_cast<std::size_t>(i)];
            if (pr.group == kNoGroup) {
                ++local_ungrouped;
                continue;
            }
            tally(local[pr.group], pr.label, pr.predicted);
        }
#pragma omp critical(hcite_confusion_merge)
        {
            for (std::size_t g = 0; g < n_groups; ++g) per_group[g] += local[g];
            ungrouped += local_ungrouped;
        }
    }
    return collect(per_group, ungrouped, failed);
}

namespace serial {

ConfusionResult confusion(const std::vector<CitationLabel>& labels, const std::vector<Prediction>& predictions) {
    std::size_t failed = 0;
    const auto pairs = join_pairs(labels, predictions, failed);
    std::vector<ConfusionMatrix> per_group(all_groups().size());
    std::size_t ungrouped = 0;
    for (const auto& pr : pairs) {
        if (pr.group == kNoGroup) ++ungrouped;
        else tally(per_group[pr.group], pr.label, pr.predicted);
    }
    return collect(per_group, ungrouped, failed);
}

}  // namespace serial

PositiveRate positive_rate(const std::vector<Prediction>& predictions) {
    PositiveRate r;
    for (const auto& p : predictions) {
        if (!p.ok()) continue;
        ++r.total;
        if (*p.verdict == Verdict::Positive) ++r.count;
    }
    if (r.total == 0) throw Error("positive rate of an empty prediction list");
    r.proportion = static_cast<double>(r.count) / static_cast<double>(r.total);
    return r;
}

std::optional<double> average_row(const std::vector<std::optional<double>>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (!v) continue;
        sum += *v;
        ++n;
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

EvaluationReport evaluate(const std::vector<CitationLabel>& labels, const std::vector<Prediction>& predictions,
                          const std::string& backend_name, const UsageLedger& ledger) {
    EvaluationReport report;
    report.k_percent = labels.empty() ? 0.0 : labels.front().k_percent;
    report.backend = backend_name;
    report.ledger = ledger;

    const auto conf = confusion(labels, predictions);
    report.failed_excluded = conf.failed_excluded;
    std::vector<std::optional<double>> accs, tprs, fprs, props;
    for (const auto& gc : conf.groups) {
        MetricRow row;
        row.group = gc.group;
        row.matrix = gc.matrix;
        row.rates = metrics(gc.matrix);
        row.predicted_positive_count = gc.matrix.tp + gc.matrix.fp;
        row.predicted_positive_proportion =
            static_cast<double>(row.predicted_positive_count) / static_cast<double>(gc.matrix.total());
        report.evaluated += gc.matrix.total();
        accs.push_back(row.rates.acc);
        tprs.push_back(row.rates.tpr);
        fprs.push_back(row.rates.fpr);
        props.push_back(row.predicted_positive_proportion);
        report.rows.push_back(row);
    }
    report.evaluated += conf.ungrouped;
    report.average = {average_row(accs), average_row(tprs), average_row(fprs)};
    report.average_predicted_positive_proportion = average_row(props);
    const auto attempted = report.evaluated + report.failed_excluded;
    report.coverage = attempted ? static_cast<double>(report.evaluated) / static_cast<double>(attempted) : 0.0;
    return report;
}

namespace {

std::string rate3(const std::optional<double>& v) {
    return v ? fmt::format("{:.3f}", round_to(*v, 3)) : std::string("n/a");
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

std::string format_report(const EvaluationReport& r) {
    std::string out = fmt::format("Backend: {}   Threshold: Top {}%\n", r.backend, r.k_percent);
    out += fmt::format("{:<18}{:>8}{:>8}{:>8}{:>8}{:>10}{:>10}\n", "Publication Group", "Pairs", "ACC", "TPR",
                       "FPR", "Pred+", "Pred+ %");
    for (const auto& row : r.rows)
        out += fmt::format("{:<18}{:>8}{:>8}{:>8}{:>8}{:>10}{:>10.1f}\n", row.group.key(), row.matrix.total(),
                           rate3(row.rates.acc), rate3(row.rates.tpr), rate3(row.rates.fpr),
                           row.predicted_positive_count,
                           round_to(100.0 * row.predicted_positive_proportion, 1));
    const auto avg_prop = r.average_predicted_positive_proportion;
    out += fmt::format("{:<18}{:>8}{:>8}{:>8}{:>8}{:>10}{:>10}\n", "Average", "", rate3(r.average.acc),
                       rate3(r.average.tpr), rate3(r.average.fpr), "",
                       avg_prop ? fmt::format("{:.1f}", round_to(100.0 * *avg_prop, 1)) : std::string("n/a"));
    out += fmt::format("evaluated: {}  failed (excluded): {}  coverage: {:.1f}%\n", r.evaluated, r.failed_excluded,
                       round_to(100.0 * r.coverage, 1));
    out += fmt::format("requests: {}  retries: {}  input tokens: {}  output tokens: {}  cost (USD): {:.6f}\n",
                       r.ledger.total_requests, r.ledger.total_retries, r.ledger.total_input_tokens,
                       r.ledger.total_output_tokens, r.ledger.total_cost_usd());
    return out;
}

std::string report_to_json(const EvaluationReport& r) {
    json j;
    j["backend"] = r.backend;
    j["k_percent"] = r.k_percent;
    j["rows"] = json::array();
    for (const auto& row : r.rows)
        j["rows"].push_back({{"group", row.group.key()},
                             {"tp", row.matrix.tp},
                             {"fp", row.matrix.fp},
                             {"tn", row.matrix.tn},
                             {"fn", row.matrix.fn},
                             {"acc", opt(row.rates.acc)},
                             {"tpr", opt(row.rates.tpr)},
                             {"fpr", opt(row.rates.fpr)},
                             {"predicted_positive_count", row.predicted_positive_count},
                             {"predicted_positive_proportion", row.predicted_positive_proportion}});
    j["average"] = {{"acc", opt(r.average.acc)},
                    {"tpr", opt(r.average.tpr)},
                    {"fpr", opt(r.average.fpr)},
                    {"predicted_positive_proportion", opt(r.average_predicted_positive_proportion)}};
    j["evaluated"] = r.evaluated;
    j["failed_excluded"] = r.failed_excluded;
    j["coverage"] = r.coverage;
    j["usage"] = json::parse(ledger_to_json(r.ledger, false));
    return j.dump(2);
}

AgreementReport agreement(const std::vector<Prediction>& run_a, const std::vector<Prediction>& run_b) {
    std::unordered_map<std::string_view, const Prediction*> b_by_id;
    for (const auto& p : run_b)
        if (!b_by_id.emplace(p.record_id, &p).second) throw Error("duplicate record in run b: " + p.record_id);

    std::set<std::string> only_a, only_b;
    std::unordered_set<std::string_view> a_ids;
    for (const auto& p : run_a) {
        if (!a_ids.insert(p.record_id).second) throw Error("duplicate record in run a: " + p.record_id);
        if (!b_by_id.count(p.record_id)) only_a.insert(p.record_id);
    }
    for (const auto& p : run_b)
        if (!a_ids.count(p.record_id)) only_b.insert(p.record_id);
    if (!only_a.empty() || !only_b.empty()) {
        std::vector<std::string> diff;
        for (const auto& id : only_a) diff.push_back(id + " (run a only)");
        for (const auto& id : only_b) diff.push_back(id + " (run b only)");
        const std::size_t total = diff.size();
        if (diff.size() > 10) diff.resize(10);
        throw Error(fmt::format("runs cover different records ({} differ): {}{}", total, join(diff, ", "),
                                total > 10 ? ", ..." : ""));
    }

    const auto& groups = all_groups();
    std::vector<GroupAgreement> per_group(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) per_group[g].group = groups[g];

    AgreementReport report;
    for (const auto& a : run_a) {
        const auto& b = *b_by_id.at(a.record_id);
        const auto g = static_cast<std::size_t>(std::find(groups.begin(), groups.end(), a.group) - groups.begin());
        if (g == groups.size()) throw Error("prediction has no publication group: " + a.record_id);
        auto& ga = per_group[g];
        if (!a.ok() || !b.ok()) {
            ++ga.excluded;
            ++report.excluded;
            continue;
        }
        ++ga.compared;
        if (*a.verdict == *b.verdict) ++ga.identical;
    }
    std::vector<std::optional<double>> values;
    for (auto& ga : per_group) {
        if (ga.compared + ga.excluded == 0) continue;
        if (ga.compared > 0) ga.agreement = static_cast<double>(ga.identical) / static_cast<double>(ga.compared);
        values.push_back(ga.agreement);
        report.groups.push_back(ga);
    }
    report.average = average_row(values);
    return report;
}

std::string format_agreement(const AgreementReport& r) {
    std::string out = fmt::format("{:<18}{:>10}{:>10}{:>10}{:>11}\n", "Publication Group", "Compared", "Identical",
                                  "Excluded", "Agreement");
    for (const auto& g : r.groups)
        out += fmt::format("{:<18}{:>10}{:>10}{:>10}{:>11}\n", g.group.key(), g.compared, g.identical, g.excluded,
                           rate3(g.agreement));
    out += fmt::format("{:<18}{:>10}{:>10}{:>10}{:>11}\n", "Average", "", "", r.excluded, rate3(r.average));
    return out;
}

std::string agreement_to_json(const AgreementReport& r) {
    json j;
    j["groups"] = json::array();
    for (const auto& g : r.groups)
        j["groups"].push_back({{"group", g.group.key()},
                               {"compared", g.compared},
                               {"identical", g.identical},
                               {"excluded", g.excluded},
                               {"agreement", opt(g.agreement)}});
    j["average"] = opt(r.average);
    j["excluded"] = r.excluded;
    return j.dump(2);
}

namespace {

std::unordered_map<std::string_view, const PaperRecord*> index_records(const std::vector<PaperRecord>& records) {
    std::unordered_map<std::string_view, const PaperRecord*> by_id;
    by_id.reserve(records.size());
    for (const auto& r : records) by_id.emplace(r.id, &r);
    return by_id;
}

}  // namespace

JournalBreakdown journal_breakdown(const std::vector<Prediction>& predictions, const std::vector<PaperRecord>& records) {
    const auto by_id = index_records(records);
    std::map<std::string, JournalRow> rows;
    std::set<int> years;
    for (const auto& p : predictions) {
        auto it = by_id.find(p.record_id);
        if (it == by_id.end()) throw Error("prediction refers to unknown record " + p.record_id);
        if (!p.ok() || *p.verdict != Verdict::Positive) continue;
        const auto& rec = *it->second;
        auto& row = rows[rec.journal];
        row.journal = rec.journal;
        ++row.per_year[rec.year];
        ++row.total;
        years.insert(rec.year);
    }
    JournalBreakdown table;
    table.years.assign(years.begin(), years.end());
    for (auto& [name, row] : rows) table.rows.push_back(std::move(row));
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const JournalRow& a, const JournalRow& b) {
        if (a.total != b.total) return a.total > b.total;
        return a.journal < b.journal;
    });
    return table;
}

std::map<int, PositiveRate> positive_rate_by_year(const std::vector<Prediction>& predictions,
                                                  const std::vector<PaperRecord>& records) {
    const auto by_id = index_records(records);
    std::map<int, std::vector<Prediction>> per_year;
    for (const auto& p : predictions) {
        auto it = by_id.find(p.record_id);
        if (it == by_id.end()) throw Error("prediction refers to unknown record " + p.record_id);
        if (p.ok()) per_year[it->second->year].push_back(p);
    }
    std::map<int, PositiveRate> out;
    for (const auto& [year, preds] : per_year) out[year] = positive_rate(preds);
    return out;
}

std::string format_journal_breakdown(const JournalBreakdown& t, std::size_t top_n) {
    std::size_t width = 20;
    for (const auto& r : t.rows) width = std::max(width, r.journal.size() + 2);
    std::string out = fmt::format("{:<{}}{:>8}", "Publisher (Journal)", width, "Total");
    for (int y : t.years) out += fmt::format("{:>8}", y);
    out += '\n';
    const std::size_t n = top_n ? std::min(top_n, t.rows.size()) : t.rows.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = t.rows[i];
        out += fmt::format("{:<{}}{:>8}", r.journal, width, r.total);
        for (int y : t.years) {
            auto it = r.per_year.find(y);
            out += fmt::format("{:>8}", it == r.per_year.end() ? 0 : it->second);
        }
        out += '\n';
    }
    return out;
}

std::string journal_breakdown_to_json(const JournalBreakdown& t) {
    json j;
    j["years"] = t.years;
    j["rows"] = json::array();
    for (const auto& r : t.rows) {
        json per_year = json::object();
        for (const auto& [y, c] : r.per_year) per_year[std::to_string(y)] = c;
        j["rows"].push_back({{"journal", r.journal}, {"total", r.total}, {"per_year", per_year}});
    }
    return j.dump(2);
}

}  // namespace hcite
