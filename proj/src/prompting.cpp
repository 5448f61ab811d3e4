#include "hcite/prompting.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

namespace hcite {

using json = nlohmann::ordered_json;

namespace {

bool is_placeholder_char(char c) {
    return std::islower(static_cast<unsigned char>(c)) || c == '_';
}

// Names of every {lower_snake} token, in order of appearance.
std::vector<std::string> placeholder_names(const std::string& s) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '{') continue;
        std::size_t j = i + 1;
        while (j < s.size() && is_placeholder_char(s[j])) ++j;
        if (j > i + 1 && j < s.size() && s[j] == '}') {
            names.push_back(s.substr(i + 1, j - i - 1));
            i = j;
        }
    }
    return names;
}

}  // namespace

void validate_template(const PromptTemplate& t) {
    const std::string where = t.group.key();
    auto require_text = [&](const std::string& value, const char* field) {
        if (trim(value).empty()) throw Error(fmt::format("template {}: empty {}", where, field));
    };
    if (t.version.empty()) throw Error(fmt::format("template {}: missing version", where));
    require_text(t.task_framing, "task_framing");
    require_text(t.evaluation_guidelines, "evaluation_guidelines");
    require_text(t.temporal_background, "temporal_background");
    require_text(t.constraints_and_format, "constraints_and_format");

    const auto positives = std::count_if(t.examples.begin(), t.examples.end(),
                                         [](const auto& e) { return e.judgment == Verdict::Positive; });
    if (t.examples.size() != 6 || positives != 3)
        throw Error(fmt::format("template {}: reference examples must be 3 positive + 3 negative", where));
    for (const auto& e : t.examples) {
        require_text(e.title, "example title");
        require_text(e.abstract, "example abstract");
        require_text(e.keywords, "example keywords");
        require_text(e.publisher, "example publisher");
    }

    const auto found = placeholder_names(t.constraints_and_format);
    for (const char* name : kPlaceholders) {
        const auto n = std::count(found.begin(), found.end(), name);
        if (n == 0) throw Error(fmt::format("template {}: template missing {{{}}}", where, name));
        if (n > 1) throw Error(fmt::format("template {}: template repeats {{{}}}", where, name));
    }
    for (const auto& name : found)
        if (std::find(std::begin(kPlaceholders), std::end(kPlaceholders), name) == std::end(kPlaceholders))
            throw Error(fmt::format("template {}: unknown placeholder {{{}}}", where, name));
}

PromptTemplate parse_template(const std::string& text, const std::string& source) {
    PromptTemplate t;
    try {
        const auto j = json::parse(text);
        const auto key = j.at("group").get<std::string>();
        auto group = group_from_key(key);
        if (!group) throw Error(fmt::format("{}: unknown group {}", source, key));
        t.group = *group;
        t.version = j.at("version").get<std::string>();
        t.task_framing = j.at("task_framing").get<std::string>();
        t.evaluation_guidelines = j.at("evaluation_guidelines").get<std::string>();
        t.temporal_background = j.at("temporal_background").get<std::string>();
        t.examples_preamble = j.value("reference_examples_preamble", std::string{});
        t.constraints_and_format = j.at("constraints_and_format").get<std::string>();
        for (const auto& e : j.at("reference_examples")) {
            const auto judgment = e.at("judgment").get<std::string>();
            if (judgment != "Positive" && judgment != "Negative")
                throw Error(fmt::format("{}: judgment must be Positive or Negative, got {}", source, judgment));
            t.examples.push_back({e.at("title").get<std::string>(), e.at("abstract").get<std::string>(),
                                  e.at("keywords").get<std::string>(), e.at("publisher").get<std::string>(),
                                  judgment == "Positive" ? Verdict::Positive : Verdict::Negative});
        }
    } catch (const json::exception& e) {
        throw Error(fmt::format("{}: malformed template ({})", source, e.what()));
    }
    try {
        validate_template(t);
    } catch (const Error& e) {
        throw Error(fmt::format("{}: {}", source, e.what()));
    }
    return t;
}

TemplateStore::TemplateStore(std::vector<PromptTemplate> templates) {
    std::set<std::string> versions;
    for (auto& t : templates) {
        versions.insert(t.version);
        auto key = t.group.key();
        if (!templates_.emplace(key, std::move(t)).second) throw Error("duplicate template for group " + key);
    }
    version_ = versions.size() == 1 ? *versions.begin() : "mixed";
}

const PromptTemplate& TemplateStore::for_group(const PublicationGroup& group) const {
    auto it = templates_.find(group.key());
    if (it == templates_.end()) throw Error("no template for group " + group.key());
    return it->second;
}

const PromptTemplate& TemplateStore::for_year(int year) const {
    auto group = group_of(year);
    if (!group) throw Error(fmt::format("no template for group: year {} is outside all publication groups", year));
    return for_group(*group);
}

TemplateStore load_templates(const std::filesystem::path& directory) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(directory)) throw Error("template directory not found: " + directory.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory))
        if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<PromptTemplate> templates;
    for (const auto& f : files) templates.push_back(parse_template(read_file(f), f.filename().string()));
    TemplateStore store(std::move(templates));
    for (const auto& g : all_groups())
        if (!store.has(g)) throw Error("no template for group " + g.key());
    return store;
}

const PromptTemplate& forecast_template(const TemplateStore& store) {
    return store.for_group(forecast_group());
}

std::string render_examples(const PromptTemplate& t) {
    std::string out = t.examples_preamble;
    for (std::size_t i = 0; i < t.examples.size(); ++i) {
        const auto& e = t.examples[i];
        if (!out.empty()) out += "\n\n";
        out += fmt::format("Example {}: {}\nTitle: {}\nPublisher: {}\nAbstract: {}\nKeywords: {}\nJudgment: {}",
                           i + 1, e.judgment == Verdict::Positive ? "Highly Cited" : "Not Highly Cited", e.title,
                           e.publisher, e.abstract, e.keywords, verdict_token(e.judgment));
    }
    return out;
}

std::string substitute(const std::string& pattern, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(pattern.size());
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (pattern[i] == '{') {
            auto close = pattern.find('}', i + 1);
            if (close != std::string::npos) {
                auto it = values.find(pattern.substr(i + 1, close - i - 1));
                if (it != values.end()) {
                    out += it->second;
                    i = close;
                    continue;
                }
            }
        }
        out += pattern[i];
    }
    return out;
}

PromptBundle assemble(const PaperRecord& record, const PromptTemplate& t) {
    const std::string abstract = trim(record.abstract).empty() ? kEmptyAbstractText : record.abstract;
    const std::map<std::string, std::string> values{
        {"title", record.title},
        {"abstract", abstract},
        {"keywords", join(record.keywords, "; ")},
        {"year_cleaning", std::to_string(record.year)},
        {"publisher", record.journal},
    };

    PromptBundle b;
    b.record_id = record.id;
    b.group = t.group;
    b.template_version = t.version;
    b.text = t.task_framing + "\n\n" + t.evaluation_guidelines + "\n\n" + t.temporal_background + "\n\n" +
             render_examples(t) + "\n\n" + substitute(t.constraints_and_format, values) + "\n";
    b.char_length = utf8_length(b.text);
    b.token_estimate = (b.char_length + 3) / 4;
    return b;
}

PromptBundle assemble(const PaperRecord& record, const TemplateStore& store) {
    return assemble(record, store.for_year(record.year));
}

std::string to_json_line(const PromptBundle& b) {
    json j;
    j["id"] = b.record_id;
    j["group"] = b.group.key();
    j["template_version"] = b.template_version;
    j["char_length"] = b.char_length;
    j["token_estimate"] = b.token_estimate;
    j["text"] = b.text;
    return j.dump();
}

std::vector<PromptBundle> read_bundles(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read prompts file " + path.string());
    std::vector<PromptBundle> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = json::parse(line);
            PromptBundle b;
            b.record_id = j.at("id").get<std::string>();
            auto group = group_from_key(j.at("group").get<std::string>());
            if (!group) throw Error("unknown group");
            b.group = *group;
            b.template_version = j.at("template_version").get<std::string>();
            b.char_length = j.at("char_length").get<std::size_t>();
            b.token_estimate = j.at("token_estimate").get<std::size_t>();
            b.text = j.at("text").get<std::string>();
            out.push_back(std::move(b));
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) + ": bad prompt line (" + e.what() + ")");
        }
    }
    return out;
}

}  // namespace hcite
