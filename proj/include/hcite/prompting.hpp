#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hcite/corpus.hpp"
#include "hcite/verdict.hpp"

namespace hcite {

struct ReferenceExample {
    std::string title;
    std::string abstract;
    std::string keywords;
    std::string publisher;
    Verdict judgment = Verdict::Negative;
};

/// Per-period prompt content. The engine is content-agnostic: everything
/// here comes from a template file.
struct PromptTemplate {
    PublicationGroup group;
    std::string version;
    std::string task_framing;
    std::string evaluation_guidelines;
    std::string temporal_background;
    std::string examples_preamble;
    std::vector<ReferenceExample> examples;
    /// Must contain each of {title} {abstract} {keywords} {year_cleaning}
    /// {publisher} exactly once.
    std::string constraints_and_format;
};

inline constexpr const char* kPlaceholders[] = {"title", "abstract", "keywords", "year_cleaning", "publisher"};
inline constexpr const char* kEmptyAbstractText = "(no abstract provided)";

/// Throws Error describing the first violated invariant.
void validate_template(const PromptTemplate& t);

/// Parses and validates one template document. `source` names it in errors.
PromptTemplate parse_template(const std::string& text, const std::string& source);

class TemplateStore {
public:
    TemplateStore() = default;
    explicit TemplateStore(std::vector<PromptTemplate> templates);

    const PromptTemplate& for_group(const PublicationGroup& group) const;
    /// Throws Error when the year has no group or the group has no template.
    const PromptTemplate& for_year(int year) const;
    bool has(const PublicationGroup& group) const { return templates_.count(group.key()) != 0; }
    std::size_t size() const { return templates_.size(); }
    /// The shared version string, or "mixed" when files disagree.
    const std::string& version() const { return version_; }

private:
    std::map<std::string, PromptTemplate> templates_;
    std::string version_;
};

/// Loads every *.json in `directory`; requires one template per historical
/// group plus the forecast era.
TemplateStore load_templates(const std::filesystem::path& directory);

const PromptTemplate& forecast_template(const TemplateStore& store);

struct PromptBundle {
    std::string record_id;
    PublicationGroup group;
    std::string text;
    std::string template_version;
    std::size_t char_length = 0;   // code points
    std::size_t token_estimate = 0;  // ceil(char_length / 4)

    bool operator==(const PromptBundle&) const = default;
};

std::string render_examples(const PromptTemplate& t);

/// Replaces placeholders in one left-to-right pass; substituted values are
/// never rescanned, so record text containing "{title}" stays literal.
std::string substitute(const std::string& pattern, const std::map<std::string, std::string>& values);

PromptBundle assemble(const PaperRecord& record, const PromptTemplate& t);
PromptBundle assemble(const PaperRecord& record, const TemplateStore& store);

std::string to_json_line(const PromptBundle& bundle);
std::vector<PromptBundle> read_bundles(const std::filesystem::path& path);

}  // namespace hcite
