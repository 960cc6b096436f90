#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace triage::labeler {

struct LabelRule {
    std::string name;
    std::vector<std::string> keywords;  // words or phrases, matched whole-word
};

// Rule-based clinical label lexicon: 13 finding labels plus "No Finding".
// Ships as editable JSON; the built-in default covers the synthetic corpus
// vocabulary.
struct LabelLexicon {
    std::vector<LabelRule> labels;
    std::vector<std::string> negation_cues;     // within 4 tokens before a keyword
    std::vector<std::string> uncertainty_cues;  // anywhere in the same sentence

    static LabelLexicon default_lexicon();
    void validate() const;
};

LabelLexicon load_lexicon(const std::string& path);
void save_lexicon(const LabelLexicon& lexicon, const std::string& path);

// Positive label names for a text; uncertain mentions count as positive and
// "No Finding" is returned exactly when no finding label fires.
std::set<std::string> extract_labels(std::string_view text, const LabelLexicon& lexicon);

// True iff extract_labels yields exactly {"No Finding"}.
bool is_normal(std::string_view text, const LabelLexicon& lexicon);

}  // namespace triage::labeler
