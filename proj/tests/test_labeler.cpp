#include <doctest.h>

#include <cctype>
#include <cstdio>
#include <string>

#include "triage/labeler.hpp"

using namespace triage::labeler;

namespace {

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace

TEST_CASE("extract_labels: direct mention, negation, uncertainty") {
    const LabelLexicon lex = LabelLexicon::default_lexicon();

    CHECK(extract_labels("There is pneumonia.", lex) == std::set<std::string>{"Pneumonia"});
    CHECK(extract_labels("No pneumonia or edema.", lex) == std::set<std::string>{"No Finding"});
    // Uncertain mentions count as positive.
    CHECK(extract_labels("Possible pneumonia.", lex) == std::set<std::string>{"Pneumonia"});
    CHECK(extract_labels("Cannot exclude pneumothorax.", lex) ==
          std::set<std::string>{"Pneumothorax"});

    // The negation window is four tokens; a cue further back does not fire.
    CHECK(extract_labels("No evidence at all of chronic interstitial edema.", lex) ==
          std::set<std::string>{"Edema"});
    // Negation does not leak across sentences.
    CHECK(extract_labels("No change. Edema persists.", lex) == std::set<std::string>{"Edema"});
}

TEST_CASE("extract_labels is case-insensitive") {
    const LabelLexicon lex = LabelLexicon::default_lexicon();
    for (const char* text :
         {"There is pneumonia.", "Mild edema and a small pleural effusion.",
          "No pneumothorax.", "Possible consolidation in the left lobe."}) {
        CHECK(extract_labels(text, lex) == extract_labels(upper(text), lex));
    }
}

TEST_CASE("No Finding is exclusive and appears only when nothing fires") {
    const LabelLexicon lex = LabelLexicon::default_lexicon();
    for (const char* text :
         {"Lungs are clear.", "There is pneumonia.", "No pneumonia.", "Edema and fracture."}) {
        const auto labels = extract_labels(text, lex);
        if (labels.count("No Finding")) CHECK(labels.size() == 1);
        CHECK(!labels.empty());
    }
}

TEST_CASE("appending an unrelated sentence never removes a positive label") {
    const LabelLexicon lex = LabelLexicon::default_lexicon();
    const std::string base = "There is pneumonia. Mild edema.";
    const auto before = extract_labels(base, lex);
    const auto after = extract_labels(base + " The patient is ambulatory.", lex);
    for (const std::string& label : before)
        if (label != "No Finding") CHECK(after.count(label) == 1);

    // A repeated positive mention outweighs an earlier negated one.
    const auto mixed = extract_labels("No pneumonia. Pneumonia has developed.", lex);
    CHECK(mixed.count("Pneumonia") == 1);
}

TEST_CASE("multi-word keywords match as phrases") {
    const LabelLexicon lex = LabelLexicon::default_lexicon();
    CHECK(extract_labels("There is an enlarged heart.", lex) ==
          std::set<std::string>{"Cardiomegaly"});
    // "enlarged" alone is not a keyword.
    CHECK(extract_labels("The image is enlarged for review.", lex) ==
          std::set<std::string>{"No Finding"});
}

TEST_CASE("is_normal tracks extract_labels") {
    const LabelLexicon lex = LabelLexicon::default_lexicon();
    CHECK(is_normal("Lungs are clear.", lex));
    CHECK_FALSE(is_normal("Mild edema.", lex));
    for (const char* text : {"Stable appearance.", "Pneumonia.", "No acute fracture.",
                             "Suspicious mass noted."}) {
        const auto labels = extract_labels(text, lex);
        CHECK(is_normal(text, lex) == (labels == std::set<std::string>{"No Finding"}));
    }
}

TEST_CASE("lexicon validation and JSON round-trip") {
    LabelLexicon lex = LabelLexicon::default_lexicon();
    const std::string path = "/tmp/triage_test_lexicon.json";
    save_lexicon(lex, path);
    const LabelLexicon loaded = load_lexicon(path);
    CHECK(loaded.labels.size() == lex.labels.size());
    CHECK(loaded.negation_cues == lex.negation_cues);
    CHECK(loaded.uncertainty_cues == lex.uncertainty_cues);
    CHECK(extract_labels("There is pneumonia.", loaded) == std::set<std::string>{"Pneumonia"});
    std::remove(path.c_str());

    LabelLexicon bad;
    bad.labels = {{"Pneumonia", {"pneumonia"}}};  // missing "No Finding"
    CHECK_THROWS(bad.validate());
    LabelLexicon empty_kw;
    empty_kw.labels = {{"Pneumonia", {}}, {"No Finding", {}}};
    CHECK_THROWS(empty_kw.validate());
}
