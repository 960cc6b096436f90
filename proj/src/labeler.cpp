#include "triage/labeler.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace triage::labeler {

using nlohmann::json;

namespace {

constexpr std::string_view kNoFinding = "No Finding";

bool ascii_alnum(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

// Lowercased alphanumeric tokens; nothing dropped.
std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (ascii_alnum(c)) {
            cur += ascii_lower(c);
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> sentences;
    std::string cur;
    for (char c : text) {
        if (c == '.') {
            sentences.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) sentences.push_back(cur);
    return sentences;
}

// True when `phrase` occupies tokens[pos .. pos+|phrase|).
bool phrase_at(const std::vector<std::string>& tokens, std::size_t pos,
               const std::vector<std::string>& phrase) {
    if (pos + phrase.size() > tokens.size()) return false;
    for (std::size_t i = 0; i < phrase.size(); ++i)
        if (tokens[pos + i] != phrase[i]) return false;
    return true;
}

bool phrase_anywhere(const std::vector<std::string>& tokens,
                     const std::vector<std::string>& phrase) {
    if (phrase.empty()) return false;
    for (std::size_t pos = 0; pos + phrase.size() <= tokens.size(); ++pos)
        if (phrase_at(tokens, pos, phrase)) return true;
    return false;
}

enum class Polarity { absent, negative, uncertain, positive };

}  // namespace

void LabelLexicon::validate() const {
    std::size_t no_finding = 0;
    for (const LabelRule& rule : labels) {
        if (rule.name == kNoFinding) {
            ++no_finding;
            continue;
        }
        if (rule.keywords.empty())
            throw std::runtime_error("lexicon: finding label '" + rule.name + "' has no keywords");
    }
    if (no_finding != 1)
        throw std::runtime_error("lexicon: expected exactly one 'No Finding' label");
}

LabelLexicon LabelLexicon::default_lexicon() {
    LabelLexicon lex;
    lex.labels = {
        {"Atelectasis", {"atelectasis", "atelectatic"}},
        {"Cardiomegaly", {"cardiomegaly", "enlarged heart"}},
        {"Consolidation", {"consolidation", "consolidative"}},
        {"Edema", {"edema"}},
        {"Enlarged Cardiomediastinum", {"widened mediastinum", "mediastinal widening"}},
        {"Fracture", {"fracture", "fractures"}},
        {"Lung Lesion", {"lesion", "lesions", "mass", "nodule", "nodules"}},
        {"Lung Opacity", {"opacity", "opacities", "infiltrate"}},
        {"Pleural Effusion", {"effusion", "effusions", "pleural fluid"}},
        {"Pleural Other", {"pleural thickening", "thickening"}},
        {"Pneumonia", {"pneumonia"}},
        {"Pneumothorax", {"pneumothorax"}},
        {"Support Devices", {"pacemaker", "catheter", "tube"}},
        {std::string(kNoFinding), {}},
    };
    lex.negation_cues = {"no", "not", "without", "negative", "free", "clear", "resolved",
                         "absence"};
    lex.uncertainty_cues = {"possible", "possibly", "may", "cannot exclude", "suspicious"};
    lex.validate();
    return lex;
}

LabelLexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& ex) {
        throw std::runtime_error("lexicon " + path + ": malformed JSON: " + ex.what());
    }
    LabelLexicon lex;
    for (const json& entry : doc.at("labels")) {
        LabelRule rule;
        rule.name = entry.at("name").get<std::string>();
        if (entry.contains("keywords"))
            rule.keywords = entry["keywords"].get<std::vector<std::string>>();
        lex.labels.push_back(std::move(rule));
    }
    lex.negation_cues = doc.at("negation_cues").get<std::vector<std::string>>();
    lex.uncertainty_cues = doc.at("uncertainty_cues").get<std::vector<std::string>>();
    lex.validate();
    return lex;
}

void save_lexicon(const LabelLexicon& lexicon, const std::string& path) {
    json doc;
    doc["labels"] = json::array();
    for (const LabelRule& rule : lexicon.labels)
        doc["labels"].push_back({{"name", rule.name}, {"keywords", rule.keywords}});
    doc["negation_cues"] = lexicon.negation_cues;
    doc["uncertainty_cues"] = lexicon.uncertainty_cues;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write lexicon file: " + path);
    out << doc.dump(2) << '\n';
}

std::set<std::string> extract_labels(std::string_view text, const LabelLexicon& lexicon) {
    lexicon.validate();

    std::vector<std::vector<std::string>> sentences;
    for (const std::string& s : split_sentences(text)) {
        auto toks = tokenize(s);
        if (!toks.empty()) sentences.push_back(std::move(toks));
    }
    std::vector<std::vector<std::string>> negations, uncertainties;
    for (const std::string& cue : lexicon.negation_cues) negations.push_back(tokenize(cue));
    for (const std::string& cue : lexicon.uncertainty_cues) uncertainties.push_back(tokenize(cue));

    std::set<std::string> out;
    bool any_finding = false;
    for (const LabelRule& rule : lexicon.labels) {
        if (rule.name == kNoFinding) continue;
        Polarity polarity = Polarity::absent;
        for (const std::string& keyword : rule.keywords) {
            const std::vector<std::string> phrase = tokenize(keyword);
            if (phrase.empty()) continue;
            for (const std::vector<std::string>& sent : sentences) {
                for (std::size_t pos = 0; pos + phrase.size() <= sent.size(); ++pos) {
                    if (!phrase_at(sent, pos, phrase)) continue;
                    // Negation: a cue whose tokens all fall within the 4
                    // tokens preceding the keyword occurrence.
                    bool negated = false;
                    const std::size_t window_begin = pos >= 4 ? pos - 4 : 0;
                    for (const auto& cue : negations) {
                        if (cue.empty() || negated) continue;
                        for (std::size_t c = window_begin; c + cue.size() <= pos; ++c)
                            if (phrase_at(sent, c, cue)) {
                                negated = true;
                                break;
                            }
                    }
                    Polarity occ = Polarity::positive;
                    if (negated) {
                        occ = Polarity::negative;
                    } else {
                        for (const auto& cue : uncertainties)
                            if (phrase_anywhere(sent, cue)) {
                                occ = Polarity::uncertain;
                                break;
                            }
                    }
                    if (occ > polarity) polarity = occ;
                }
            }
        }
        if (polarity == Polarity::positive || polarity == Polarity::uncertain) {
            out.insert(rule.name);
            any_finding = true;
        }
    }
    if (!any_finding) out.insert(std::string(kNoFinding));
    return out;
}

bool is_normal(std::string_view text, const LabelLexicon& lexicon) {
    const auto labels = extract_labels(text, lexicon);
    return labels.size() == 1 && labels.count(std::string(kNoFinding)) == 1;
}

}  // namespace triage::labeler
