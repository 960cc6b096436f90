#include "triage/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "triage/rng.hpp"

namespace triage {

using nlohmann::json;

std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

Split split_from_name(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw std::invalid_argument("unknown split name: " + std::string(name));
}

TagVocabulary::TagVocabulary(std::vector<std::string> tags) {
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
    tags_ = std::move(tags);
    for (std::size_t i = 0; i < tags_.size(); ++i) index_[tags_[i]] = i;
}

std::optional<std::size_t> TagVocabulary::index_of(std::string_view tag) const {
    const auto it = index_.find(tag);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<const Exam*> Corpus::split_exams(Split s) const {
    std::vector<const Exam*> out;
    for (const Exam& e : exams)
        if (e.split == s) out.push_back(&e);
    return out;
}

std::vector<const Exam*> Corpus::abnormal_exams(Split s) const {
    std::vector<const Exam*> out;
    for (const Exam& e : exams)
        if (e.split == s && e.abnormal) out.push_back(&e);
    return out;
}

const Exam* Corpus::find(std::string_view exam_id) const {
    for (const Exam& e : exams)
        if (e.exam_id == exam_id) return &e;
    return nullptr;
}

namespace {

void normalize_tags(std::vector<std::string>& tags) {
    std::sort(tags.begin(), tags.end());
    tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
}

void finalize_corpus(Corpus& corpus) {
    if (corpus.exams.empty()) throw std::runtime_error("corpus is empty");
    std::set<std::string> ids;
    std::vector<std::string> all_tags;
    for (Exam& e : corpus.exams) {
        if (!ids.insert(e.exam_id).second)
            throw std::runtime_error("duplicate exam_id: " + e.exam_id);
        e.abnormal = !e.tags.empty();
        all_tags.insert(all_tags.end(), e.tags.begin(), e.tags.end());
    }
    corpus.tag_alphabet = TagVocabulary(std::move(all_tags));
}

Exam parse_exam_record(const json& rec, std::size_t line_no) {
    const auto fail = [line_no](const std::string& msg) -> std::runtime_error {
        return std::runtime_error("line " + std::to_string(line_no) + ": " + msg);
    };
    if (!rec.is_object()) throw fail("record is not a JSON object");
    Exam e;
    if (!rec.contains("exam_id") || !rec["exam_id"].is_string())
        throw fail("missing or non-string exam_id");
    e.exam_id = rec["exam_id"].get<std::string>();
    if (e.exam_id.empty()) throw fail("empty exam_id");

    if (!rec.contains("images") || !rec["images"].is_array() || rec["images"].empty())
        throw fail("missing or empty images array");
    for (const json& img : rec["images"]) {
        if (!img.is_array() || img.empty()) throw fail("image embedding is not a non-empty array");
        std::vector<double> v;
        v.reserve(img.size());
        for (const json& x : img) {
            if (!x.is_number()) throw fail("non-numeric embedding component");
            const double d = x.get<double>();
            if (!std::isfinite(d)) throw fail("non-finite embedding component");
            v.push_back(d);
        }
        if (!e.images.empty() && v.size() != e.images.front().size())
            throw fail("images of one exam differ in dimension");
        e.images.push_back(std::move(v));
    }

    if (rec.contains("tags")) {
        if (!rec["tags"].is_array()) throw fail("tags is not an array");
        for (const json& t : rec["tags"]) {
            if (!t.is_string()) throw fail("non-string tag");
            e.tags.push_back(t.get<std::string>());
        }
        normalize_tags(e.tags);
    }

    if (!rec.contains("report") || !rec["report"].is_string())
        throw fail("missing or non-string report");
    e.report = rec["report"].get<std::string>();

    if (!rec.contains("split") || !rec["split"].is_string())
        throw fail("missing or non-string split");
    try {
        e.split = split_from_name(rec["split"].get<std::string>());
    } catch (const std::invalid_argument& ex) {
        throw fail(ex.what());
    }
    return e;
}

}  // namespace

Corpus load_corpus(const std::string& path, std::optional<std::size_t> expected_m) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& ex) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": malformed JSON: " + ex.what());
        }
        Exam e = parse_exam_record(rec, line_no);
        const std::size_t m = e.images.size();
        const std::size_t d = e.images.front().size();
        if (corpus.exams.empty()) {
            if (expected_m && m != *expected_m)
                throw std::runtime_error("line " + std::to_string(line_no) + ": exam has " +
                                         std::to_string(m) + " images, expected " +
                                         std::to_string(*expected_m));
            corpus.images_per_exam = m;
            corpus.dimension = d;
        } else if (m != corpus.images_per_exam || d != corpus.dimension) {
            throw std::runtime_error("line " + std::to_string(line_no) +
                                     ": exam dimensions (m=" + std::to_string(m) +
                                     ", d=" + std::to_string(d) +
                                     ") differ from the rest of the corpus");
        }
        corpus.exams.push_back(std::move(e));
    }
    finalize_corpus(corpus);
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (const Exam& e : corpus.exams) {
        json rec;
        rec["exam_id"] = e.exam_id;
        rec["images"] = e.images;
        rec["tags"] = e.tags;
        rec["report"] = e.report;
        rec["split"] = std::string(split_name(e.split));
        out << rec.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

constexpr const char* kTagTerms[32] = {
    // The first terms track the clinical labeler's default keyword lists so
    // that clinical precision/recall stays meaningful on synthetic data.
    "atelectasis", "cardiomegaly", "consolidation", "edema", "effusion", "pneumonia",
    "pneumothorax", "fracture", "opacity", "nodule", "mass", "lesion", "thickening",
    "pacemaker", "arthritis", "bronchiectasis", "calcification", "cicatrix", "cyst",
    "degeneration", "ectasia", "emphysema", "fibrosis", "granuloma", "hernia",
    "hyperinflation", "infiltration", "kyphosis", "osteophyte", "sarcoidosis", "scoliosis",
    "spondylosis"};

constexpr const char* kNormalReports[5] = {
    "The heart is normal in size. The mediastinum is unremarkable. The lungs are clear.",
    "Heart size within normal limits. No focal airspace disease. No pleural effusion or "
    "pneumothorax.",
    "The lungs are clear bilaterally. Cardiac silhouette is within normal limits.",
    "The cardiomediastinal silhouette is unremarkable. Pulmonary vasculature is normal.",
    "Both lungs are clear and expanded. Heart and mediastinum are normal."};

constexpr const char* kAbnormalTemplates[4] = {
    "There is %TERM%.",
    "Findings are consistent with %TERM%.",
    "Mild %TERM% is seen.",
    "Stable %TERM% is noted.",
};

constexpr const char* kSharedPhrases[3] = {
    "The osseous structures are intact.",
    "The heart size is stable.",
    "Visualized soft tissues are unremarkable.",
};

std::string fill_template(const char* tmpl, std::string_view term) {
    std::string s(tmpl);
    const auto pos = s.find("%TERM%");
    s.replace(pos, 6, term);
    return s;
}

long long round_half_away(double x) {
    return static_cast<long long>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

struct SplitPlan {
    Split split;
    std::size_t total = 0;
    std::size_t abnormal = 0;
};

std::vector<SplitPlan> plan_splits(const SynthConfig& cfg, std::size_t total,
                                   std::size_t abnormal_total) {
    std::vector<SplitPlan> plans;
    if (cfg.n_train + cfg.n_val + cfg.n_test > 0) {
        plans = {{Split::train, cfg.n_train, 0}, {Split::val, cfg.n_val, 0},
                 {Split::test, cfg.n_test, 0}};
    } else {
        const auto nt = static_cast<std::size_t>(round_half_away(cfg.train_fraction * total));
        const auto nv = static_cast<std::size_t>(round_half_away(cfg.val_fraction * total));
        if (nt + nv > total) throw std::invalid_argument("split fractions exceed 1");
        plans = {{Split::train, nt, 0}, {Split::val, nv, 0}, {Split::test, total - nt - nv, 0}};
    }
    // Largest-remainder apportionment of the abnormal count across splits.
    double remainders[3];
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota =
            static_cast<double>(abnormal_total) * static_cast<double>(plans[i].total) /
            static_cast<double>(total);
        plans[i].abnormal = std::min(static_cast<std::size_t>(std::floor(quota)), plans[i].total);
        remainders[i] = quota - std::floor(quota);
        assigned += plans[i].abnormal;
    }
    while (assigned < abnormal_total) {
        std::size_t best = 3;
        for (std::size_t i = 0; i < 3; ++i) {
            if (plans[i].abnormal >= plans[i].total) continue;
            if (best == 3 || remainders[i] > remainders[best]) best = i;
        }
        if (best == 3) break;
        ++plans[best].abnormal;
        remainders[best] = -1.0;
        ++assigned;
    }
    return plans;
}

}  // namespace

std::string_view synth_tag_term(std::size_t index) {
    if (index >= 32) throw std::out_of_range("synthetic tag term index out of range");
    return kTagTerms[index];
}

Corpus synth_corpus(const SynthConfig& cfg) {
    std::size_t total = cfg.n;
    if (cfg.n_train + cfg.n_val + cfg.n_test > 0)
        total = cfg.n_train + cfg.n_val + cfg.n_test;
    if (total < 10) throw std::invalid_argument("synth corpus needs at least 10 exams");
    if (cfg.dimension < 2) throw std::invalid_argument("synth dimension must be >= 2");
    if (cfg.images_per_exam < 1) throw std::invalid_argument("images_per_exam must be >= 1");
    if (cfg.tag_count < 1 || cfg.tag_count > 32)
        throw std::invalid_argument("tag_count must be in [1, 32]");
    if (!(cfg.abnormal_fraction > 0.0 && cfg.abnormal_fraction < 1.0))
        throw std::invalid_argument("abnormal_fraction must be in (0, 1)");

    auto abnormal_total = static_cast<std::size_t>(
        round_half_away(static_cast<double>(total) * cfg.abnormal_fraction));
    abnormal_total = std::clamp<std::size_t>(abnormal_total, 1, total - 1);

    rng::Random rng(cfg.seed);
    const std::size_t d = cfg.dimension;
    const std::size_t m = cfg.images_per_exam;
    const std::size_t max_tags = std::min<std::size_t>(4, cfg.tag_count);

    Corpus corpus;
    corpus.dimension = d;
    corpus.images_per_exam = m;

    for (const SplitPlan& plan : plan_splits(cfg, total, abnormal_total)) {
        std::vector<Exam> split_exams;
        split_exams.reserve(plan.total);
        for (std::size_t i = 0; i < plan.total; ++i) {
            Exam e;
            e.split = plan.split;
            const bool abnormal = i < plan.abnormal;
            std::vector<double> mean(d, 0.0);
            if (abnormal) {
                const std::size_t k = 1 + rng.uniform_index(max_tags);
                std::vector<std::size_t> picked = rng.sample_indices(cfg.tag_count, k);
                for (std::size_t t : picked) {
                    mean[t % d] += cfg.separation;
                    e.tags.emplace_back(kTagTerms[t]);
                }
                normalize_tags(e.tags);
            }
            e.images.resize(m);
            for (std::size_t j = 0; j < m; ++j) {
                e.images[j].resize(d);
                for (std::size_t c = 0; c < d; ++c) e.images[j][c] = mean[c] + rng.gaussian();
            }
            if (abnormal) {
                std::string report;
                for (const std::string& tag : e.tags) {
                    if (!report.empty()) report += ' ';
                    report += fill_template(kAbnormalTemplates[rng.uniform_index(4)], tag);
                }
                report += ' ';
                report += kSharedPhrases[rng.uniform_index(3)];
                e.report = std::move(report);
            } else {
                e.report = kNormalReports[rng.uniform_index(5)];
            }
            split_exams.push_back(std::move(e));
        }
        rng.shuffle(split_exams);
        for (Exam& e : split_exams) corpus.exams.push_back(std::move(e));
    }

    for (std::size_t i = 0; i < corpus.exams.size(); ++i) {
        std::ostringstream id;
        id << "synth-" << std::setw(6) << std::setfill('0') << i;
        corpus.exams[i].exam_id = id.str();
    }
    finalize_corpus(corpus);
    return corpus;
}

Corpus synth_corpus(std::uint64_t seed, std::size_t n, std::size_t d, std::size_t m,
                    std::size_t tag_count, double abnormal_fraction) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.n = n;
    cfg.dimension = d;
    cfg.images_per_exam = m;
    cfg.tag_count = tag_count;
    cfg.abnormal_fraction = abnormal_fraction;
    return synth_corpus(cfg);
}

std::vector<double> concat_embedding(const Exam& exam) {
    std::vector<double> out;
    std::size_t total = 0;
    for (const auto& img : exam.images) total += img.size();
    out.reserve(total);
    for (const auto& img : exam.images) out.insert(out.end(), img.begin(), img.end());
    return out;
}

}  // namespace triage
