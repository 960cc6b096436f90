#include "triage/rank.hpp"

#include <algorithm>
#include <memory>
#include <set>
#include <stdexcept>

namespace triage::rank {

BaselineMethod baseline_from_name(std::string_view name) {
    if (name == "random") return BaselineMethod::random;
    if (name == "nn1") return BaselineMethod::nn1;
    if (name == "knn") return BaselineMethod::knn;
    throw std::invalid_argument("unknown baseline method: " + std::string(name));
}

BinaryHead train_binary_head(const Corpus& corpus, const numerics::TrainConfig& cfg,
                             std::uint64_t seed, numerics::TrainLog* log) {
    const auto train = corpus.split_exams(Split::train);
    if (train.empty()) throw std::runtime_error("train_binary_head: empty training split");
    bool has_abnormal = false, has_normal = false;
    for (const Exam* e : train) (e->abnormal ? has_abnormal : has_normal) = true;
    if (!has_abnormal || !has_normal)
        throw std::runtime_error("train_binary_head: training split has a single class");

    const std::size_t width = corpus.dimension * corpus.images_per_exam;
    const auto fill = [width](std::span<const Exam* const> exams, Mat& X, Mat& Y) {
        if (exams.empty()) return;
        X = Mat(exams.size(), width);
        Y = Mat(exams.size(), 1);
        for (std::size_t i = 0; i < exams.size(); ++i) {
            const Vec emb = concat_embedding(*exams[i]);
            std::copy(emb.begin(), emb.end(), X.row(i));
            Y(i, 0) = exams[i]->abnormal ? 1.0 : 0.0;
        }
    };

    Mat X_train, Y_train, X_val, Y_val;
    fill(train, X_train, Y_train);
    const auto val = corpus.split_exams(Split::val);
    fill(val, X_val, Y_val);

    BinaryHead head;
    head.stack = numerics::train_dense_sigmoid(X_train, Y_train, X_val, Y_val, cfg, seed, log);
    return head;
}

double score_exam(const BinaryHead& head, const Exam& exam) {
    const Vec logits = head.stack.forward(concat_embedding(exam));
    return numerics::sigmoid(logits.front());
}

Scorer head_scorer(const BinaryHead& head) {
    return [&head](const Exam& e) { return score_exam(head, e); };
}

RankedWorklist rank_exams(const Scorer& scorer, std::span<const Exam* const> exams,
                          std::string method) {
    RankedWorklist w;
    w.method = std::move(method);
    w.entries.reserve(exams.size());
    for (const Exam* e : exams) w.entries.push_back({e->exam_id, scorer(*e)});
    std::sort(w.entries.begin(), w.entries.end(),
              [](const WorklistEntry& a, const WorklistEntry& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.exam_id < b.exam_id;
              });
    return w;
}

std::vector<std::string> top_k(const RankedWorklist& worklist, std::size_t k) {
    const std::size_t take = std::min(k, worklist.entries.size());
    std::vector<std::string> ids;
    ids.reserve(take);
    for (std::size_t i = 0; i < take; ++i) ids.push_back(worklist.entries[i].exam_id);
    return ids;
}

double tag_relevance_score(std::span<const std::string> predicted_tags, const TagVocabulary& gold_alphabet) {
    if (gold_alphabet.size() == 0)
        throw std::invalid_argument("tag_relevance_score: empty gold tag alphabet");
    std::set<std::string> unique(predicted_tags.begin(), predicted_tags.end());
    std::size_t hits = 0;
    for (const std::string& t : unique)
        if (gold_alphabet.contains(t)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(gold_alphabet.size());
}

Scorer baseline_scorer(BaselineMethod method, const Corpus& corpus, std::size_t k_neighbors,
                       std::uint64_t seed) {
    if (method == BaselineMethod::random) {
        return [seed](const Exam& e) {
            return rng::Random(seed ^ rng::fnv1a64(e.exam_id)).uniform();
        };
    }
    const auto train = corpus.split_exams(Split::train);
    if (train.empty()) throw std::runtime_error("baseline ranking: empty training split");
    const auto tagger_method =
        method == BaselineMethod::nn1 ? tag::BaselineMethod::nn1 : tag::BaselineMethod::knn;
    auto tagger = std::make_shared<tag::BaselineTagger>(tagger_method, train, k_neighbors, seed);
    const TagVocabulary* alphabet = &corpus.tag_alphabet;
    return [tagger, alphabet](const Exam& e) {
        return tag_relevance_score(tagger->assign(e).tags, *alphabet);
    };
}

RankedWorklist baseline_rank(BaselineMethod method, const Corpus& corpus,
                             std::span<const Exam* const> exams, std::size_t k_neighbors,
                             std::uint64_t seed) {
    const Scorer scorer = baseline_scorer(method, corpus, k_neighbors, seed);
    std::string name = "random";
    if (method == BaselineMethod::nn1) name = "nn1";
    if (method == BaselineMethod::knn) name = "knn";
    return rank_exams(scorer, exams, std::move(name));
}

}  // namespace triage::rank
