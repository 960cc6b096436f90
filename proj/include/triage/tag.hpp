#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/numerics.hpp"
#include "triage/retrieve.hpp"

namespace triage::tag {

// Multi-label head: one sigmoid output per scored tag plus per-tag decision
// thresholds. `tags` may be a subset of the corpus alphabet (tags absent from
// the abnormal training split are dropped at training time).
struct TagHead {
    numerics::DenseStack stack;
    std::vector<std::string> tags;  // sorted
    Vec thresholds;                 // per tag, in (0, 1)
};

struct TagAssignment {
    std::string exam_id;
    std::vector<std::string> tags;                 // sorted unique
    std::map<std::string, double> probabilities;  // empty for baseline methods
};

// Trains on abnormal train exams only; thresholds start at 0.5 and are
// refined separately by learn_thresholds. Deterministic given the seed.
TagHead train_tag_head(const Corpus& corpus, const numerics::TrainConfig& cfg, std::uint64_t seed,
                       numerics::TrainLog* log = nullptr);

// Per-tag sigmoid probabilities for one exam, aligned with head.tags.
Vec tag_probabilities(const TagHead& head, const Exam& exam);

// Per-tag F1 grid search over {0.01, ..., 0.99} on the validation exams;
// ties pick the smallest threshold, tags absent from validation get 0.5.
// With global_threshold one shared value maximizing macro F1 is used.
Vec learn_thresholds(const TagHead& head, std::span<const Exam* const> validation,
                     bool global_threshold = false);

// tags = {a : p_a > tau_a}; empty predictions fall back to the argmax tag.
TagAssignment predict_tags(const TagHead& head, const Exam& exam);

enum class BaselineMethod { random, nn1, knn };
BaselineMethod baseline_from_name(std::string_view name);

// Tag-set baselines over a fixed training pool; nearest-neighbor methods use
// cosine over L2-normalized concatenated embeddings. Assignments depend only
// on (seed, exam_id), so prediction order does not matter.
class BaselineTagger {
public:
    BaselineTagger(BaselineMethod method, std::span<const Exam* const> train,
                   std::size_t k_neighbors, std::uint64_t seed);

    TagAssignment assign(const Exam& exam) const;

private:
    BaselineMethod method_;
    std::size_t k_neighbors_;
    std::uint64_t seed_;
    std::size_t random_count_ = 1;            // tags per random draw
    std::vector<std::string> tag_pool_;       // distinct training tags
    std::shared_ptr<retrieve::EmbeddingIndex> index_;
};

TagAssignment baseline_tags(BaselineMethod method, std::span<const Exam* const> train,
                            const Exam& exam, std::size_t k_neighbors, std::uint64_t seed);

// One assignment per worklist id, in order; unknown ids are an error.
std::vector<TagAssignment> tag_worklist(const std::function<TagAssignment(const Exam&)>& tagger,
                                        const Corpus& corpus,
                                        std::span<const std::string> top_ids);

}  // namespace triage::tag
