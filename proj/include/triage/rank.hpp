#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/numerics.hpp"
#include "triage/tag.hpp"

namespace triage::rank {

struct WorklistEntry {
    std::string exam_id;
    double score = 0.0;
};

// Entries sorted by descending score, ties by ascending exam_id.
struct RankedWorklist {
    std::vector<WorklistEntry> entries;
    std::string method;
};

// Feed-forward scoring head over the concatenated exam embedding, one logit.
struct BinaryHead {
    numerics::DenseStack stack;
};

using Scorer = std::function<double(const Exam&)>;

// Trains on the train split (both classes required), monitoring validation
// loss; returns the epoch snapshot with the best validation loss.
BinaryHead train_binary_head(const Corpus& corpus, const numerics::TrainConfig& cfg,
                             std::uint64_t seed, numerics::TrainLog* log = nullptr);

// sigmoid(stack(concat_embedding(exam))), in (0, 1).
double score_exam(const BinaryHead& head, const Exam& exam);

Scorer head_scorer(const BinaryHead& head);

RankedWorklist rank_exams(const Scorer& scorer, std::span<const Exam* const> exams,
                          std::string method);

// First min(k, n) exam ids of the worklist.
std::vector<std::string> top_k(const RankedWorklist& worklist, std::size_t k);

// |T intersect G| / |G| over the gold tag alphabet; T is deduplicated.
double tag_relevance_score(std::span<const std::string> predicted_tags, const TagVocabulary& gold_alphabet);

enum class BaselineMethod { random, nn1, knn };
BaselineMethod baseline_from_name(std::string_view name);

// Random scores, or tag-derived scores (baseline taggers trained on the full
// train split, scored by tag_relevance_score over the corpus alphabet).
RankedWorklist baseline_rank(BaselineMethod method, const Corpus& corpus,
                             std::span<const Exam* const> exams, std::size_t k_neighbors,
                             std::uint64_t seed);

Scorer baseline_scorer(BaselineMethod method, const Corpus& corpus, std::size_t k_neighbors,
                       std::uint64_t seed);

}  // namespace triage::rank
