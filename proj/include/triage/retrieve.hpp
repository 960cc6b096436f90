#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/numerics.hpp"

namespace triage::retrieve {

// Canonical key for a tag set: sorted unique tags joined by a separator that
// cannot occur in JSON string content unescaped.
std::string tag_set_key(std::span<const std::string> tags);

// Row matrix of L2-normalized concatenated exam embeddings with parallel
// metadata; immutable once built.
struct EmbeddingIndex {
    Mat rows;  // n x (m*d), unit rows
    std::vector<std::string> ids;
    std::vector<std::vector<std::string>> tag_sets;
    std::vector<std::string> reports;
    std::map<std::string, std::vector<std::size_t>> tag_set_buckets;

    std::size_t size() const { return ids.size(); }
};

EmbeddingIndex build_index(std::span<const Exam* const> train_exams);

// Concatenated, L2-normalized exam embedding; throws on zero norm.
Vec normalized_query(const Exam& exam);

// index.rows * query; equals per-row cosine because both sides are unit norm.
// The query must already be normalized.
Vec similarities(const EmbeddingIndex& index, std::span<const double> unit_query);

// One row per query (queries x n), computed as a single matrix product.
Mat batch_similarities(const EmbeddingIndex& index, const Mat& unit_queries);

struct RetrievalResult {
    std::string exam_id;
    double similarity = 0.0;
    bool constrained = false;
    std::string report;
};

// Whole-index nearest neighbor; ties broken by ascending exam_id.
RetrievalResult retrieve_1nn(const EmbeddingIndex& index, const Exam& query_exam);

// Search restricted to the bucket whose gold tag set equals predicted_tags,
// falling back to the whole index when that bucket is empty.
RetrievalResult retrieve_1nn_plus(const EmbeddingIndex& index, const Exam& query_exam,
                                  std::span<const std::string> predicted_tags);

}  // namespace triage::retrieve
