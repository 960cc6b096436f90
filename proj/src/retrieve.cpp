#include "triage/retrieve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "triage/kernels.hpp"

namespace triage::retrieve {

std::string tag_set_key(std::span<const std::string> tags) {
    std::vector<std::string> sorted(tags.begin(), tags.end());
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::string key;
    for (const std::string& t : sorted) {
        if (!key.empty()) key += '\x1f';
        key += t;
    }
    return key;
}

EmbeddingIndex build_index(std::span<const Exam* const> train_exams) {
    if (train_exams.empty()) throw std::invalid_argument("build_index: no exams");
    const std::size_t width = concat_embedding(*train_exams.front()).size();

    EmbeddingIndex index;
    index.rows = Mat(train_exams.size(), width);
    index.ids.reserve(train_exams.size());
    for (std::size_t i = 0; i < train_exams.size(); ++i) {
        const Exam& e = *train_exams[i];
        Vec emb = concat_embedding(e);
        if (emb.size() != width)
            throw std::invalid_argument("build_index: exam " + e.exam_id +
                                        " has mismatched dimension");
        const double norm = std::sqrt(kernels::sum_squares(emb.data(), emb.size()));
        if (norm == 0.0)
            throw std::invalid_argument("build_index: zero-norm embedding for exam " + e.exam_id);
        for (std::size_t c = 0; c < width; ++c) index.rows(i, c) = emb[c] / norm;
        index.ids.push_back(e.exam_id);
        index.tag_sets.push_back(e.tags);
        index.reports.push_back(e.report);
        index.tag_set_buckets[tag_set_key(e.tags)].push_back(i);
    }
    return index;
}

Vec normalized_query(const Exam& exam) {
    Vec emb = concat_embedding(exam);
    const double norm = std::sqrt(kernels::sum_squares(emb.data(), emb.size()));
    if (norm == 0.0)
        throw std::invalid_argument("zero-norm query embedding for exam " + exam.exam_id);
    for (double& v : emb) v /= norm;
    return emb;
}

Vec similarities(const EmbeddingIndex& index, std::span<const double> unit_query) {
    if (unit_query.size() != index.rows.cols)
        throw std::invalid_argument("similarities: query dimension " +
                                    std::to_string(unit_query.size()) + " != index dimension " +
                                    std::to_string(index.rows.cols));
    const double norm = std::sqrt(kernels::sum_squares(unit_query.data(), unit_query.size()));
    if (std::abs(norm - 1.0) > 1e-6)
        throw std::invalid_argument("similarities: query is not L2-normalized");
    Vec sims(index.size());
    kernels::matvec(index.rows.data.data(), index.rows.rows, index.rows.cols, unit_query.data(),
                    sims.data());
    return sims;
}

Mat batch_similarities(const EmbeddingIndex& index, const Mat& unit_queries) {
    if (unit_queries.cols != index.rows.cols)
        throw std::invalid_argument("batch_similarities: dimension mismatch");
    Mat out(unit_queries.rows, index.size());
    kernels::matmul_nt(unit_queries.data.data(), unit_queries.rows, index.rows.data.data(),
                       index.rows.rows, index.rows.cols, out.data.data());
    return out;
}

namespace {

// Best row among `candidates`; similarity descending, exam_id ascending.
RetrievalResult pick_best(const EmbeddingIndex& index, const Vec& sims,
                          std::span<const std::size_t> candidates, bool constrained) {
    std::size_t best = candidates.front();
    for (std::size_t idx : candidates.subspan(1)) {
        if (sims[idx] > sims[best] ||
            (sims[idx] == sims[best] && index.ids[idx] < index.ids[best]))
            best = idx;
    }
    return RetrievalResult{index.ids[best], sims[best], constrained, index.reports[best]};
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace

RetrievalResult retrieve_1nn(const EmbeddingIndex& index, const Exam& query_exam) {
    const Vec q = normalized_query(query_exam);
    const Vec sims = similarities(index, q);
    const auto rows = all_rows(index.size());
    return pick_best(index, sims, rows, false);
}

RetrievalResult retrieve_1nn_plus(const EmbeddingIndex& index, const Exam& query_exam,
                                  std::span<const std::string> predicted_tags) {
    const Vec q = normalized_query(query_exam);
    const Vec sims = similarities(index, q);
    const auto bucket = index.tag_set_buckets.find(tag_set_key(predicted_tags));
    if (bucket != index.tag_set_buckets.end() && !bucket->second.empty())
        return pick_best(index, sims, bucket->second, true);
    const auto rows = all_rows(index.size());
    return pick_best(index, sims, rows, false);
}

}  // namespace triage::retrieve
