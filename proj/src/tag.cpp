#include "triage/tag.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <stdexcept>

namespace triage::tag {

namespace {

long long round_half_away(double x) {
    return static_cast<long long>(x >= 0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    const double denom = static_cast<double>(2 * tp + fp + fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(tp) / denom;
}

}  // namespace

BaselineMethod baseline_from_name(std::string_view name) {
    if (name == "random") return BaselineMethod::random;
    if (name == "nn1") return BaselineMethod::nn1;
    if (name == "knn") return BaselineMethod::knn;
    throw std::invalid_argument("unknown baseline method: " + std::string(name));
}

TagHead train_tag_head(const Corpus& corpus, const numerics::TrainConfig& cfg, std::uint64_t seed,
                       numerics::TrainLog* log) {
    const auto train = corpus.abnormal_exams(Split::train);
    if (train.empty())
        throw std::runtime_error("train_tag_head: no abnormal exams in the training split");

    std::set<std::string> present;
    for (const Exam* e : train) present.insert(e->tags.begin(), e->tags.end());
    std::vector<std::string> scored;
    for (const std::string& t : corpus.tag_alphabet.tags()) {
        if (present.count(t)) {
            scored.push_back(t);
        } else {
            std::cerr << "warning: tag '" << t
                      << "' has no abnormal training exam; dropped from the tagging head\n";
        }
    }
    if (scored.empty()) throw std::runtime_error("train_tag_head: no trainable tags");

    std::map<std::string, std::size_t> tag_pos;
    for (std::size_t i = 0; i < scored.size(); ++i) tag_pos[scored[i]] = i;

    const auto fill = [&](std::span<const Exam* const> exams, Mat& X, Mat& Y) {
        if (exams.empty()) return;
        const std::size_t width = corpus.dimension * corpus.images_per_exam;
        X = Mat(exams.size(), width);
        Y = Mat(exams.size(), scored.size());
        for (std::size_t i = 0; i < exams.size(); ++i) {
            const Vec emb = concat_embedding(*exams[i]);
            std::copy(emb.begin(), emb.end(), X.row(i));
            for (const std::string& t : exams[i]->tags) {
                const auto it = tag_pos.find(t);
                if (it != tag_pos.end()) Y(i, it->second) = 1.0;
            }
        }
    };

    Mat X_train, Y_train, X_val, Y_val;
    fill(train, X_train, Y_train);
    const auto val = corpus.abnormal_exams(Split::val);
    fill(val, X_val, Y_val);

    TagHead head;
    head.stack = numerics::train_dense_sigmoid(X_train, Y_train, X_val, Y_val, cfg, seed, log);
    head.tags = std::move(scored);
    head.thresholds.assign(head.tags.size(), 0.5);
    return head;
}

Vec tag_probabilities(const TagHead& head, const Exam& exam) {
    Vec logits = head.stack.forward(concat_embedding(exam));
    for (double& v : logits) v = numerics::sigmoid(v);
    return logits;
}

Vec learn_thresholds(const TagHead& head, std::span<const Exam* const> validation,
                     bool global_threshold) {
    const std::size_t n_tags = head.tags.size();
    Vec taus(n_tags, 0.5);
    if (validation.empty()) return taus;

    Mat probs(validation.size(), n_tags);
    Mat gold(validation.size(), n_tags);
    for (std::size_t i = 0; i < validation.size(); ++i) {
        const Vec p = tag_probabilities(head, *validation[i]);
        std::copy(p.begin(), p.end(), probs.row(i));
        for (std::size_t a = 0; a < n_tags; ++a)
            gold(i, a) = std::binary_search(validation[i]->tags.begin(),
                                            validation[i]->tags.end(), head.tags[a])
                             ? 1.0
                             : 0.0;
    }

    const auto tag_f1_at = [&](std::size_t a, double tau) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < validation.size(); ++i) {
            const bool pred = probs(i, a) > tau;
            const bool is_gold = gold(i, a) > 0.5;
            if (pred && is_gold) ++tp;
            else if (pred) ++fp;
            else if (is_gold) ++fn;
        }
        return f1_from_counts(tp, fp, fn);
    };

    if (global_threshold) {
        double best_tau = 0.01, best_score = -1.0;
        for (int g = 1; g <= 99; ++g) {
            const double tau = g / 100.0;
            double score = 0.0;
            for (std::size_t a = 0; a < n_tags; ++a) score += tag_f1_at(a, tau);
            if (score > best_score) {
                best_score = score;
                best_tau = tau;
            }
        }
        taus.assign(n_tags, best_tau);
        return taus;
    }

    for (std::size_t a = 0; a < n_tags; ++a) {
        bool seen = false;
        for (std::size_t i = 0; i < validation.size() && !seen; ++i) seen = gold(i, a) > 0.5;
        if (!seen) continue;  // keep the 0.5 default
        double best_tau = 0.01, best_score = -1.0;
        for (int g = 1; g <= 99; ++g) {
            const double tau = g / 100.0;
            const double score = tag_f1_at(a, tau);
            if (score > best_score) {
                best_score = score;
                best_tau = tau;
            }
        }
        taus[a] = best_tau;
    }
    return taus;
}

TagAssignment predict_tags(const TagHead& head, const Exam& exam) {
    const Vec p = tag_probabilities(head, exam);
    TagAssignment out;
    out.exam_id = exam.exam_id;
    std::size_t argmax = 0;
    for (std::size_t a = 0; a < p.size(); ++a) {
        out.probabilities[head.tags[a]] = p[a];
        if (p[a] > head.thresholds[a]) out.tags.push_back(head.tags[a]);
        if (p[a] > p[argmax]) argmax = a;
    }
    if (out.tags.empty() && !head.tags.empty()) out.tags.push_back(head.tags[argmax]);
    std::sort(out.tags.begin(), out.tags.end());
    return out;
}

BaselineTagger::BaselineTagger(BaselineMethod method, std::span<const Exam* const> train,
                               std::size_t k_neighbors, std::uint64_t seed)
    : method_(method), k_neighbors_(k_neighbors), seed_(seed) {
    if (train.empty()) throw std::invalid_argument("baseline tagger: empty training pool");
    if (method_ == BaselineMethod::knn && k_neighbors_ < 1)
        throw std::invalid_argument("baseline tagger: k_neighbors must be >= 1");
    if (method_ == BaselineMethod::random) {
        std::set<std::string> pool;
        double tag_total = 0.0;
        for (const Exam* e : train) {
            pool.insert(e->tags.begin(), e->tags.end());
            tag_total += static_cast<double>(e->tags.size());
        }
        tag_pool_.assign(pool.begin(), pool.end());
        random_count_ = static_cast<std::size_t>(
            std::max<long long>(1, round_half_away(tag_total / static_cast<double>(train.size()))));
    } else {
        index_ = std::make_shared<retrieve::EmbeddingIndex>(retrieve::build_index(train));
    }
}

TagAssignment BaselineTagger::assign(const Exam& exam) const {
    TagAssignment out;
    out.exam_id = exam.exam_id;

    if (method_ == BaselineMethod::random) {
        rng::Random rng(seed_ ^ rng::fnv1a64(exam.exam_id));
        const std::size_t take = std::min(random_count_, tag_pool_.size());
        for (std::size_t idx : rng.sample_indices(tag_pool_.size(), take))
            out.tags.push_back(tag_pool_[idx]);
        std::sort(out.tags.begin(), out.tags.end());
        return out;
    }

    const Vec q = retrieve::normalized_query(exam);
    const Vec sims = retrieve::similarities(*index_, q);
    std::vector<std::size_t> order(index_->size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return index_->ids[a] < index_->ids[b];
    });

    if (method_ == BaselineMethod::nn1) {
        out.tags = index_->tag_sets[order.front()];
        return out;
    }

    const std::size_t k = std::min(k_neighbors_, index_->size());
    std::map<std::string, std::size_t> freq;
    double tag_total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto& tags = index_->tag_sets[order[i]];
        tag_total += static_cast<double>(tags.size());
        for (const std::string& t : tags) ++freq[t];
    }
    const auto r = static_cast<std::size_t>(
        std::max<long long>(1, round_half_away(tag_total / static_cast<double>(k))));
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (std::size_t i = 0; i < ranked.size() && i < r; ++i) out.tags.push_back(ranked[i].first);
    std::sort(out.tags.begin(), out.tags.end());
    return out;
}

TagAssignment baseline_tags(BaselineMethod method, std::span<const Exam* const> train,
                            const Exam& exam, std::size_t k_neighbors, std::uint64_t seed) {
    return BaselineTagger(method, train, k_neighbors, seed).assign(exam);
}

std::vector<TagAssignment> tag_worklist(const std::function<TagAssignment(const Exam&)>& tagger,
                                        const Corpus& corpus,
                                        std::span<const std::string> top_ids) {
    std::vector<TagAssignment> out;
    out.reserve(top_ids.size());
    for (const std::string& id : top_ids) {
        const Exam* e = corpus.find(id);
        if (e == nullptr) throw std::runtime_error("tag_worklist: unknown exam_id " + id);
        out.push_back(tagger(*e));
    }
    return out;
}

}  // namespace triage::tag
