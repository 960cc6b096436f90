#include "triage/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "triage/rng.hpp"

namespace triage::metrics {

double ndcg_at_k(std::span<const int> ranked_relevance, std::size_t k) {
    if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
    const std::size_t cutoff = std::min(k, ranked_relevance.size());
    double dcg = 0.0;
    for (std::size_t i = 0; i < cutoff; ++i)
        dcg += static_cast<double>(ranked_relevance[i]) /
               std::log2(static_cast<double>(i) + 2.0);
    std::vector<int> ideal(ranked_relevance.begin(), ranked_relevance.end());
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < cutoff; ++i)
        idcg += static_cast<double>(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double precision_at_k(std::span<const int> ranked_relevance, std::size_t k) {
    if (k < 1) throw std::invalid_argument("precision_at_k: k must be >= 1");
    const std::size_t cutoff = std::min(k, ranked_relevance.size());
    if (cutoff == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < cutoff; ++i)
        if (ranked_relevance[i] != 0) ++hits;
    return static_cast<double>(hits) / static_cast<double>(cutoff);
}

double macro_f1(std::span<const std::vector<std::string>> gold,
                std::span<const std::vector<std::string>> pred) {
    if (gold.size() != pred.size()) throw std::invalid_argument("macro_f1: length mismatch");
    if (gold.empty()) throw std::invalid_argument("macro_f1: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        std::vector<std::string> g = gold[i], p = pred[i];
        std::sort(g.begin(), g.end());
        g.erase(std::unique(g.begin(), g.end()), g.end());
        std::sort(p.begin(), p.end());
        p.erase(std::unique(p.begin(), p.end()), p.end());
        std::vector<std::string> inter;
        std::set_intersection(g.begin(), g.end(), p.begin(), p.end(), std::back_inserter(inter));
        if (g.empty() || p.empty() || inter.empty()) continue;  // F1 contribution 0
        const double precision = static_cast<double>(inter.size()) / static_cast<double>(p.size());
        const double recall = static_cast<double>(inter.size()) / static_cast<double>(g.size());
        total += 2.0 * precision * recall / (precision + recall);
    }
    return total / static_cast<double>(gold.size());
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(std::span<const std::string> tokens, int order) {
    std::map<Ngram, std::size_t> counts;
    if (tokens.size() < static_cast<std::size_t>(order)) return counts;
    for (std::size_t i = 0; i + order <= tokens.size(); ++i)
        ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + order)];
    return counts;
}

}  // namespace

double bleu(std::span<const std::vector<std::string>> candidates,
            std::span<const std::vector<std::string>> references, BleuOptions options) {
    if (candidates.empty()) throw std::invalid_argument("bleu: empty candidate corpus");
    if (candidates.size() != references.size())
        throw std::invalid_argument("bleu: need exactly one reference per candidate");
    const int order = options.max_order;

    std::vector<std::size_t> match(order, 0), total(order, 0);
    std::size_t cand_len = 0, ref_len = 0, min_cand_len = SIZE_MAX;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_len += candidates[i].size();
        ref_len += references[i].size();
        min_cand_len = std::min(min_cand_len, candidates[i].size());
        for (int n = 1; n <= order; ++n) {
            const auto cand_counts = ngram_counts(candidates[i], n);
            const auto ref_counts = ngram_counts(references[i], n);
            for (const auto& [gram, count] : cand_counts) {
                const auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) match[n - 1] += std::min(count, it->second);
                total[n - 1] += count;
            }
        }
    }
    if (cand_len == 0) return 0.0;

    double log_precision = 0.0;
    for (int n = 0; n < order; ++n) {
        double m = static_cast<double>(match[n]);
        double t = static_cast<double>(total[n]);
        if (options.smooth_add_one && match[n] == 0 &&
            min_cand_len < static_cast<std::size_t>(order)) {
            m += 1.0;
            t += 1.0;
        }
        if (m == 0.0 || t == 0.0) return 0.0;
        log_precision += std::log(m / t);
    }
    const double geo_mean = std::exp(log_precision / static_cast<double>(order));
    const double bp =
        cand_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
    return 100.0 * bp * geo_mean;
}

double rouge_l_pair(std::span<const std::string> candidate,
                    std::span<const std::string> reference, double beta) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const std::size_t n = candidate.size(), m = reference.size();
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            if (candidate[i - 1] == reference[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[m]);
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(n);
    const double r = lcs / static_cast<double>(m);
    const double b2 = beta * beta;
    return (1.0 + b2) * p * r / (r + b2 * p);
}

double rouge_l(std::span<const std::vector<std::string>> candidates,
               std::span<const std::vector<std::string>> references, double beta) {
    if (candidates.size() != references.size())
        throw std::invalid_argument("rouge_l: length mismatch");
    if (candidates.empty()) throw std::invalid_argument("rouge_l: empty corpus");
    double total = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        total += rouge_l_pair(candidates[i], references[i], beta);
    return total / static_cast<double>(candidates.size());
}

ClinicalPR clinical_pr(std::span<const std::string> gold_texts,
                       std::span<const std::string> system_texts,
                       const labeler::LabelLexicon& lexicon) {
    if (gold_texts.size() != system_texts.size())
        throw std::invalid_argument("clinical_pr: length mismatch");
    if (gold_texts.empty()) throw std::invalid_argument("clinical_pr: empty input");
    double cp = 0.0, cr = 0.0;
    for (std::size_t i = 0; i < gold_texts.size(); ++i) {
        const auto gold = labeler::extract_labels(gold_texts[i], lexicon);
        const auto sys = labeler::extract_labels(system_texts[i], lexicon);
        std::size_t shared = 0;
        for (const std::string& label : sys)
            if (gold.count(label)) ++shared;
        if (!sys.empty()) cp += static_cast<double>(shared) / static_cast<double>(sys.size());
        if (!gold.empty()) cr += static_cast<double>(shared) / static_cast<double>(gold.size());
    }
    const double n = static_cast<double>(gold_texts.size());
    return {cp / n, cr / n};
}

double BootstrapCurve::mean_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return mean[i];
    throw std::out_of_range("bootstrap curve: k outside the evaluated range");
}

double BootstrapCurve::stderr_at(std::size_t k) const {
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (ks[i] == k) return stderr_[i];
    throw std::out_of_range("bootstrap curve: k outside the evaluated range");
}

BootstrapCurve bootstrap_curve(std::span<const ScoredItem> population, RankMetric metric,
                               std::size_t samples, std::size_t sample_size, std::size_t k_min,
                               std::size_t k_max, int window, std::uint64_t seed) {
    if (population.size() < sample_size)
        throw std::invalid_argument("bootstrap_curve: population smaller than sample_size");
    if (k_min < 1 || k_max < k_min) throw std::invalid_argument("bootstrap_curve: bad k range");

    BootstrapCurve curve;
    curve.samples = samples;
    curve.sample_size = sample_size;
    curve.window = window;
    for (std::size_t k = k_min; k <= k_max; ++k) curve.ks.push_back(k);
    const std::size_t n_k = curve.ks.size();

    std::vector<double> sum(n_k, 0.0), sum_sq(n_k, 0.0);
    std::vector<const ScoredItem*> sample(sample_size);
    std::vector<int> rel(sample_size);
    for (std::size_t draw = 0; draw < samples; ++draw) {
        rng::Random rng(seed + draw);
        for (std::size_t i = 0; i < sample_size; ++i)
            sample[i] = &population[rng.uniform_index(population.size())];
        std::sort(sample.begin(), sample.end(), [](const ScoredItem* a, const ScoredItem* b) {
            if (a->score != b->score) return a->score > b->score;
            return a->id < b->id;
        });
        for (std::size_t i = 0; i < sample_size; ++i) rel[i] = sample[i]->relevant;
        for (std::size_t i = 0; i < n_k; ++i) {
            const double v = metric == RankMetric::ndcg ? ndcg_at_k(rel, curve.ks[i])
                                                        : precision_at_k(rel, curve.ks[i]);
            sum[i] += v;
            sum_sq[i] += v * v;
        }
    }

    curve.mean.resize(n_k);
    curve.stderr_.resize(n_k);
    const double n_draws = static_cast<double>(samples);
    for (std::size_t i = 0; i < n_k; ++i) {
        curve.mean[i] = sum[i] / n_draws;
        // Bootstrap standard error: sd of the replicate values.
        const double var = std::max(0.0, sum_sq[i] / n_draws - curve.mean[i] * curve.mean[i]);
        curve.stderr_[i] = std::sqrt(var);
    }

    curve.smoothed.resize(n_k);
    const int half = window / 2;
    for (std::size_t i = 0; i < n_k; ++i) {
        const std::size_t lo = i >= static_cast<std::size_t>(half) ? i - half : 0;
        const std::size_t hi = std::min(n_k - 1, i + static_cast<std::size_t>(half));
        double acc = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) acc += curve.mean[j];
        curve.smoothed[i] = acc / static_cast<double>(hi - lo + 1);
    }
    return curve;
}

nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["metric"] = report.metric;
    j["value"] = report.value;
    if (!report.per_k.empty()) {
        nlohmann::json per_k = nlohmann::json::object();
        for (const auto& [k, v] : report.per_k) per_k[std::to_string(k)] = v;
        j["per_k"] = per_k;
    }
    if (report.bootstrap) {
        const BootstrapCurve& c = *report.bootstrap;
        nlohmann::json b;
        b["samples"] = c.samples;
        b["sample_size"] = c.sample_size;
        b["window"] = c.window;
        b["ks"] = c.ks;
        b["mean"] = c.mean;
        b["stderr"] = c.stderr_;
        b["smoothed"] = c.smoothed;
        j["bootstrap"] = b;
    }
    return j;
}

}  // namespace triage::metrics
