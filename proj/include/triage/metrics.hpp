#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/labeler.hpp"

namespace triage::metrics {

// Binary-gain nDCG with log2(i+1) discounting; 0 when IDCG is 0.
double ndcg_at_k(std::span<const int> ranked_relevance, std::size_t k);

// Relevant fraction of the first min(k, n) entries.
double precision_at_k(std::span<const int> ranked_relevance, std::size_t k);

// Mean per-exam F1 between gold and predicted tag sets.
double macro_f1(std::span<const std::vector<std::string>> gold,
                std::span<const std::vector<std::string>> pred);

struct BleuOptions {
    int max_order = 4;
    // Add-one smoothing of zero-match precisions when a candidate is shorter
    // than max_order tokens; off by default (plain corpus BLEU).
    bool smooth_add_one = false;
};

// Corpus-level BLEU in [0, 100], one reference per candidate.
double bleu(std::span<const std::vector<std::string>> candidates,
            std::span<const std::vector<std::string>> references, BleuOptions options = {});

// LCS-based ROUGE-L F-measure for one pair (beta weights recall).
double rouge_l_pair(std::span<const std::string> candidate,
                    std::span<const std::string> reference, double beta = 1.0);

// Mean pairwise ROUGE-L F over a corpus.
double rouge_l(std::span<const std::vector<std::string>> candidates,
               std::span<const std::vector<std::string>> references, double beta = 1.0);

struct ClinicalPR {
    double precision = 0.0;
    double recall = 0.0;
};

// Label-overlap precision/recall between gold and system texts.
ClinicalPR clinical_pr(std::span<const std::string> gold_texts,
                       std::span<const std::string> system_texts,
                       const labeler::LabelLexicon& lexicon);

struct ScoredItem {
    std::string id;
    double score = 0.0;
    int relevant = 0;
};

enum class RankMetric { ndcg, precision };

struct BootstrapCurve {
    std::vector<std::size_t> ks;
    std::vector<double> mean;     // per k, averaged over draws
    std::vector<double> stderr_;  // per k, sd(draws)/sqrt(samples)
    std::vector<double> smoothed; // centered moving average over `mean`
    std::size_t samples = 0;
    std::size_t sample_size = 0;
    int window = 5;

    double mean_at(std::size_t k) const;
    double stderr_at(std::size_t k) const;
};

// Draws `samples` with-replacement samples of `sample_size`, re-ranks each by
// (score desc, id asc), evaluates the metric over [k_min, k_max] and smooths
// the per-k means with a centered moving average truncated at the edges.
// Draw i uses seed + i, so parallel and serial evaluation agree.
BootstrapCurve bootstrap_curve(std::span<const ScoredItem> population, RankMetric metric,
                               std::size_t samples, std::size_t sample_size, std::size_t k_min,
                               std::size_t k_max, int window, std::uint64_t seed);

struct MetricReport {
    std::string metric;
    double value = 0.0;
    std::map<std::size_t, double> per_k;
    std::optional<BootstrapCurve> bootstrap;
};

nlohmann::json report_to_json(const MetricReport& report);

}  // namespace triage::metrics
