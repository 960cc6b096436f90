#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/corpus.hpp"
#include "triage/metrics.hpp"
#include "triage/rank.hpp"
#include "triage/tag.hpp"

namespace triage::pipeline {

struct StageConfig {
    std::string method;
    std::string checkpoint;       // required by head/decoder methods
    std::size_t k_neighbors = 5;  // knn baselines
};

struct PipelineConfig {
    std::string data;
    std::string split = "test";  // train | val | test | all
    std::size_t k = 20;
    std::uint64_t seed = 0;
    std::optional<double> min_score;  // optional gate on worklist entry scores
    StageConfig ranker{"head", "", 5};
    StageConfig tagger{"head", "", 5};
    StageConfig captioner{"retrieve_1nn_plus", "", 5};
    std::string out_worklist = "worklist.jsonl";
    std::string out_tags = "tags.jsonl";
    std::string out_captions = "captions.jsonl";
};

PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::string& path);

struct WorklistRow {
    std::string exam_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based
};

struct CaptionRow {
    std::string exam_id;
    std::string caption;
    // Retrieval provenance; absent for generative captioners.
    std::optional<std::string> source_exam;
    std::optional<double> similarity;
    std::optional<bool> constrained;
};

void write_worklist(const rank::RankedWorklist& worklist, const std::string& path);
std::vector<WorklistRow> read_worklist(const std::string& path);
void write_tag_assignments(const std::vector<tag::TagAssignment>& assignments,
                           const std::string& path);
std::vector<tag::TagAssignment> read_tag_assignments(const std::string& path);
void write_captions(const std::vector<CaptionRow>& rows, const std::string& path);
std::vector<CaptionRow> read_captions(const std::string& path);

// Rank -> tag -> caption over the configured split; writes the three output
// files. Failures remove any partially written outputs before rethrowing.
void run_pipeline(const PipelineConfig& config);

struct EvalConfig {
    std::string data;
    std::string worklist;
    std::string tags;      // empty = skip tagging metrics
    std::string captions;  // empty = skip caption metrics
    std::string out;       // empty = do not write a report file
    std::string lexicon;   // empty = built-in default
    std::size_t f1_top_k = 100;
    std::size_t bootstrap_samples = 1000;
    std::size_t bootstrap_sample_size = 100;
    std::size_t k_min = 10, k_max = 80;
    int window = 5;
    std::uint64_t seed = 0;
    double rouge_beta = 1.0;
    bool bleu_smooth = false;
};

std::vector<metrics::MetricReport> evaluate(const EvalConfig& config);

struct BenchConfig {
    std::string data;
    std::string ranker_checkpoint;
    std::string tagger_checkpoint;
    std::size_t n_rank = 500;
    std::size_t n_caption = 100;
    std::string out;  // empty = print only
};

struct BenchResult {
    double rank_seconds = 0.0;
    double tag_caption_seconds = 0.0;
    std::size_t n_rank = 0, n_caption = 0;
    std::string note;
};

BenchResult run_bench(const BenchConfig& config);

}  // namespace triage::pipeline
