#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "triage/corpus.hpp"
#include "triage/numerics.hpp"

namespace triage::decode {

// Tokenize on alphanumeric runs, lowercase, drop pure digits and
// single-character tokens; punctuation disappears with the split.
std::vector<std::string> preprocess(std::string_view text);

struct TextVocab {
    static constexpr std::size_t kStart = 0;
    static constexpr std::size_t kEnd = 1;
    static constexpr std::size_t kUnk = 2;
    static constexpr std::size_t kPad = 3;

    std::vector<std::string> tokens;  // reserved tokens first, rest sorted
    std::map<std::string, std::size_t, std::less<>> index;
    std::size_t max_caption_length = 60;

    // Report tokens with frequency >= min_freq plus the (underscore-joined)
    // tags of the training exams.
    static TextVocab build(std::span<const Exam* const> train_exams, std::size_t min_freq = 2,
                           std::size_t max_caption_length = 60);

    std::size_t size() const { return tokens.size(); }
    std::size_t lookup(std::string_view token) const;          // kUnk when missing
    std::size_t tag_token(std::string_view tag) const;         // underscore-joined lookup
    std::vector<std::size_t> encode(std::span<const std::string> toks) const;
};

enum class Mode { snt, tags_prefix, tags_gates };
std::string_view mode_name(Mode mode);
Mode mode_from_name(std::string_view name);

// LSTM gate parameters act on [x_s, V_j?, E_j?, h_{s-1}]; the V_j and E_j
// blocks have zero width except in tags_gates mode. snt and tags_prefix run
// h_0 = tanh(W_init V_j + b_init), c_0 = 0 instead.
struct ConditionedDecoderParams {
    Mode mode = Mode::snt;
    std::size_t embed_dim = 0, hidden_dim = 0, visual_dim = 0;
    TextVocab vocab;

    Mat w_embed;                 // |V| x embed
    Mat w_i, w_f, w_o, w_q;      // hidden x gate_input_width
    Vec b_i, b_f, b_o, b_q;      // hidden
    Mat w_out;                   // |V| x hidden
    Vec b_out;                   // |V|
    Mat w_init;                  // hidden x visual (visual-init modes only)
    Vec b_init;

    bool visual_in_gates() const { return mode == Mode::tags_gates; }
    bool uses_tag_centroid() const { return mode == Mode::tags_gates; }
    bool visual_init() const { return mode != Mode::tags_gates; }
    std::size_t gate_input_width() const;

    static ConditionedDecoderParams make(Mode mode, TextVocab vocab, std::size_t embed_dim,
                                         std::size_t hidden_dim, std::size_t visual_dim,
                                         rng::Random& rng);

    std::vector<numerics::ParamView> param_views();
    std::vector<numerics::ConstParamView> const_param_views() const;
};

// Gradient buffers with the same shapes as the parameter blocks.
ConditionedDecoderParams zero_like(const ConditionedDecoderParams& p);

struct DecoderState {
    Vec h, c;
    std::size_t step = 0;
};

struct StepResult {
    DecoderState state;
    Vec logits;  // over the vocabulary
};

// One gate recurrence step. visual/tag_centroid must be empty exactly when
// the mode omits them.
StepResult lstm_step(const ConditionedDecoderParams& p, const DecoderState& state,
                     std::span<const double> x, std::span<const double> visual,
                     std::span<const double> tag_centroid);

// Arithmetic mean of the tag token embeddings (unknown tags use <unk>).
Vec tag_centroid(const Mat& w_embed, std::span<const std::string> tags, const TextVocab& vocab);

// One teacher-forced training sequence: inputs feed the LSTM, targets score
// the logits (inputs are targets shifted right behind <start> and, in
// tags_prefix mode, behind the tag tokens).
struct SequenceExample {
    std::vector<std::size_t> inputs;
    std::vector<std::size_t> targets;
    Vec visual;                           // concat embedding (raw)
    std::vector<std::size_t> tag_tokens;  // used by tags_gates for E_j
};

SequenceExample make_example(const ConditionedDecoderParams& p, const Exam& exam);

// Mean next-token cross-entropy over all target positions of all examples;
// accumulates parameter gradients into *grads when non-null.
double teacher_forcing_loss(const ConditionedDecoderParams& p,
                            std::span<const SequenceExample> batch,
                            ConditionedDecoderParams* grads);

struct DecoderTrainConfig {
    numerics::TrainConfig train;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 128;
    std::size_t max_caption_length = 60;
    std::size_t min_token_freq = 2;
    bool abnormal_only = true;  // train on abnormal exams only
};

ConditionedDecoderParams train_decoder(const Corpus& corpus, Mode mode,
                                       const DecoderTrainConfig& cfg, std::uint64_t seed,
                                       numerics::TrainLog* log = nullptr);

// Argmax decoding until <end> or max_caption_length tokens; the forced
// prefix (<start> and, in tags_prefix mode, the tag tokens) is not emitted.
std::vector<std::string> greedy_decode(const ConditionedDecoderParams& p, const Exam& exam,
                                       std::span<const std::string> tags);

}  // namespace triage::decode
