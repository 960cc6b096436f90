#include "triage/decode.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "triage/kernels.hpp"

namespace triage::decode {

namespace {

bool ascii_alnum(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool all_digits(const std::string& s) {
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

std::string underscore_join(std::string_view tag) {
    std::string out;
    bool pending_sep = false;
    for (char c : tag) {
        if (ascii_alnum(c)) {
            if (pending_sep && !out.empty()) out += '_';
            pending_sep = false;
            out += ascii_lower(c);
        } else {
            pending_sep = true;
        }
    }
    return out;
}

}  // namespace

std::vector<std::string> preprocess(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    const auto flush = [&] {
        if (cur.size() > 1 && !all_digits(cur)) tokens.push_back(cur);
        cur.clear();
    };
    for (char c : text) {
        if (ascii_alnum(c))
            cur += ascii_lower(c);
        else
            flush();
    }
    flush();
    return tokens;
}

TextVocab TextVocab::build(std::span<const Exam* const> train_exams, std::size_t min_freq,
                           std::size_t max_caption_length) {
    std::map<std::string, std::size_t> freq;
    std::map<std::string, bool> tag_tokens;
    for (const Exam* e : train_exams) {
        for (const std::string& t : preprocess(e->report)) ++freq[t];
        for (const std::string& tag : e->tags) {
            const std::string tok = underscore_join(tag);
            if (!tok.empty()) tag_tokens[tok] = true;
        }
    }
    TextVocab v;
    v.max_caption_length = max_caption_length;
    v.tokens = {"<start>", "<end>", "<unk>", "<pad>"};
    std::vector<std::string> body;
    for (const auto& [tok, count] : freq)
        if (count >= min_freq) body.push_back(tok);
    for (const auto& [tok, unused] : tag_tokens) {
        (void)unused;
        if (freq.find(tok) == freq.end() || freq[tok] < min_freq) body.push_back(tok);
    }
    std::sort(body.begin(), body.end());
    body.erase(std::unique(body.begin(), body.end()), body.end());
    v.tokens.insert(v.tokens.end(), body.begin(), body.end());
    for (std::size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = i;
    return v;
}

std::size_t TextVocab::lookup(std::string_view token) const {
    const auto it = index.find(token);
    return it == index.end() ? kUnk : it->second;
}

std::size_t TextVocab::tag_token(std::string_view tag) const {
    return lookup(underscore_join(tag));
}

std::vector<std::size_t> TextVocab::encode(std::span<const std::string> toks) const {
    std::vector<std::size_t> ids;
    ids.reserve(toks.size());
    for (const std::string& t : toks) ids.push_back(lookup(t));
    return ids;
}

std::string_view mode_name(Mode mode) {
    switch (mode) {
        case Mode::snt: return "snt";
        case Mode::tags_prefix: return "tags_prefix";
        case Mode::tags_gates: return "tags_gates";
    }
    return "unknown";
}

Mode mode_from_name(std::string_view name) {
    if (name == "snt") return Mode::snt;
    if (name == "tags_prefix") return Mode::tags_prefix;
    if (name == "tags_gates") return Mode::tags_gates;
    throw std::invalid_argument("unknown decoder mode: " + std::string(name));
}

std::size_t ConditionedDecoderParams::gate_input_width() const {
    return embed_dim + (visual_in_gates() ? visual_dim : 0) +
           (uses_tag_centroid() ? embed_dim : 0) + hidden_dim;
}

ConditionedDecoderParams ConditionedDecoderParams::make(Mode mode, TextVocab vocab,
                                                        std::size_t embed_dim,
                                                        std::size_t hidden_dim,
                                                        std::size_t visual_dim,
                                                        rng::Random& rng) {
    ConditionedDecoderParams p;
    p.mode = mode;
    p.embed_dim = embed_dim;
    p.hidden_dim = hidden_dim;
    p.visual_dim = visual_dim;
    p.vocab = std::move(vocab);

    const auto init_mat = [&rng](Mat& m, std::size_t rows, std::size_t cols) {
        m = Mat(rows, cols);
        const double scale = std::sqrt(6.0 / static_cast<double>(rows + cols));
        for (double& w : m.data) w = rng.uniform(-scale, scale);
    };
    const std::size_t V = p.vocab.size();
    const std::size_t G = p.gate_input_width();
    init_mat(p.w_embed, V, embed_dim);
    init_mat(p.w_i, hidden_dim, G);
    init_mat(p.w_f, hidden_dim, G);
    init_mat(p.w_o, hidden_dim, G);
    init_mat(p.w_q, hidden_dim, G);
    p.b_i.assign(hidden_dim, 0.0);
    p.b_f.assign(hidden_dim, 1.0);  // start with an open forget gate
    p.b_o.assign(hidden_dim, 0.0);
    p.b_q.assign(hidden_dim, 0.0);
    init_mat(p.w_out, V, hidden_dim);
    p.b_out.assign(V, 0.0);
    if (p.visual_init()) {
        init_mat(p.w_init, hidden_dim, visual_dim);
        p.b_init.assign(hidden_dim, 0.0);
    }
    return p;
}

std::vector<numerics::ParamView> ConditionedDecoderParams::param_views() {
    std::vector<numerics::ParamView> v;
    const auto add_mat = [&v](const char* name, Mat& m) {
        v.push_back({name, m.data.data(), m.data.size()});
    };
    const auto add_vec = [&v](const char* name, Vec& b) {
        v.push_back({name, b.data(), b.size()});
    };
    add_mat("w_embed", w_embed);
    add_mat("w_i", w_i);
    add_vec("b_i", b_i);
    add_mat("w_f", w_f);
    add_vec("b_f", b_f);
    add_mat("w_o", w_o);
    add_vec("b_o", b_o);
    add_mat("w_q", w_q);
    add_vec("b_q", b_q);
    add_mat("w_out", w_out);
    add_vec("b_out", b_out);
    if (visual_init()) {
        add_mat("w_init", w_init);
        add_vec("b_init", b_init);
    }
    return v;
}

std::vector<numerics::ConstParamView> ConditionedDecoderParams::const_param_views() const {
    auto views = const_cast<ConditionedDecoderParams*>(this)->param_views();
    std::vector<numerics::ConstParamView> out(views.begin(), views.end());
    return out;
}

ConditionedDecoderParams zero_like(const ConditionedDecoderParams& p) {
    ConditionedDecoderParams z = p;
    for (Mat* m : {&z.w_embed, &z.w_i, &z.w_f, &z.w_o, &z.w_q, &z.w_out, &z.w_init})
        std::fill(m->data.begin(), m->data.end(), 0.0);
    for (Vec* b : {&z.b_i, &z.b_f, &z.b_o, &z.b_q, &z.b_out, &z.b_init})
        std::fill(b->begin(), b->end(), 0.0);
    return z;
}

namespace {

struct StepWork {
    Vec g;  // gate input [x, V?, E?, h_prev]
    Vec i, f, o, q, c, tanh_c, h;
};

// Shared gate recurrence; fills `work` from the gate input already in work.g.
void step_core(const ConditionedDecoderParams& p, const Vec& c_prev, StepWork& work) {
    const std::size_t H = p.hidden_dim;
    const auto gate = [&](const Mat& w, const Vec& b, Vec& out) {
        out.assign(b.begin(), b.end());
        for (std::size_t r = 0; r < H; ++r)
            out[r] += kernels::dot(w.row(r), work.g.data(), w.cols);
    };
    gate(p.w_i, p.b_i, work.i);
    gate(p.w_f, p.b_f, work.f);
    gate(p.w_o, p.b_o, work.o);
    gate(p.w_q, p.b_q, work.q);
    for (std::size_t r = 0; r < H; ++r) {
        work.i[r] = numerics::sigmoid(work.i[r]);
        work.f[r] = numerics::sigmoid(work.f[r]);
        work.o[r] = numerics::sigmoid(work.o[r]);
        work.q[r] = std::tanh(work.q[r]);
    }
    work.c.resize(H);
    work.tanh_c.resize(H);
    work.h.resize(H);
    for (std::size_t r = 0; r < H; ++r) {
        work.c[r] = work.f[r] * c_prev[r] + work.i[r] * work.q[r];
        work.tanh_c[r] = std::tanh(work.c[r]);
        work.h[r] = work.o[r] * work.tanh_c[r];
    }
}

Vec build_gate_input(const ConditionedDecoderParams& p, std::span<const double> x,
                     std::span<const double> visual, std::span<const double> centroid,
                     const Vec& h_prev) {
    if (x.size() != p.embed_dim) throw std::invalid_argument("lstm step: bad word embedding size");
    const bool want_visual = p.visual_in_gates();
    const bool want_centroid = p.uses_tag_centroid();
    if (want_visual != !visual.empty())
        throw std::invalid_argument("lstm step: visual input does not match the decoder mode");
    if (want_centroid != !centroid.empty())
        throw std::invalid_argument("lstm step: tag centroid does not match the decoder mode");
    if (want_visual && visual.size() != p.visual_dim)
        throw std::invalid_argument("lstm step: bad visual embedding size");
    if (want_centroid && centroid.size() != p.embed_dim)
        throw std::invalid_argument("lstm step: bad tag centroid size");

    Vec g;
    g.reserve(p.gate_input_width());
    g.insert(g.end(), x.begin(), x.end());
    g.insert(g.end(), visual.begin(), visual.end());
    g.insert(g.end(), centroid.begin(), centroid.end());
    g.insert(g.end(), h_prev.begin(), h_prev.end());
    return g;
}

Vec initial_hidden(const ConditionedDecoderParams& p, const Vec& visual) {
    Vec h(p.hidden_dim, 0.0);
    if (!p.visual_init()) return h;
    if (visual.size() != p.visual_dim)
        throw std::invalid_argument("decoder: visual embedding has wrong dimension");
    for (std::size_t r = 0; r < p.hidden_dim; ++r)
        h[r] = std::tanh(p.b_init[r] +
                         kernels::dot(p.w_init.row(r), visual.data(), p.visual_dim));
    return h;
}

// Softmax with the max subtracted; returns probabilities.
Vec softmax(const Vec& logits) {
    Vec p(logits.size());
    double mx = logits.front();
    for (double v : logits) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::size_t argmax(const Vec& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

}  // namespace

StepResult lstm_step(const ConditionedDecoderParams& p, const DecoderState& state,
                     std::span<const double> x, std::span<const double> visual,
                     std::span<const double> centroid) {
    if (state.h.size() != p.hidden_dim || state.c.size() != p.hidden_dim)
        throw std::invalid_argument("lstm step: state size does not match hidden dimension");
    StepWork work;
    work.g = build_gate_input(p, x, visual, centroid, state.h);
    step_core(p, state.c, work);

    StepResult res;
    res.state.h = work.h;
    res.state.c = work.c;
    res.state.step = state.step + 1;
    res.logits.assign(p.b_out.begin(), p.b_out.end());
    for (std::size_t r = 0; r < p.w_out.rows; ++r)
        res.logits[r] += kernels::dot(p.w_out.row(r), work.h.data(), p.hidden_dim);
    return res;
}

Vec tag_centroid(const Mat& w_embed, std::span<const std::string> tags, const TextVocab& vocab) {
    if (tags.empty()) throw std::invalid_argument("tag_centroid: empty tag set");
    Vec out(w_embed.cols, 0.0);
    for (const std::string& tag : tags) {
        const std::size_t tok = vocab.tag_token(tag);
        kernels::axpy(1.0, w_embed.row(tok), out.data(), w_embed.cols);
    }
    for (double& v : out) v /= static_cast<double>(tags.size());
    return out;
}

SequenceExample make_example(const ConditionedDecoderParams& p, const Exam& exam) {
    std::vector<std::string> words = preprocess(exam.report);
    if (words.size() > p.vocab.max_caption_length) words.resize(p.vocab.max_caption_length);

    SequenceExample ex;
    ex.visual = concat_embedding(exam);
    if (p.mode != Mode::snt) {
        if (exam.tags.empty())
            throw std::invalid_argument("decoder mode " + std::string(mode_name(p.mode)) +
                                        " requires a non-empty tag set (exam " + exam.exam_id +
                                        ")");
        for (const std::string& tag : exam.tags) ex.tag_tokens.push_back(p.vocab.tag_token(tag));
    }

    ex.inputs.push_back(TextVocab::kStart);
    if (p.mode == Mode::tags_prefix) {
        for (std::size_t t : ex.tag_tokens) {
            ex.inputs.push_back(t);
            ex.targets.push_back(t);
        }
    }
    for (const std::string& w : words) {
        const std::size_t tok = p.vocab.lookup(w);
        ex.inputs.push_back(tok);
        ex.targets.push_back(tok);
    }
    ex.targets.push_back(TextVocab::kEnd);
    return ex;
}

double teacher_forcing_loss(const ConditionedDecoderParams& p,
                            std::span<const SequenceExample> batch,
                            ConditionedDecoderParams* grads) {
    if (batch.empty()) throw std::invalid_argument("teacher_forcing_loss: empty batch");
    std::size_t total_targets = 0;
    for (const SequenceExample& ex : batch) total_targets += ex.targets.size();
    if (total_targets == 0) throw std::invalid_argument("teacher_forcing_loss: no target tokens");
    const double scale = 1.0 / static_cast<double>(total_targets);

    const std::size_t H = p.hidden_dim;
    const std::size_t E = p.embed_dim;
    const std::size_t V = p.vocab.size();
    double loss = 0.0;

    for (const SequenceExample& ex : batch) {
        const std::size_t T = ex.inputs.size();
        Vec centroid;
        if (p.uses_tag_centroid()) {
            centroid.assign(E, 0.0);
            for (std::size_t tok : ex.tag_tokens)
                kernels::axpy(1.0, p.w_embed.row(tok), centroid.data(), E);
            for (double& v : centroid) v /= static_cast<double>(ex.tag_tokens.size());
        }
        const std::span<const double> visual_span =
            p.visual_in_gates() ? std::span<const double>(ex.visual) : std::span<const double>();

        std::vector<Vec> h(T + 1), c(T + 1);
        h[0] = initial_hidden(p, ex.visual);
        c[0].assign(H, 0.0);
        std::vector<StepWork> steps(T);
        std::vector<Vec> probs(T);

        for (std::size_t s = 0; s < T; ++s) {
            const double* x = p.w_embed.row(ex.inputs[s]);
            steps[s].g = build_gate_input(p, std::span<const double>(x, E), visual_span,
                                          centroid, h[s]);
            step_core(p, c[s], steps[s]);
            h[s + 1] = steps[s].h;
            c[s + 1] = steps[s].c;
            Vec logits(p.b_out);
            for (std::size_t r = 0; r < V; ++r)
                logits[r] += kernels::dot(p.w_out.row(r), h[s + 1].data(), H);
            probs[s] = softmax(logits);
            const double pt = std::max(probs[s][ex.targets[s]], 1e-300);
            loss -= std::log(pt) * scale;
        }
        if (grads == nullptr) continue;

        Vec dh_next(H, 0.0), dc_next(H, 0.0), d_centroid(E, 0.0);
        for (std::size_t s = T; s-- > 0;) {
            // Output projection.
            Vec dlogits = probs[s];
            dlogits[ex.targets[s]] -= 1.0;
            for (double& v : dlogits) v *= scale;
            Vec dh = dh_next;
            for (std::size_t r = 0; r < V; ++r) {
                kernels::axpy(dlogits[r], h[s + 1].data(), grads->w_out.row(r), H);
                grads->b_out[r] += dlogits[r];
            }
            kernels::matvec_t_accum(p.w_out.data.data(), V, H, dlogits.data(), dh.data());

            const StepWork& w = steps[s];
            Vec da_i(H), da_f(H), da_o(H), da_q(H), dc(H);
            for (std::size_t r = 0; r < H; ++r) {
                const double do_r = dh[r] * w.tanh_c[r];
                dc[r] = dh[r] * w.o[r] * (1.0 - w.tanh_c[r] * w.tanh_c[r]) + dc_next[r];
                da_o[r] = do_r * w.o[r] * (1.0 - w.o[r]);
                da_i[r] = dc[r] * w.q[r] * w.i[r] * (1.0 - w.i[r]);
                da_f[r] = dc[r] * c[s][r] * w.f[r] * (1.0 - w.f[r]);
                da_q[r] = dc[r] * w.i[r] * (1.0 - w.q[r] * w.q[r]);
            }
            const std::size_t G = w.g.size();
            Vec dg(G, 0.0);
            const auto gate_back = [&](const Mat& wm, Mat& gm, Vec& gb, const Vec& da) {
                for (std::size_t r = 0; r < H; ++r) {
                    kernels::axpy(da[r], w.g.data(), gm.row(r), G);
                    gb[r] += da[r];
                }
                kernels::matvec_t_accum(wm.data.data(), H, G, da.data(), dg.data());
            };
            gate_back(p.w_i, grads->w_i, grads->b_i, da_i);
            gate_back(p.w_f, grads->w_f, grads->b_f, da_f);
            gate_back(p.w_o, grads->w_o, grads->b_o, da_o);
            gate_back(p.w_q, grads->w_q, grads->b_q, da_q);

            // Split the gate-input gradient back into its blocks.
            std::size_t off = 0;
            kernels::axpy(1.0, dg.data() + off, grads->w_embed.row(ex.inputs[s]), E);
            off += E;
            if (p.visual_in_gates()) off += p.visual_dim;  // input data, no parameter grad
            if (p.uses_tag_centroid()) {
                kernels::axpy(1.0, dg.data() + off, d_centroid.data(), E);
                off += E;
            }
            for (std::size_t r = 0; r < H; ++r) {
                dh_next[r] = dg[off + r];
                dc_next[r] = dc[r] * w.f[r];
            }
        }
        if (p.uses_tag_centroid()) {
            const double inv = 1.0 / static_cast<double>(ex.tag_tokens.size());
            for (std::size_t tok : ex.tag_tokens)
                kernels::axpy(inv, d_centroid.data(), grads->w_embed.row(tok), E);
            std::fill(d_centroid.begin(), d_centroid.end(), 0.0);
        }
        if (p.visual_init()) {
            for (std::size_t r = 0; r < H; ++r) {
                const double dz = dh_next[r] * (1.0 - h[0][r] * h[0][r]);
                kernels::axpy(dz, ex.visual.data(), grads->w_init.row(r), p.visual_dim);
                grads->b_init[r] += dz;
            }
        }
    }
    return loss;
}

ConditionedDecoderParams train_decoder(const Corpus& corpus, Mode mode,
                                       const DecoderTrainConfig& cfg, std::uint64_t seed,
                                       numerics::TrainLog* log) {
    const auto collect = [&](Split split) {
        auto pool = cfg.abnormal_only ? corpus.abnormal_exams(split) : corpus.split_exams(split);
        std::vector<const Exam*> kept;
        for (const Exam* e : pool) {
            if (preprocess(e->report).empty()) continue;
            if (mode != Mode::snt && e->tags.empty()) continue;
            kept.push_back(e);
        }
        return kept;
    };
    const auto train_pool = collect(Split::train);
    if (train_pool.empty())
        throw std::runtime_error("train_decoder: no usable training exams (non-empty reports" +
                                 std::string(mode != Mode::snt ? " and tags" : "") + " required)");

    TextVocab vocab = TextVocab::build(train_pool, cfg.min_token_freq, cfg.max_caption_length);
    rng::Random rng(seed);
    ConditionedDecoderParams params = ConditionedDecoderParams::make(
        mode, std::move(vocab), cfg.embed_dim, cfg.hidden_dim,
        corpus.dimension * corpus.images_per_exam, rng);

    std::vector<SequenceExample> train_examples;
    train_examples.reserve(train_pool.size());
    for (const Exam* e : train_pool) train_examples.push_back(make_example(params, *e));
    std::vector<SequenceExample> val_examples;
    for (const Exam* e : collect(Split::val)) val_examples.push_back(make_example(params, *e));

    numerics::AdamState adam;
    adam.lr = cfg.train.lr;
    numerics::PlateauScheduler plateau{cfg.train.plateau_patience, cfg.train.plateau_factor,
                                       cfg.train.min_lr};

    ConditionedDecoderParams best = params;
    double best_monitor = std::numeric_limits<double>::infinity();
    int since_best = 0;
    double train_loss = 0.0;
    std::size_t epochs_run = 0;

    std::vector<std::size_t> order(train_examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.train.max_epochs; ++epoch) {
        ++epochs_run;
        rng.shuffle(order);
        train_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.train.batch_size);
            std::vector<SequenceExample> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(train_examples[order[i]]);
            ConditionedDecoderParams grads = zero_like(params);
            train_loss += teacher_forcing_loss(params, batch, &grads);
            ++batches;
            auto pv = params.param_views();
            auto gv = grads.const_param_views();
            numerics::adam_step(adam, pv, gv);
        }
        train_loss /= static_cast<double>(batches);

        double monitor = train_loss;
        if (!val_examples.empty()) monitor = teacher_forcing_loss(params, val_examples, nullptr);
        adam.lr = numerics::plateau_update(plateau, monitor, adam.lr);

        if (monitor < best_monitor) {
            best_monitor = monitor;
            best = params;
            since_best = 0;
        } else if (++since_best >= cfg.train.early_stop_patience) {
            break;
        }
    }
    if (log != nullptr) {
        log->final_train_loss = train_loss;
        log->best_val_loss = best_monitor;
        log->epochs_run = epochs_run;
    }
    return best;
}

std::vector<std::string> greedy_decode(const ConditionedDecoderParams& p, const Exam& exam,
                                       std::span<const std::string> tags) {
    if (p.mode != Mode::snt && tags.empty())
        throw std::invalid_argument("greedy_decode: decoder mode requires a non-empty tag set");

    const Vec visual = concat_embedding(exam);
    Vec centroid;
    std::span<const double> centroid_span, visual_span;
    if (p.uses_tag_centroid()) {
        std::vector<std::string> sorted_tags(tags.begin(), tags.end());
        std::sort(sorted_tags.begin(), sorted_tags.end());
        centroid = tag_centroid(p.w_embed, sorted_tags, p.vocab);
        centroid_span = centroid;
    }
    if (p.visual_in_gates()) visual_span = visual;

    DecoderState state;
    state.h = initial_hidden(p, visual);
    state.c.assign(p.hidden_dim, 0.0);

    std::vector<std::size_t> forced{TextVocab::kStart};
    if (p.mode == Mode::tags_prefix) {
        std::vector<std::string> sorted_tags(tags.begin(), tags.end());
        std::sort(sorted_tags.begin(), sorted_tags.end());
        for (const std::string& t : sorted_tags) forced.push_back(p.vocab.tag_token(t));
    }

    Vec logits;
    for (std::size_t tok : forced) {
        const double* x = p.w_embed.row(tok);
        StepResult res = lstm_step(p, state, std::span<const double>(x, p.embed_dim), visual_span,
                                   centroid_span);
        state = std::move(res.state);
        logits = std::move(res.logits);
    }

    std::vector<std::string> out;
    while (out.size() < p.vocab.max_caption_length) {
        const std::size_t next = argmax(logits);
        if (next == TextVocab::kEnd) break;
        out.push_back(p.vocab.tokens[next]);
        const double* x = p.w_embed.row(next);
        StepResult res = lstm_step(p, state, std::span<const double>(x, p.embed_dim), visual_span,
                                   centroid_span);
        state = std::move(res.state);
        logits = std::move(res.logits);
    }
    return out;
}

}  // namespace triage::decode
