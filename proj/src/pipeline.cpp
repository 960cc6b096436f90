#include "triage/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <stdexcept>

#include "triage/checkpoint.hpp"
#include "triage/decode.hpp"
#include "triage/labeler.hpp"
#include "triage/retrieve.hpp"

namespace triage::pipeline {

using nlohmann::json;

namespace {

StageConfig stage_from_json(const json& j, const StageConfig& defaults) {
    StageConfig s = defaults;
    if (j.contains("method")) s.method = j["method"].get<std::string>();
    if (j.contains("checkpoint") && !j["checkpoint"].is_null())
        s.checkpoint = j["checkpoint"].get<std::string>();
    if (j.contains("k_neighbors")) s.k_neighbors = j["k_neighbors"].get<std::size_t>();
    return s;
}

std::vector<const Exam*> select_split(const Corpus& corpus, const std::string& split) {
    if (split == "all") {
        std::vector<const Exam*> out;
        for (const Exam& e : corpus.exams) out.push_back(&e);
        return out;
    }
    return corpus.split_exams(split_from_name(split));
}

json parse_jsonl_line(const std::string& line, const std::string& path, std::size_t line_no) {
    try {
        return json::parse(line);
    } catch (const json::parse_error& ex) {
        throw std::runtime_error(path + " line " + std::to_string(line_no) +
                                 ": malformed JSON: " + ex.what());
    }
}

// Removes the listed files when not disarmed; keeps failed runs from leaving
// partial pipeline outputs behind.
class OutputGuard {
public:
    void track(const std::string& path) { paths_.push_back(path); }
    void disarm() { armed_ = false; }
    ~OutputGuard() {
        if (!armed_) return;
        for (const std::string& p : paths_) std::remove(p.c_str());
    }

private:
    std::vector<std::string> paths_;
    bool armed_ = true;
};

}  // namespace

PipelineConfig config_from_json(const json& j) {
    PipelineConfig c;
    if (j.contains("data")) c.data = j["data"].get<std::string>();
    if (j.contains("split")) c.split = j["split"].get<std::string>();
    if (j.contains("k")) c.k = j["k"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("min_score") && !j["min_score"].is_null())
        c.min_score = j["min_score"].get<double>();
    if (j.contains("ranker")) c.ranker = stage_from_json(j["ranker"], c.ranker);
    if (j.contains("tagger")) c.tagger = stage_from_json(j["tagger"], c.tagger);
    if (j.contains("captioner")) c.captioner = stage_from_json(j["captioner"], c.captioner);
    if (j.contains("out")) {
        const json& out = j["out"];
        if (out.contains("worklist")) c.out_worklist = out["worklist"].get<std::string>();
        if (out.contains("tags")) c.out_tags = out["tags"].get<std::string>();
        if (out.contains("captions")) c.out_captions = out["captions"].get<std::string>();
    }
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& ex) {
        throw std::runtime_error("config " + path + ": malformed JSON: " + ex.what());
    }
    return config_from_json(doc);
}

void write_worklist(const rank::RankedWorklist& worklist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write worklist: " + path);
    for (std::size_t i = 0; i < worklist.entries.size(); ++i) {
        json row;
        row["exam_id"] = worklist.entries[i].exam_id;
        row["score"] = worklist.entries[i].score;
        row["rank"] = i + 1;
        out << row.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<WorklistRow> read_worklist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open worklist: " + path);
    std::vector<WorklistRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_jsonl_line(line, path, line_no);
        rows.push_back({j.at("exam_id").get<std::string>(), j.at("score").get<double>(),
                        j.at("rank").get<std::size_t>()});
    }
    return rows;
}

void write_tag_assignments(const std::vector<tag::TagAssignment>& assignments,
                           const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write tags: " + path);
    for (const tag::TagAssignment& a : assignments) {
        json row;
        row["exam_id"] = a.exam_id;
        row["tags"] = a.tags;
        json probs = json::object();
        for (const auto& [t, p] : a.probabilities) probs[t] = p;
        row["probs"] = probs;
        out << row.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<tag::TagAssignment> read_tag_assignments(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open tags file: " + path);
    std::vector<tag::TagAssignment> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_jsonl_line(line, path, line_no);
        tag::TagAssignment a;
        a.exam_id = j.at("exam_id").get<std::string>();
        a.tags = j.at("tags").get<std::vector<std::string>>();
        if (j.contains("probs"))
            for (const auto& [t, p] : j["probs"].items()) a.probabilities[t] = p.get<double>();
        rows.push_back(std::move(a));
    }
    return rows;
}

void write_captions(const std::vector<CaptionRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write captions: " + path);
    for (const CaptionRow& r : rows) {
        json row;
        row["exam_id"] = r.exam_id;
        row["caption"] = r.caption;
        if (r.source_exam) row["source_exam"] = *r.source_exam;
        if (r.similarity) row["similarity"] = *r.similarity;
        if (r.constrained) row["constrained"] = *r.constrained;
        out << row.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<CaptionRow> read_captions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open captions file: " + path);
    std::vector<CaptionRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const json j = parse_jsonl_line(line, path, line_no);
        CaptionRow r;
        r.exam_id = j.at("exam_id").get<std::string>();
        r.caption = j.at("caption").get<std::string>();
        if (j.contains("source_exam")) r.source_exam = j["source_exam"].get<std::string>();
        if (j.contains("similarity")) r.similarity = j["similarity"].get<double>();
        if (j.contains("constrained")) r.constrained = j["constrained"].get<bool>();
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

rank::Scorer make_ranker(const PipelineConfig& cfg, const Corpus& corpus,
                         std::shared_ptr<rank::BinaryHead>& head_out) {
    const StageConfig& s = cfg.ranker;
    if (s.method == "head") {
        if (s.checkpoint.empty())
            throw std::runtime_error("ranker method 'head' needs a model checkpoint");
        head_out = std::make_shared<rank::BinaryHead>(checkpoint::load_binary_head(s.checkpoint));
        auto head = head_out;
        return [head](const Exam& e) { return rank::score_exam(*head, e); };
    }
    return rank::baseline_scorer(rank::baseline_from_name(s.method), corpus, s.k_neighbors,
                                 cfg.seed);
}

std::function<tag::TagAssignment(const Exam&)> make_tagger(const PipelineConfig& cfg,
                                                           const Corpus& corpus) {
    const StageConfig& s = cfg.tagger;
    if (s.method == "head") {
        if (s.checkpoint.empty())
            throw std::runtime_error("tagger method 'head' needs a model checkpoint");
        auto head = std::make_shared<tag::TagHead>(checkpoint::load_tag_head(s.checkpoint));
        return [head](const Exam& e) { return tag::predict_tags(*head, e); };
    }
    // Tagging baselines draw from abnormal training exams only.
    const auto train = corpus.abnormal_exams(Split::train);
    auto tagger = std::make_shared<tag::BaselineTagger>(tag::baseline_from_name(s.method), train,
                                                        s.k_neighbors, cfg.seed);
    return [tagger](const Exam& e) { return tagger->assign(e); };
}

}  // namespace

void run_pipeline(const PipelineConfig& cfg) {
    const Corpus corpus = load_corpus(cfg.data);
    const auto exams = select_split(corpus, cfg.split);

    std::shared_ptr<rank::BinaryHead> ranker_head;
    const rank::Scorer scorer = make_ranker(cfg, corpus, ranker_head);
    const auto tagger = make_tagger(cfg, corpus);

    rank::RankedWorklist worklist = rank::rank_exams(scorer, exams, cfg.ranker.method);

    std::vector<std::string> ids = rank::top_k(worklist, cfg.k);
    if (cfg.min_score) {
        std::vector<std::string> gated;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (worklist.entries[i].score < *cfg.min_score) break;
            gated.push_back(ids[i]);
        }
        ids = std::move(gated);
    }

    OutputGuard guard;
    guard.track(cfg.out_worklist);
    write_worklist(worklist, cfg.out_worklist);

    guard.track(cfg.out_tags);
    const std::vector<tag::TagAssignment> assignments = tag::tag_worklist(tagger, corpus, ids);
    write_tag_assignments(assignments, cfg.out_tags);

    guard.track(cfg.out_captions);
    std::vector<CaptionRow> captions;
    captions.reserve(assignments.size());
    const std::string& method = cfg.captioner.method;
    if (method == "retrieve_1nn_plus" || method == "retrieve_1nn") {
        const auto train = corpus.split_exams(Split::train);
        const retrieve::EmbeddingIndex index = retrieve::build_index(train);
        for (const tag::TagAssignment& a : assignments) {
            const Exam* e = corpus.find(a.exam_id);
            const retrieve::RetrievalResult r =
                method == "retrieve_1nn_plus" ? retrieve::retrieve_1nn_plus(index, *e, a.tags)
                                              : retrieve::retrieve_1nn(index, *e);
            captions.push_back({a.exam_id, r.report, r.exam_id, r.similarity, r.constrained});
        }
    } else if (method == "decode_snt" || method == "decode_tags_prefix" ||
               method == "decode_tags_gates") {
        if (cfg.captioner.checkpoint.empty())
            throw std::runtime_error("captioner method '" + method + "' needs a model checkpoint");
        const decode::ConditionedDecoderParams params =
            checkpoint::load_decoder(cfg.captioner.checkpoint);
        const decode::Mode want = decode::mode_from_name(method.substr(7));
        if (params.mode != want)
            throw std::runtime_error("decoder checkpoint mode '" +
                                     std::string(decode::mode_name(params.mode)) +
                                     "' does not match captioner method '" + method + "'");
        for (const tag::TagAssignment& a : assignments) {
            const Exam* e = corpus.find(a.exam_id);
            const auto tokens = decode::greedy_decode(params, *e, a.tags);
            std::string caption;
            for (const std::string& t : tokens) {
                if (!caption.empty()) caption += ' ';
                caption += t;
            }
            captions.push_back({a.exam_id, caption, std::nullopt, std::nullopt, std::nullopt});
        }
    } else {
        throw std::runtime_error("unknown captioner method: " + method);
    }
    write_captions(captions, cfg.out_captions);
    guard.disarm();
}

std::vector<metrics::MetricReport> evaluate(const EvalConfig& cfg) {
    const Corpus corpus = load_corpus(cfg.data);
    const std::vector<WorklistRow> worklist = read_worklist(cfg.worklist);
    if (worklist.empty()) throw std::runtime_error("evaluate: empty worklist");

    std::vector<metrics::ScoredItem> population;
    std::vector<int> relevance;
    population.reserve(worklist.size());
    for (const WorklistRow& row : worklist) {
        const Exam* e = corpus.find(row.exam_id);
        if (e == nullptr)
            throw std::runtime_error("evaluate: worklist exam_id not in corpus: " + row.exam_id);
        population.push_back({row.exam_id, row.score, e->abnormal ? 1 : 0});
        relevance.push_back(e->abnormal ? 1 : 0);
    }

    std::vector<metrics::MetricReport> reports;
    for (const auto metric : {metrics::RankMetric::ndcg, metrics::RankMetric::precision}) {
        metrics::MetricReport rep;
        rep.metric = metric == metrics::RankMetric::ndcg ? "ndcg" : "precision";
        for (std::size_t k = cfg.k_min; k <= cfg.k_max; ++k)
            rep.per_k[k] = metric == metrics::RankMetric::ndcg
                               ? metrics::ndcg_at_k(relevance, k)
                               : metrics::precision_at_k(relevance, k);
        const std::size_t mid = std::min<std::size_t>(40, cfg.k_max);
        rep.value = rep.per_k.count(mid) ? rep.per_k[mid] : rep.per_k.begin()->second;
        rep.bootstrap = metrics::bootstrap_curve(population, metric, cfg.bootstrap_samples,
                                                 cfg.bootstrap_sample_size, cfg.k_min, cfg.k_max,
                                                 cfg.window, cfg.seed);
        reports.push_back(std::move(rep));
    }

    if (!cfg.tags.empty()) {
        const auto assignments = read_tag_assignments(cfg.tags);
        std::map<std::string, const tag::TagAssignment*> by_id;
        for (const auto& a : assignments) by_id[a.exam_id] = &a;
        std::vector<std::vector<std::string>> gold, pred;
        for (const WorklistRow& row : worklist) {
            if (gold.size() >= cfg.f1_top_k) break;
            const auto it = by_id.find(row.exam_id);
            if (it == by_id.end()) continue;
            gold.push_back(corpus.find(row.exam_id)->tags);
            pred.push_back(it->second->tags);
        }
        if (gold.empty()) throw std::runtime_error("evaluate: no tagged exams in the worklist");
        if (gold.size() < cfg.f1_top_k)
            std::cerr << "warning: macro F1 evaluated on " << gold.size() << " exams (requested "
                      << cfg.f1_top_k << ")\n";
        metrics::MetricReport rep;
        rep.metric = "macro_f1@" + std::to_string(cfg.f1_top_k);
        rep.value = metrics::macro_f1(gold, pred);
        reports.push_back(std::move(rep));
    }

    if (!cfg.captions.empty()) {
        const auto captions = read_captions(cfg.captions);
        if (captions.empty()) throw std::runtime_error("evaluate: empty captions file");
        std::vector<std::vector<std::string>> cand_tokens, ref_tokens;
        std::vector<std::string> gold_texts, system_texts;
        for (const CaptionRow& row : captions) {
            const Exam* e = corpus.find(row.exam_id);
            if (e == nullptr)
                throw std::runtime_error("evaluate: caption exam_id not in corpus: " + row.exam_id);
            cand_tokens.push_back(decode::preprocess(row.caption));
            ref_tokens.push_back(decode::preprocess(e->report));
            system_texts.push_back(row.caption);
            gold_texts.push_back(e->report);
        }
        metrics::BleuOptions bleu_opts;
        bleu_opts.smooth_add_one = cfg.bleu_smooth;
        reports.push_back({"bleu", metrics::bleu(cand_tokens, ref_tokens, bleu_opts), {}, {}});
        reports.push_back(
            {"rouge_l", metrics::rouge_l(cand_tokens, ref_tokens, cfg.rouge_beta), {}, {}});
        const labeler::LabelLexicon lexicon = cfg.lexicon.empty()
                                                  ? labeler::LabelLexicon::default_lexicon()
                                                  : labeler::load_lexicon(cfg.lexicon);
        const metrics::ClinicalPR pr = metrics::clinical_pr(gold_texts, system_texts, lexicon);
        reports.push_back({"clinical_precision", pr.precision, {}, {}});
        reports.push_back({"clinical_recall", pr.recall, {}, {}});
    }

    if (!cfg.out.empty()) {
        json doc = json::array();
        for (const auto& rep : reports) doc.push_back(metrics::report_to_json(rep));
        std::ofstream out(cfg.out);
        if (!out) throw std::runtime_error("cannot write report: " + cfg.out);
        out << doc.dump(2) << '\n';
    }
    return reports;
}

BenchResult run_bench(const BenchConfig& cfg) {
    const Corpus corpus = load_corpus(cfg.data);
    if (corpus.exams.size() < cfg.n_rank)
        throw std::runtime_error("bench: corpus has fewer than n_rank exams");
    const rank::BinaryHead head = checkpoint::load_binary_head(cfg.ranker_checkpoint);
    const tag::TagHead tagger = checkpoint::load_tag_head(cfg.tagger_checkpoint);

    std::vector<const Exam*> exams;
    for (std::size_t i = 0; i < cfg.n_rank; ++i) exams.push_back(&corpus.exams[i]);

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const rank::RankedWorklist worklist =
        rank::rank_exams(rank::head_scorer(head), exams, "head");
    const auto t1 = clock::now();

    // Index construction is the offline encoding step; not timed.
    const retrieve::EmbeddingIndex index = retrieve::build_index(corpus.split_exams(Split::train));
    const auto ids = rank::top_k(worklist, cfg.n_caption);

    const auto t2 = clock::now();
    for (const std::string& id : ids) {
        const Exam* e = corpus.find(id);
        const tag::TagAssignment a = tag::predict_tags(tagger, *e);
        (void)retrieve::retrieve_1nn_plus(index, *e, a.tags);
    }
    const auto t3 = clock::now();

    BenchResult res;
    res.n_rank = cfg.n_rank;
    res.n_caption = ids.size();
    res.rank_seconds = std::chrono::duration<double>(t1 - t0).count();
    res.tag_caption_seconds = std::chrono::duration<double>(t3 - t2).count();
    res.note =
        "Reference timings of 19.78 s (ranking 500 exams) and 19.43 s (tagging + captioning the "
        "top 100) reported for a GPU server pipeline include CNN image encoding; this tool "
        "ingests precomputed embeddings, so timings are not directly comparable.";

    if (!cfg.out.empty()) {
        json doc;
        doc["n_rank"] = res.n_rank;
        doc["n_caption"] = res.n_caption;
        doc["rank_seconds"] = res.rank_seconds;
        doc["tag_caption_seconds"] = res.tag_caption_seconds;
        doc["note"] = res.note;
        std::ofstream out(cfg.out);
        if (!out) throw std::runtime_error("cannot write bench report: " + cfg.out);
        out << doc.dump(2) << '\n';
    }
    return res;
}

}  // namespace triage::pipeline
