#include "triage/cli.hpp"

#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "triage/checkpoint.hpp"
#include "triage/decode.hpp"
#include "triage/kernels.hpp"
#include "triage/pipeline.hpp"

namespace triage::cli {

int run(int argc, const char* const* argv) {
    CLI::App app{"Rank, tag and caption radiography exams from precomputed embeddings"};
    app.require_subcommand(1);

    std::string simd = "auto";
    app.add_option("--simd", simd, "Kernel selection: auto, scalar or avx2")
        ->check(CLI::IsMember({"auto", "scalar", "avx2"}));

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    SynthConfig synth_cfg;
    std::string synth_out;
    synth->add_option("--out", synth_out, "Output corpus JSONL")->required();
    synth->add_option("--seed", synth_cfg.seed, "RNG seed");
    synth->add_option("--n", synth_cfg.n, "Total exam count");
    synth->add_option("--d", synth_cfg.dimension, "Embedding dimension per image");
    synth->add_option("--m", synth_cfg.images_per_exam, "Images per exam");
    synth->add_option("--tags", synth_cfg.tag_count, "Number of tag clusters (1-32)");
    synth->add_option("--abnormal-fraction", synth_cfg.abnormal_fraction,
                      "Fraction of abnormal exams");
    synth->add_option("--separation", synth_cfg.separation,
                      "Cluster shift in noise-sigma units");
    synth->add_option("--train-frac", synth_cfg.train_fraction, "Train split fraction");
    synth->add_option("--val-frac", synth_cfg.val_fraction, "Validation split fraction");
    synth->add_option("--n-train", synth_cfg.n_train, "Explicit train count (overrides --n)");
    synth->add_option("--n-val", synth_cfg.n_val, "Explicit val count");
    synth->add_option("--n-test", synth_cfg.n_test, "Explicit test count");

    // train
    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    std::string train_target, train_data, train_out, train_mode = "snt";
    std::uint64_t train_seed = 0;
    numerics::TrainConfig train_cfg;
    decode::DecoderTrainConfig dec_cfg;
    bool include_normal = false, global_threshold = false;
    train->add_option("--target", train_target, "ranker | tagger | decoder")
        ->required()
        ->check(CLI::IsMember({"ranker", "tagger", "decoder"}));
    train->add_option("--data", train_data, "Corpus JSONL")->required();
    train->add_option("--out", train_out, "Checkpoint path")->required();
    train->add_option("--seed", train_seed, "RNG seed");
    train->add_option("--lr", train_cfg.lr, "Initial Adam learning rate");
    train->add_option("--batch", train_cfg.batch_size, "Mini-batch size");
    train->add_option("--epochs", train_cfg.max_epochs, "Maximum epochs");
    train->add_option("--early-stop", train_cfg.early_stop_patience,
                      "Early-stop patience (epochs)");
    train->add_option("--hidden", train_cfg.hidden, "Hidden layer widths for the heads");
    train->add_option("--mode", train_mode, "Decoder mode: snt | tags_prefix | tags_gates")
        ->check(CLI::IsMember({"snt", "tags_prefix", "tags_gates"}));
    train->add_option("--embed-dim", dec_cfg.embed_dim, "Decoder word embedding size");
    train->add_option("--hidden-dim", dec_cfg.hidden_dim, "Decoder hidden size");
    train->add_option("--max-caption-length", dec_cfg.max_caption_length,
                      "Decoder caption length cap");
    train->add_option("--min-token-freq", dec_cfg.min_token_freq,
                      "Vocabulary frequency cutoff");
    train->add_flag("--include-normal", include_normal,
                    "Train the decoder on normal exams too (default: abnormal only)");
    train->add_flag("--global-threshold", global_threshold,
                    "Learn one shared tag threshold instead of per-tag thresholds");

    // rank
    auto* rank_cmd = app.add_subcommand("rank", "Score and sort exams into a worklist");
    std::string rank_data, rank_method = "head", rank_model, rank_split = "test", rank_out;
    std::size_t rank_kn = 5;
    std::uint64_t rank_seed = 0;
    rank_cmd->add_option("--data", rank_data, "Corpus JSONL")->required();
    rank_cmd->add_option("--method", rank_method, "head | random | nn1 | knn")
        ->check(CLI::IsMember({"head", "random", "nn1", "knn"}));
    rank_cmd->add_option("--model", rank_model, "Binary head checkpoint (method=head)");
    rank_cmd->add_option("--split", rank_split, "train | val | test | all");
    rank_cmd->add_option("--k-neighbors", rank_kn, "Neighbors for the knn baseline");
    rank_cmd->add_option("--seed", rank_seed, "Seed for the random baseline");
    rank_cmd->add_option("--out", rank_out, "Worklist JSONL output")->required();

    // tag
    auto* tag_cmd = app.add_subcommand("tag", "Tag the top-k exams of a worklist");
    std::string tag_data, tag_method = "head", tag_model, tag_worklist_path, tag_out;
    std::size_t tag_k = 100, tag_kn = 5;
    std::uint64_t tag_seed = 0;
    tag_cmd->add_option("--data", tag_data, "Corpus JSONL")->required();
    tag_cmd->add_option("--method", tag_method, "head | random | nn1 | knn")
        ->check(CLI::IsMember({"head", "random", "nn1", "knn"}));
    tag_cmd->add_option("--model", tag_model, "Tag head checkpoint (method=head)");
    tag_cmd->add_option("--worklist", tag_worklist_path, "Worklist JSONL")->required();
    tag_cmd->add_option("--k", tag_k, "How many top-ranked exams to tag");
    tag_cmd->add_option("--k-neighbors", tag_kn, "Neighbors for the knn baseline");
    tag_cmd->add_option("--seed", tag_seed, "Seed for the random baseline");
    tag_cmd->add_option("--out", tag_out, "Tag JSONL output")->required();

    // caption
    auto* cap_cmd = app.add_subcommand("caption", "Caption tagged exams");
    std::string cap_data, cap_method = "retrieve_1nn_plus", cap_model, cap_tags, cap_out;
    cap_cmd->add_option("--data", cap_data, "Corpus JSONL")->required();
    cap_cmd
        ->add_option("--method", cap_method,
                     "retrieve_1nn_plus | retrieve_1nn | decode_snt | decode_tags_prefix | "
                     "decode_tags_gates")
        ->check(CLI::IsMember({"retrieve_1nn_plus", "retrieve_1nn", "decode_snt",
                               "decode_tags_prefix", "decode_tags_gates"}));
    cap_cmd->add_option("--model", cap_model, "Decoder checkpoint (decode_* methods)");
    cap_cmd->add_option("--tags", cap_tags, "Tag JSONL from the tag stage")->required();
    cap_cmd->add_option("--out", cap_out, "Caption JSONL output")->required();

    // pipeline
    auto* pipe_cmd = app.add_subcommand("pipeline", "Run rank -> tag -> caption end to end");
    std::string pipe_config;
    pipeline::PipelineConfig pcfg;
    double pipe_min_score = -1.0;
    pipe_cmd->add_option("--config", pipe_config, "Pipeline config JSON");
    auto* p_data = pipe_cmd->add_option("--data", pcfg.data, "Corpus JSONL");
    auto* p_split = pipe_cmd->add_option("--split", pcfg.split, "train | val | test | all");
    auto* p_k = pipe_cmd->add_option("--k", pcfg.k, "Worklist cutoff");
    auto* p_seed = pipe_cmd->add_option("--seed", pcfg.seed, "Seed for baseline stages");
    auto* p_min = pipe_cmd->add_option("--min-score", pipe_min_score,
                                       "Minimum score gate for worklist entry");
    auto* p_rm = pipe_cmd->add_option("--ranker-method", pcfg.ranker.method, "Ranker method");
    auto* p_rc = pipe_cmd->add_option("--ranker-model", pcfg.ranker.checkpoint,
                                      "Ranker checkpoint");
    auto* p_tm = pipe_cmd->add_option("--tagger-method", pcfg.tagger.method, "Tagger method");
    auto* p_tc = pipe_cmd->add_option("--tagger-model", pcfg.tagger.checkpoint,
                                      "Tagger checkpoint");
    auto* p_cm = pipe_cmd->add_option("--captioner-method", pcfg.captioner.method,
                                      "Captioner method");
    auto* p_cc = pipe_cmd->add_option("--captioner-model", pcfg.captioner.checkpoint,
                                      "Captioner checkpoint");
    auto* p_ow = pipe_cmd->add_option("--out-worklist", pcfg.out_worklist, "Worklist output");
    auto* p_ot = pipe_cmd->add_option("--out-tags", pcfg.out_tags, "Tag output");
    auto* p_oc = pipe_cmd->add_option("--out-captions", pcfg.out_captions, "Caption output");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate pipeline outputs");
    pipeline::EvalConfig ecfg;
    eval_cmd->add_option("--data", ecfg.data, "Corpus JSONL")->required();
    eval_cmd->add_option("--worklist", ecfg.worklist, "Worklist JSONL")->required();
    eval_cmd->add_option("--tags", ecfg.tags, "Tag JSONL (enables macro F1)");
    eval_cmd->add_option("--captions", ecfg.captions, "Caption JSONL (enables text metrics)");
    eval_cmd->add_option("--out", ecfg.out, "Metric report JSON output");
    eval_cmd->add_option("--lexicon", ecfg.lexicon, "Clinical label lexicon JSON");
    eval_cmd->add_option("--f1-k", ecfg.f1_top_k, "Top-k cut for macro F1");
    eval_cmd->add_option("--bootstrap-samples", ecfg.bootstrap_samples, "Bootstrap draws");
    eval_cmd->add_option("--bootstrap-size", ecfg.bootstrap_sample_size,
                         "Exams per bootstrap draw");
    eval_cmd->add_option("--k-min", ecfg.k_min, "Smallest k of the metric curves");
    eval_cmd->add_option("--k-max", ecfg.k_max, "Largest k of the metric curves");
    eval_cmd->add_option("--window", ecfg.window, "Moving-average window");
    eval_cmd->add_option("--seed", ecfg.seed, "Bootstrap seed");
    eval_cmd->add_option("--rouge-beta", ecfg.rouge_beta, "ROUGE-L F-measure beta");
    eval_cmd->add_flag("--bleu-smooth", ecfg.bleu_smooth,
                       "Add-one smoothing for zero-match BLEU precisions");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "Time ranking and tagging+captioning");
    pipeline::BenchConfig bcfg;
    bench_cmd->add_option("--data", bcfg.data, "Corpus JSONL")->required();
    bench_cmd->add_option("--ranker-model", bcfg.ranker_checkpoint, "Binary head checkpoint")
        ->required();
    bench_cmd->add_option("--tagger-model", bcfg.tagger_checkpoint, "Tag head checkpoint")
        ->required();
    bench_cmd->add_option("--n-rank", bcfg.n_rank, "Exams to rank");
    bench_cmd->add_option("--n-caption", bcfg.n_caption, "Top exams to tag and caption");
    bench_cmd->add_option("--out", bcfg.out, "Timing report JSON output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (simd == "scalar") kernels::select(kernels::Isa::scalar);
        else if (simd == "avx2") kernels::select(kernels::Isa::avx2);
        else kernels::select_auto();

        if (app.got_subcommand(synth)) {
            const Corpus corpus = synth_corpus(synth_cfg);
            save_corpus(corpus, synth_out);
            std::size_t abnormal = 0;
            for (const Exam& e : corpus.exams) abnormal += e.abnormal ? 1 : 0;
            std::cout << "wrote " << corpus.exams.size() << " exams (" << abnormal
                      << " abnormal, alphabet " << corpus.tag_alphabet.size() << ") to "
                      << synth_out << "\n";
        } else if (app.got_subcommand(train)) {
            const Corpus corpus = load_corpus(train_data);
            numerics::TrainLog log;
            if (train_target == "ranker") {
                const rank::BinaryHead head =
                    rank::train_binary_head(corpus, train_cfg, train_seed, &log);
                checkpoint::save_binary_head(head, train_out);
            } else if (train_target == "tagger") {
                tag::TagHead head = tag::train_tag_head(corpus, train_cfg, train_seed, &log);
                const auto val = corpus.abnormal_exams(Split::val);
                head.thresholds = tag::learn_thresholds(head, val, global_threshold);
                checkpoint::save_tag_head(head, train_out);
            } else {
                dec_cfg.train = train_cfg;
                dec_cfg.abnormal_only = !include_normal;
                const decode::ConditionedDecoderParams params = decode::train_decoder(
                    corpus, decode::mode_from_name(train_mode), dec_cfg, train_seed, &log);
                checkpoint::save_decoder(params, train_out);
            }
            std::cout << "final train loss " << log.final_train_loss << ", best val loss "
                      << log.best_val_loss << " after " << log.epochs_run << " epochs; wrote "
                      << train_out << "\n";
        } else if (app.got_subcommand(rank_cmd)) {
            const Corpus corpus = load_corpus(rank_data);
            rank::Scorer scorer;
            if (rank_method == "head") {
                if (rank_model.empty())
                    throw std::runtime_error("rank --method head needs --model");
                auto head = std::make_shared<rank::BinaryHead>(
                    checkpoint::load_binary_head(rank_model));
                scorer = [head](const Exam& e) { return rank::score_exam(*head, e); };
            } else {
                scorer = rank::baseline_scorer(rank::baseline_from_name(rank_method), corpus,
                                               rank_kn, rank_seed);
            }
            std::vector<const Exam*> exams;
            if (rank_split == "all")
                for (const Exam& e : corpus.exams) exams.push_back(&e);
            else
                exams = corpus.split_exams(split_from_name(rank_split));
            pipeline::write_worklist(rank::rank_exams(scorer, exams, rank_method), rank_out);
            std::cout << "ranked " << exams.size() << " exams to " << rank_out << "\n";
        } else if (app.got_subcommand(tag_cmd)) {
            const Corpus corpus = load_corpus(tag_data);
            std::function<tag::TagAssignment(const Exam&)> tagger;
            if (tag_method == "head") {
                if (tag_model.empty()) throw std::runtime_error("tag --method head needs --model");
                auto head = std::make_shared<tag::TagHead>(checkpoint::load_tag_head(tag_model));
                tagger = [head](const Exam& e) { return tag::predict_tags(*head, e); };
            } else {
                const auto train_pool = corpus.abnormal_exams(Split::train);
                auto baseline = std::make_shared<tag::BaselineTagger>(
                    tag::baseline_from_name(tag_method), train_pool, tag_kn, tag_seed);
                tagger = [baseline](const Exam& e) { return baseline->assign(e); };
            }
            const auto rows = pipeline::read_worklist(tag_worklist_path);
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < rows.size() && i < tag_k; ++i)
                ids.push_back(rows[i].exam_id);
            pipeline::write_tag_assignments(tag::tag_worklist(tagger, corpus, ids), tag_out);
            std::cout << "tagged " << ids.size() << " exams to " << tag_out << "\n";
        } else if (app.got_subcommand(cap_cmd)) {
            const Corpus corpus = load_corpus(cap_data);
            const auto assignments = pipeline::read_tag_assignments(cap_tags);
            std::vector<pipeline::CaptionRow> captions;
            if (cap_method == "retrieve_1nn_plus" || cap_method == "retrieve_1nn") {
                const retrieve::EmbeddingIndex index =
                    retrieve::build_index(corpus.split_exams(Split::train));
                for (const auto& a : assignments) {
                    const Exam* e = corpus.find(a.exam_id);
                    if (e == nullptr)
                        throw std::runtime_error("caption: unknown exam_id " + a.exam_id);
                    const auto r = cap_method == "retrieve_1nn_plus"
                                       ? retrieve::retrieve_1nn_plus(index, *e, a.tags)
                                       : retrieve::retrieve_1nn(index, *e);
                    captions.push_back(
                        {a.exam_id, r.report, r.exam_id, r.similarity, r.constrained});
                }
            } else {
                if (cap_model.empty())
                    throw std::runtime_error("caption decode_* methods need --model");
                const auto params = checkpoint::load_decoder(cap_model);
                const auto want = decode::mode_from_name(cap_method.substr(7));
                if (params.mode != want)
                    throw std::runtime_error("decoder checkpoint mode does not match --method");
                for (const auto& a : assignments) {
                    const Exam* e = corpus.find(a.exam_id);
                    if (e == nullptr)
                        throw std::runtime_error("caption: unknown exam_id " + a.exam_id);
                    const auto tokens = decode::greedy_decode(params, *e, a.tags);
                    std::string text;
                    for (const auto& t : tokens) {
                        if (!text.empty()) text += ' ';
                        text += t;
                    }
                    captions.push_back({a.exam_id, text, std::nullopt, std::nullopt, std::nullopt});
                }
            }
            pipeline::write_captions(captions, cap_out);
            std::cout << "captioned " << captions.size() << " exams to " << cap_out << "\n";
        } else if (app.got_subcommand(pipe_cmd)) {
            pipeline::PipelineConfig cfg;
            if (!pipe_config.empty()) cfg = pipeline::load_config(pipe_config);
            if (p_data->count()) cfg.data = pcfg.data;
            if (p_split->count()) cfg.split = pcfg.split;
            if (p_k->count()) cfg.k = pcfg.k;
            if (p_seed->count()) cfg.seed = pcfg.seed;
            if (p_min->count()) cfg.min_score = pipe_min_score;
            if (p_rm->count()) cfg.ranker.method = pcfg.ranker.method;
            if (p_rc->count()) cfg.ranker.checkpoint = pcfg.ranker.checkpoint;
            if (p_tm->count()) cfg.tagger.method = pcfg.tagger.method;
            if (p_tc->count()) cfg.tagger.checkpoint = pcfg.tagger.checkpoint;
            if (p_cm->count()) cfg.captioner.method = pcfg.captioner.method;
            if (p_cc->count()) cfg.captioner.checkpoint = pcfg.captioner.checkpoint;
            if (p_ow->count()) cfg.out_worklist = pcfg.out_worklist;
            if (p_ot->count()) cfg.out_tags = pcfg.out_tags;
            if (p_oc->count()) cfg.out_captions = pcfg.out_captions;
            if (cfg.data.empty()) throw std::runtime_error("pipeline needs --data or a config");
            pipeline::run_pipeline(cfg);
            std::cout << "pipeline outputs: " << cfg.out_worklist << ", " << cfg.out_tags << ", "
                      << cfg.out_captions << "\n";
        } else if (app.got_subcommand(eval_cmd)) {
            const auto reports = pipeline::evaluate(ecfg);
            for (const auto& rep : reports)
                std::cout << rep.metric << " = " << rep.value << "\n";
            if (!ecfg.out.empty()) std::cout << "report written to " << ecfg.out << "\n";
        } else if (app.got_subcommand(bench_cmd)) {
            const auto res = pipeline::run_bench(bcfg);
            std::cout << "ranking " << res.n_rank << " exams: " << res.rank_seconds << " s\n"
                      << "tagging + captioning top " << res.n_caption << ": "
                      << res.tag_caption_seconds << " s\n"
                      << res.note << "\n";
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace triage::cli
