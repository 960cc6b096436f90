#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "triage/metrics.hpp"
#include "triage/rank.hpp"

using namespace triage;

namespace {

Exam make_exam(std::string id, std::vector<double> img, std::vector<std::string> tags = {}) {
    Exam e;
    e.exam_id = std::move(id);
    e.images = {std::move(img)};
    e.tags = std::move(tags);
    std::sort(e.tags.begin(), e.tags.end());
    e.abnormal = !e.tags.empty();
    return e;
}

}  // namespace

TEST_CASE("score_exam equals the manual sigmoid(affine) composition") {
    rank::BinaryHead head;
    rng::Random rng(17);
    head.stack = numerics::DenseStack::make(4, {}, 1, rng);

    Exam e = make_exam("q", {0.3, -0.8, 1.2, 0.05});
    const Vec emb = concat_embedding(e);
    const double manual =
        numerics::sigmoid(numerics::affine(head.stack.layers[0], emb)[0]);
    CHECK(rank::score_exam(head, e) == doctest::Approx(manual).epsilon(1e-12));

    // Zero weights and bias score 0.5 on anything.
    rank::BinaryHead zero;
    zero.stack.layers.push_back({Mat(1, 4), Vec{0.0}});
    CHECK(rank::score_exam(zero, e) == doctest::Approx(0.5));

    // Raising the bias strictly raises the score.
    rank::BinaryHead bumped = head;
    bumped.stack.layers[0].bias[0] += 1.0;
    CHECK(rank::score_exam(bumped, e) > rank::score_exam(head, e));

    Exam wrong = make_exam("w", {1.0, 2.0});
    CHECK_THROWS(rank::score_exam(head, wrong));
}

TEST_CASE("rank_exams sorts descending with id tie-breaks") {
    const Exam a = make_exam("a", {1}), b = make_exam("b", {2}), c = make_exam("c", {3});
    const std::vector<const Exam*> exams{&a, &b, &c};
    const rank::Scorer scorer = [](const Exam& e) {
        if (e.exam_id == "b") return 0.1;
        return 0.9;  // a and c tie
    };
    const auto w = rank::rank_exams(scorer, exams, "test");
    REQUIRE(w.entries.size() == 3);
    CHECK(w.entries[0].exam_id == "a");
    CHECK(w.entries[1].exam_id == "c");
    CHECK(w.entries[2].exam_id == "b");

    const auto single = rank::rank_exams(scorer, std::vector<const Exam*>{&a}, "t");
    CHECK(single.entries.size() == 1);
    const auto empty = rank::rank_exams(scorer, std::vector<const Exam*>{}, "t");
    CHECK(empty.entries.empty());
}

TEST_CASE("rank_exams output is a permutation with non-increasing scores") {
    rng::Random rng(18);
    std::vector<Exam> exams;
    for (int i = 0; i < 50; ++i)
        exams.push_back(make_exam("e" + std::to_string(i), {rng.uniform(-1, 1)}));
    std::vector<const Exam*> ptrs;
    for (const Exam& e : exams) ptrs.push_back(&e);
    const rank::Scorer scorer = [](const Exam& e) {
        return numerics::sigmoid(e.images[0][0]);
    };
    const auto w = rank::rank_exams(scorer, ptrs, "t");
    REQUIRE(w.entries.size() == 50);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < w.entries.size(); ++i) {
        seen.insert(w.entries[i].exam_id);
        if (i > 0) CHECK(w.entries[i - 1].score >= w.entries[i].score);
    }
    CHECK(seen.size() == 50);

    // Argsort invariance: a strictly increasing transform preserves order.
    const rank::Scorer transformed = [&scorer](const Exam& e) {
        return 2.0 * scorer(e) + 0.25;
    };
    const auto w2 = rank::rank_exams(transformed, ptrs, "t");
    for (std::size_t i = 0; i < w.entries.size(); ++i)
        CHECK(w.entries[i].exam_id == w2.entries[i].exam_id);
}

TEST_CASE("top_k prefixes") {
    const Exam a = make_exam("a", {1}), b = make_exam("b", {2}), c = make_exam("c", {3});
    const rank::Scorer scorer = [](const Exam& e) { return e.images[0][0] / 10.0; };
    const auto w = rank::rank_exams(scorer, std::vector<const Exam*>{&a, &b, &c}, "t");
    CHECK(rank::top_k(w, 0).empty());
    CHECK(rank::top_k(w, 10).size() == 3);
    for (std::size_t j = 0; j <= 3; ++j) {
        const auto pj = rank::top_k(w, j);
        const auto pk = rank::top_k(w, 3);
        CHECK(std::equal(pj.begin(), pj.end(), pk.begin()));
    }
}

TEST_CASE("tag_relevance_score matches the brute-force oracle") {
    TagVocabulary g50([] {
        std::vector<std::string> t;
        for (int i = 0; i < 50; ++i) t.push_back("t" + std::to_string(i));
        return t;
    }());
    CHECK(rank::tag_relevance_score(std::vector<std::string>{"t1", "t2"}, g50) == doctest::Approx(0.04));
    CHECK(rank::tag_relevance_score(std::vector<std::string>{}, g50) == doctest::Approx(0.0));

    TagVocabulary g10([] {
        std::vector<std::string> t;
        for (int i = 0; i < 10; ++i) t.push_back("t" + std::to_string(i));
        return t;
    }());
    CHECK(rank::tag_relevance_score(std::vector<std::string>{"t1", "t2", "zzz"}, g10) ==
          doctest::Approx(0.2));

    CHECK_THROWS(rank::tag_relevance_score(std::vector<std::string>{"a"}, TagVocabulary{}));

    rng::Random rng(19);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::string> universe;
        const std::size_t g_size = 1 + rng.uniform_index(12);
        for (std::size_t i = 0; i < g_size; ++i) universe.push_back("g" + std::to_string(i));
        TagVocabulary g(universe);
        std::vector<std::string> t;
        const std::size_t t_size = rng.uniform_index(8);
        for (std::size_t i = 0; i < t_size; ++i) {
            if (rng.uniform() < 0.5 && !universe.empty())
                t.push_back(universe[rng.uniform_index(universe.size())]);
            else
                t.push_back("unknown" + std::to_string(rng.uniform_index(5)));
        }
        CHECK(rank::tag_relevance_score(t, g) == doctest::Approx(oracles::tag_relevance_brute(t, universe)));
    }
}

TEST_CASE("baseline_rank: determinism and normal-neighbor zero score") {
    const Corpus c = synth_corpus(23, 60, 4, 1, 3, 0.5);
    const auto test_exams = c.split_exams(Split::test);

    const auto w1 = rank::baseline_rank(rank::BaselineMethod::random, c, test_exams, 3, 99);
    const auto w2 = rank::baseline_rank(rank::BaselineMethod::random, c, test_exams, 3, 99);
    REQUIRE(w1.entries.size() == w2.entries.size());
    for (std::size_t i = 0; i < w1.entries.size(); ++i) {
        CHECK(w1.entries[i].exam_id == w2.entries[i].exam_id);
        CHECK(w1.entries[i].score == w2.entries[i].score);
    }

    // A query identical to a normal training exam gets tag-relevance score 0 via nn1.
    const auto train = c.split_exams(Split::train);
    const Exam* normal_train = nullptr;
    for (const Exam* e : train)
        if (!e->abnormal) normal_train = e;
    REQUIRE(normal_train != nullptr);
    Exam probe = *normal_train;
    probe.exam_id = "zz-probe";
    const auto w3 = rank::baseline_rank(rank::BaselineMethod::nn1, c,
                                        std::vector<const Exam*>{&probe}, 1, 0);
    REQUIRE(w3.entries.size() == 1);
    CHECK(w3.entries[0].score == doctest::Approx(0.0));
}

TEST_CASE("nn1 ranking beats random on average over 20 seeds") {
    const Corpus c = synth_corpus(47, 200, 6, 2, 4, 0.5);
    const auto test_exams = c.split_exams(Split::test);
    const auto relevance_of = [&](const rank::RankedWorklist& w) {
        std::vector<int> rel;
        for (const auto& entry : w.entries)
            rel.push_back(c.find(entry.exam_id)->abnormal ? 1 : 0);
        return rel;
    };
    const auto nn1 = rank::baseline_rank(rank::BaselineMethod::nn1, c, test_exams, 1, 0);
    const auto nn1_rel = relevance_of(nn1);
    const double nn1_ndcg = metrics::ndcg_at_k(nn1_rel, 20);
    double random_sum = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto w = rank::baseline_rank(rank::BaselineMethod::random, c, test_exams, 1, seed);
        const auto rel = relevance_of(w);
        random_sum += metrics::ndcg_at_k(rel, 20);
    }
    CHECK(nn1_ndcg > random_sum / 20.0);
}

TEST_CASE("trained head separates the synthetic classes") {
    const Corpus c = synth_corpus(7, 400, 8, 2, 4, 0.5);
    numerics::TrainConfig cfg;
    cfg.max_epochs = 100;
    cfg.lr = 5e-3;
    numerics::TrainLog log;
    const auto head = rank::train_binary_head(c, cfg, 7, &log);

    // Determinism: bitwise identical weights on a re-run.
    const auto head2 = rank::train_binary_head(c, cfg, 7, nullptr);
    CHECK(head.stack.layers[0].weight.data == head2.stack.layers[0].weight.data);
    CHECK(head.stack.layers[0].bias == head2.stack.layers[0].bias);

    double abnormal_mean = 0.0, normal_mean = 0.0;
    std::size_t na = 0, nn = 0, correct = 0, total = 0;
    for (const Exam* e : c.split_exams(Split::val)) {
        const double s = rank::score_exam(head, *e);
        if (e->abnormal) {
            abnormal_mean += s;
            ++na;
        } else {
            normal_mean += s;
            ++nn;
        }
        correct += (s > 0.5) == e->abnormal ? 1 : 0;
        ++total;
    }
    CHECK(abnormal_mean / na > normal_mean / nn);
    CHECK(static_cast<double>(correct) / total >= 0.95);
}

TEST_CASE("train_binary_head rejects single-class training splits") {
    Corpus c = synth_corpus(29, 40, 4, 1, 3, 0.5);
    for (Exam& e : c.exams)
        if (e.split == Split::train) {
            e.tags.clear();
            e.abnormal = false;
        }
    numerics::TrainConfig cfg;
    CHECK_THROWS(rank::train_binary_head(c, cfg, 0));
}
