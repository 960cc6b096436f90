#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "triage/retrieve.hpp"

using namespace triage;

namespace {

Exam make_exam(std::string id, std::vector<double> img, std::vector<std::string> tags = {},
               std::string report = "") {
    Exam e;
    e.exam_id = std::move(id);
    e.images = {std::move(img)};
    e.tags = std::move(tags);
    std::sort(e.tags.begin(), e.tags.end());
    e.abnormal = !e.tags.empty();
    e.report = std::move(report);
    return e;
}

}  // namespace

TEST_CASE("build_index normalizes rows and buckets canonical tag sets") {
    const Exam a = make_exam("a", {3, 4}, {"x", "y"});
    const Exam b = make_exam("b", {0, 5}, {"y", "x"});
    const auto index = retrieve::build_index(std::vector<const Exam*>{&a, &b});
    CHECK(index.rows(0, 0) == doctest::Approx(0.6));
    CHECK(index.rows(0, 1) == doctest::Approx(0.8));
    CHECK(index.rows(1, 0) == doctest::Approx(0.0));
    CHECK(index.rows(1, 1) == doctest::Approx(1.0));
    // {x,y} and {y,x} share one bucket.
    CHECK(index.tag_set_buckets.size() == 1);
    CHECK(index.tag_set_buckets.begin()->second.size() == 2);

    const Exam zero = make_exam("z", {0, 0});
    CHECK_THROWS_WITH_AS(retrieve::build_index(std::vector<const Exam*>{&zero}),
                         doctest::Contains("z"), std::invalid_argument);
}

TEST_CASE("bucket sizes partition the index") {
    const Corpus c = synth_corpus(51, 120, 6, 2, 4, 0.5);
    const auto train = c.split_exams(Split::train);
    const auto index = retrieve::build_index(train);
    std::size_t total = 0;
    for (const auto& [key, rows] : index.tag_set_buckets) total += rows.size();
    CHECK(total == train.size());
    // Row norms are 1 within 1e-6.
    for (std::size_t r = 0; r < index.size(); ++r) {
        double sq = 0.0;
        for (std::size_t cidx = 0; cidx < index.rows.cols; ++cidx)
            sq += index.rows(r, cidx) * index.rows(r, cidx);
        CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-6);
    }
}

TEST_CASE("similarities: identity, orthogonality, naive oracle, input checks") {
    const Exam a = make_exam("a", {1, 0}), b = make_exam("b", {0, 1});
    const auto index = retrieve::build_index(std::vector<const Exam*>{&a, &b});
    const Vec q{1.0, 0.0};
    const Vec sims = retrieve::similarities(index, q);
    CHECK(sims[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sims[1] == doctest::Approx(0.0).epsilon(1e-6));

    CHECK_THROWS(retrieve::similarities(index, Vec{1, 0, 0}));     // dimension
    CHECK_THROWS(retrieve::similarities(index, Vec{2.0, 0.0}));    // not unit norm

    // Random index vs naive per-row dot products.
    rng::Random rng(52);
    std::vector<Exam> exams;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> v(64);
        for (double& x : v) x = rng.gaussian();
        exams.push_back(make_exam("e" + std::to_string(i), std::move(v)));
    }
    std::vector<const Exam*> ptrs;
    for (const Exam& e : exams) ptrs.push_back(&e);
    const auto big = retrieve::build_index(ptrs);
    Exam probe = make_exam("probe", [&] {
        std::vector<double> v(64);
        for (double& x : v) x = rng.gaussian();
        return v;
    }());
    const Vec q2 = retrieve::normalized_query(probe);
    const Vec got = retrieve::similarities(big, q2);
    for (std::size_t r = 0; r < big.size(); ++r) {
        std::vector<double> row(big.rows.row(r), big.rows.row(r) + 64);
        CHECK(std::abs(got[r] - oracles::naive_dot(row, q2)) <= 1e-6);
        CHECK(got[r] >= -1.0 - 1e-6);
        CHECK(got[r] <= 1.0 + 1e-6);
    }
}

TEST_CASE("similarities are invariant to positive rescaling of the raw query") {
    rng::Random rng(53);
    std::vector<Exam> exams;
    for (int i = 0; i < 20; ++i) {
        std::vector<double> v(8);
        for (double& x : v) x = rng.gaussian();
        exams.push_back(make_exam("e" + std::to_string(i), std::move(v)));
    }
    std::vector<const Exam*> ptrs;
    for (const Exam& e : exams) ptrs.push_back(&e);
    const auto index = retrieve::build_index(ptrs);

    Exam probe = exams[0];
    probe.exam_id = "probe";
    Exam scaled = probe;
    for (auto& img : scaled.images)
        for (double& x : img) x *= 37.5;
    const Vec s1 = retrieve::similarities(index, retrieve::normalized_query(probe));
    const Vec s2 = retrieve::similarities(index, retrieve::normalized_query(scaled));
    for (std::size_t i = 0; i < s1.size(); ++i)
        CHECK(s1[i] == doctest::Approx(s2[i]).epsilon(1e-12));
}

TEST_CASE("retrieve_1nn matches the exhaustive scan with id tie-breaks") {
    rng::Random rng(54);
    std::vector<Exam> exams;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> v(6);
        for (double& x : v) x = rng.gaussian();
        exams.push_back(make_exam("e" + std::to_string(i), std::move(v)));
    }
    std::vector<const Exam*> ptrs;
    for (const Exam& e : exams) ptrs.push_back(&e);
    const auto index = retrieve::build_index(ptrs);

    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(6);
        for (double& x : v) x = rng.gaussian();
        const Exam probe = make_exam("probe", std::move(v));
        const auto got = retrieve::retrieve_1nn(index, probe);
        const Vec q = retrieve::normalized_query(probe);
        const Vec sims = retrieve::similarities(index, q);
        std::size_t best = 0;
        for (std::size_t r = 1; r < sims.size(); ++r)
            if (sims[r] > sims[best] ||
                (sims[r] == sims[best] && index.ids[r] < index.ids[best]))
                best = r;
        CHECK(got.exam_id == index.ids[best]);
        CHECK(got.similarity == doctest::Approx(sims[best]));
    }

    // Query identical to a stored exam retrieves it with similarity 1.
    const auto self = retrieve::retrieve_1nn(index, exams[7]);
    CHECK(self.exam_id == "e7");
    CHECK(self.similarity == doctest::Approx(1.0).epsilon(1e-6));

    // Singleton index returns its only exam for any query.
    const auto tiny = retrieve::build_index(std::vector<const Exam*>{&exams[0]});
    CHECK(retrieve::retrieve_1nn(tiny, exams[5]).exam_id == exams[0].exam_id);
}

TEST_CASE("retrieve_1nn_plus constrains to the tag bucket with fallback") {
    const Exam e1 = make_exam("e1", {1, 0}, {"y"}, "report-e1");
    const Exam e2 = make_exam("e2", {0, 1}, {"x"}, "report-e2");
    const auto index = retrieve::build_index(std::vector<const Exam*>{&e1, &e2});

    Exam probe = make_exam("q", {1, 0});
    const auto constrained =
        retrieve::retrieve_1nn_plus(index, probe, std::vector<std::string>{"x"});
    CHECK(constrained.exam_id == "e2");  // bucket forces e2 despite e1 being nearer
    CHECK(constrained.constrained);
    CHECK(constrained.report == "report-e2");

    const auto fallback =
        retrieve::retrieve_1nn_plus(index, probe, std::vector<std::string>{"zzz"});
    CHECK(fallback.exam_id == "e1");  // whole-index nearest
    CHECK_FALSE(fallback.constrained);
}

TEST_CASE("1nn_plus equals 1nn on the explicit bucket subindex") {
    rng::Random rng(55);
    const std::vector<std::string> tag_pool{"a", "b", "c"};
    std::vector<Exam> exams;
    for (int i = 0; i < 60; ++i) {
        std::vector<double> v(5);
        for (double& x : v) x = rng.gaussian();
        std::vector<std::string> tags;
        for (const auto& t : tag_pool)
            if (rng.uniform() < 0.5) tags.push_back(t);
        exams.push_back(make_exam("e" + std::to_string(i), std::move(v), std::move(tags),
                                  "r" + std::to_string(i)));
    }
    std::vector<const Exam*> ptrs;
    for (const Exam& e : exams) ptrs.push_back(&e);
    const auto index = retrieve::build_index(ptrs);

    std::size_t constrained_hits = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> v(5);
        for (double& x : v) x = rng.gaussian();
        const Exam probe = make_exam("probe", std::move(v));
        std::vector<std::string> want_tags;
        for (const auto& t : tag_pool)
            if (rng.uniform() < 0.5) want_tags.push_back(t);

        const auto got = retrieve::retrieve_1nn_plus(index, probe, want_tags);
        const auto bucket = index.tag_set_buckets.find(retrieve::tag_set_key(want_tags));
        if (bucket == index.tag_set_buckets.end()) {
            CHECK_FALSE(got.constrained);
            CHECK(got.exam_id == retrieve::retrieve_1nn(index, probe).exam_id);
            continue;
        }
        ++constrained_hits;
        CHECK(got.constrained);
        // Build the bucket's subindex explicitly and run plain 1nn on it.
        std::vector<const Exam*> sub;
        for (std::size_t row : bucket->second) sub.push_back(ptrs[row]);
        const auto subindex = retrieve::build_index(sub);
        const auto direct = retrieve::retrieve_1nn(subindex, probe);
        CHECK(got.exam_id == direct.exam_id);
        CHECK(got.similarity == doctest::Approx(direct.similarity).epsilon(1e-9));
        // The constrained neighbor carries exactly the requested tag set.
        const Exam* found = nullptr;
        for (const Exam& e : exams)
            if (e.exam_id == got.exam_id) found = &e;
        REQUIRE(found != nullptr);
        std::vector<std::string> sorted_want = want_tags;
        std::sort(sorted_want.begin(), sorted_want.end());
        CHECK(found->tags == sorted_want);
    }
    CHECK(constrained_hits > 0);
}

TEST_CASE("batch similarities equal per-query products") {
    rng::Random rng(56);
    std::vector<Exam> exams;
    for (int i = 0; i < 30; ++i) {
        std::vector<double> v(16);
        for (double& x : v) x = rng.gaussian();
        exams.push_back(make_exam("e" + std::to_string(i), std::move(v)));
    }
    std::vector<const Exam*> ptrs;
    for (const Exam& e : exams) ptrs.push_back(&e);
    const auto index = retrieve::build_index(ptrs);

    Mat queries(4, 16);
    for (std::size_t qi = 0; qi < 4; ++qi) {
        std::vector<double> v(16);
        for (double& x : v) x = rng.gaussian();
        Exam probe = make_exam("p", std::move(v));
        const Vec q = retrieve::normalized_query(probe);
        std::copy(q.begin(), q.end(), queries.row(qi));
    }
    const Mat batch = retrieve::batch_similarities(index, queries);
    for (std::size_t qi = 0; qi < 4; ++qi) {
        const Vec single =
            retrieve::similarities(index, std::span(queries.row(qi), queries.cols));
        for (std::size_t r = 0; r < index.size(); ++r)
            CHECK(std::abs(batch(qi, r) - single[r]) <= 1e-6);
    }
}
