#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "triage/kernels.hpp"
#include "triage/rng.hpp"

using namespace triage;

namespace {

std::vector<double> random_vec(rng::Random& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

double abs_bound(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 1e-30;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
    return s;
}

}  // namespace

TEST_CASE("scalar kernels match the naive oracles") {
    rng::Random rng(11);
    const auto& k = kernels::table(kernels::Isa::scalar);
    for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{8},
                          std::size_t{17}, std::size_t{100}}) {
        const auto a = random_vec(rng, n);
        const auto b = random_vec(rng, n);
        CHECK(k.dot(a.data(), b.data(), n) ==
              doctest::Approx(oracles::naive_dot(a, b)).epsilon(1e-12));
        CHECK(k.sum_squares(a.data(), n) ==
              doctest::Approx(oracles::naive_dot(a, a)).epsilon(1e-12));
    }
}

TEST_CASE("avx2 kernels agree with scalar on every tail length") {
    if (!kernels::avx2_available()) return;  // nothing to compare on this machine
    rng::Random rng(12);
    const auto& scalar = kernels::table(kernels::Isa::scalar);
    const auto& avx2 = kernels::table(kernels::Isa::avx2);
    for (std::size_t n = 0; n <= 35; ++n) {
        const auto a = random_vec(rng, n);
        const auto b = random_vec(rng, n);
        const double tol = 1e-12 * abs_bound(a, b);
        CHECK(std::abs(scalar.dot(a.data(), b.data(), n) - avx2.dot(a.data(), b.data(), n)) <=
              tol);
        CHECK(std::abs(scalar.sum_squares(a.data(), n) - avx2.sum_squares(a.data(), n)) <=
              1e-12 * abs_bound(a, a));
        std::vector<double> y1 = random_vec(rng, n), y2 = y1;
        scalar.axpy(0.37, a.data(), y1.data(), n);
        avx2.axpy(0.37, a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-12));
    }
    // Long vectors exercise the unrolled main loop.
    const auto a = random_vec(rng, 2048);
    const auto b = random_vec(rng, 2048);
    CHECK(std::abs(scalar.dot(a.data(), b.data(), 2048) - avx2.dot(a.data(), b.data(), 2048)) <=
          1e-11 * abs_bound(a, b));
}

TEST_CASE("matvec and matvec_t_accum match naive loops") {
    rng::Random rng(13);
    const std::size_t rows = 7, cols = 19;
    std::vector<std::vector<double>> m(rows);
    std::vector<double> flat;
    for (auto& r : m) {
        r = random_vec(rng, cols);
        flat.insert(flat.end(), r.begin(), r.end());
    }
    const auto x = random_vec(rng, cols);
    std::vector<double> y(rows);
    kernels::matvec(flat.data(), rows, cols, x.data(), y.data());
    const auto expect = oracles::naive_matvec(m, x);
    for (std::size_t r = 0; r < rows; ++r)
        CHECK(y[r] == doctest::Approx(expect[r]).epsilon(1e-12));

    const auto v = random_vec(rng, rows);
    std::vector<double> yt(cols, 0.0);
    kernels::matvec_t_accum(flat.data(), rows, cols, v.data(), yt.data());
    for (std::size_t c = 0; c < cols; ++c) {
        double want = 0.0;
        for (std::size_t r = 0; r < rows; ++r) want += m[r][c] * v[r];
        CHECK(yt[c] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("matmul_nt equals row-by-row dot products") {
    rng::Random rng(14);
    const std::size_t mr = 5, nr = 6, k = 33;
    const auto a = random_vec(rng, mr * k);
    const auto b = random_vec(rng, nr * k);
    std::vector<double> c(mr * nr);
    kernels::matmul_nt(a.data(), mr, b.data(), nr, k, c.data());
    for (std::size_t i = 0; i < mr; ++i)
        for (std::size_t j = 0; j < nr; ++j) {
            double want = 0.0;
            for (std::size_t t = 0; t < k; ++t) want += a[i * k + t] * b[j * k + t];
            CHECK(c[i * nr + j] == doctest::Approx(want).epsilon(1e-10));
        }
}

TEST_CASE("kernel selection reports what it uses and rejects the unavailable") {
    kernels::select(kernels::Isa::scalar);
    CHECK(kernels::active() == kernels::Isa::scalar);
    if (kernels::avx2_available()) {
        kernels::select(kernels::Isa::avx2);
        CHECK(kernels::active() == kernels::Isa::avx2);
    } else {
        CHECK_THROWS(kernels::select(kernels::Isa::avx2));
    }
    kernels::select_auto();
    CHECK(kernels::isa_name(kernels::active()).size() > 0);
}
