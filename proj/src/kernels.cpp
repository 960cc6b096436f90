#include "triage/kernels.hpp"

#include <stdexcept>

namespace triage::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double sum_squares_scalar(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

const KernelTable kScalarTable{dot_scalar, sum_squares_scalar, axpy_scalar};

const KernelTable* g_active = nullptr;
Isa g_active_isa = Isa::scalar;

}  // namespace

#if defined(TRIAGE_HAVE_AVX2)
// Defined in kernels_avx2.cpp, compiled with -mavx2 -mfma.
const KernelTable& avx2_table();
#endif

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool avx2_available() {
#if defined(TRIAGE_HAVE_AVX2)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable& table(Isa isa) {
    if (isa == Isa::scalar) return kScalarTable;
#if defined(TRIAGE_HAVE_AVX2)
    if (isa == Isa::avx2 && avx2_available()) return avx2_table();
#endif
    throw std::runtime_error("kernel ISA unavailable on this machine: " +
                             std::string(isa_name(isa)));
}

void select(Isa isa) {
    g_active = &table(isa);
    g_active_isa = isa;
}

void select_auto() {
    select(avx2_available() ? Isa::avx2 : Isa::scalar);
}

namespace {
const KernelTable& active_table() {
    if (g_active == nullptr) select_auto();
    return *g_active;
}
}  // namespace

Isa active() {
    active_table();
    return g_active_isa;
}

double dot(const double* a, const double* b, std::size_t n) {
    return active_table().dot(a, b, n);
}

double sum_squares(const double* a, std::size_t n) {
    return active_table().sum_squares(a, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    active_table().axpy(alpha, x, y, n);
}

void matvec(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
    const KernelTable& k = active_table();
    for (std::size_t r = 0; r < rows; ++r) y[r] = k.dot(a + r * cols, x, cols);
}

void matvec_t_accum(const double* a, std::size_t rows, std::size_t cols, const double* x,
                    double* y) {
    const KernelTable& k = active_table();
    for (std::size_t r = 0; r < rows; ++r) k.axpy(x[r], a + r * cols, y, cols);
}

void matmul_nt(const double* a, std::size_t m, const double* b, std::size_t n, std::size_t k,
               double* c) {
    const KernelTable& t = active_table();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = t.dot(ai, b + j * k, k);
    }
}

}  // namespace triage::kernels
