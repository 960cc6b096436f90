#pragma once

#include <cstddef>
#include <string_view>

namespace triage::kernels {

// Instruction set backing the arithmetic kernels. Selection happens once at
// startup (auto-detected) and can be forced via select(), e.g. from the
// --simd flag or from the equivalence tests.
enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// True when AVX2+FMA kernels are compiled in and supported by this CPU.
bool avx2_available();

// Force a kernel set. Throws std::runtime_error if unavailable.
void select(Isa isa);
// Pick the best available set (AVX2 when possible).
void select_auto();
Isa active();

struct KernelTable {
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum_squares)(const double*, std::size_t);
    // y += alpha * x
    void (*axpy)(double, const double*, double*, std::size_t);
};

// Kernel table for an explicit ISA, independent of the active selection.
// Throws std::runtime_error if the ISA is unavailable.
const KernelTable& table(Isa isa);

double dot(const double* a, const double* b, std::size_t n);
double sum_squares(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// y = A x, A row-major (rows x cols).
void matvec(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y);
// y += A^T x, A row-major (rows x cols); x has `rows` entries, y has `cols`.
void matvec_t_accum(const double* a, std::size_t rows, std::size_t cols, const double* x,
                    double* y);
// C = A B^T with A (m x k), B (n x k), C (m x n), all row-major.
void matmul_nt(const double* a, std::size_t m, const double* b, std::size_t n, std::size_t k,
               double* c);

}  // namespace triage::kernels
