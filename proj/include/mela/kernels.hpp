#pragma once

#include <cstddef>
#include <cstdint>

// Dense double-precision kernels behind the tape ops and the optimizer.
//
// Each kernel comes in two flavors: a plain serial reference (*_serial) and
// a dispatching version that spreads rows across OpenMP threads once the
// flop count crosses kParallelMinWork. Work is partitioned so every output
// element is accumulated by exactly one thread in the same order as the
// serial code, which keeps results bitwise identical for any thread count.
namespace mela::kern {

inline constexpr std::size_t kParallelMinWork = 1u << 15;

// c = a(n x k) * b(k x m), or c += ... when accumulate is set.
void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m, bool accumulate);
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m, bool accumulate);

// c = a(n x k) * b(m x k)^T -> n x m.
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m, bool accumulate);

// c = a(k x n)^T * b(k x m) -> n x m.
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m, bool accumulate);

// y[i] = x[i] > 0 ? x[i] : slope * x[i].
void leaky_relu_serial(const double* x, double* y, std::size_t n, double slope);
void leaky_relu(const double* x, double* y, std::size_t n, double slope);

// dx[i] += g[i] * (x[i] >= 0 ? 1 : slope). Derivative at exactly 0 is 1.
void leaky_relu_grad_serial(const double* x, const double* g, double* dx,
                            std::size_t n, double slope);
void leaky_relu_grad(const double* x, const double* g, double* dx,
                     std::size_t n, double slope);

// y[r, c] = x[r, c] + bias[c].
void add_bias_serial(const double* x, const double* bias, double* y,
                     std::size_t rows, std::size_t cols);
void add_bias(const double* x, const double* bias, double* y,
              std::size_t rows, std::size_t cols);

// db[c] += sum over rows of g[r, c].
void bias_grad_serial(const double* g, double* db, std::size_t rows, std::size_t cols);

// dst[i] += src[i].
void add_into_serial(const double* src, double* dst, std::size_t n);

// One fused Adam update over a flat parameter block.
// corr1/corr2 are the step-dependent bias corrections 1 - beta^t.
void adam_update_serial(double* param, const double* grad, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double corr1, double corr2);
void adam_update(double* param, const double* grad, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double corr1, double corr2);

}  // namespace mela::kern
