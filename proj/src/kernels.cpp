#include "mela/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mela::kern {

namespace {

// Row-level inner products; one call produces one output element, so the
// accumulation order inside an element never depends on the thread count.
inline double dot_rows(const double* a, const double* b, std::size_t k) {
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += a[i] * b[i];
  return acc;
}

inline bool parallel_worthwhile(std::size_t work) {
#ifdef _OPENMP
  return work >= kParallelMinWork && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

// ---------------------------------------------------------------- matmul_nn

void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m, bool accumulate) {
  for (std::size_t r = 0; r < n; ++r) {
    double* crow = c + r * m;
    if (!accumulate) {
      for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
    }
    const double* arow = a + r * k;
    for (std::size_t i = 0; i < k; ++i) {
      const double av = arow[i];
      const double* brow = b + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m, bool accumulate) {
  if (!parallel_worthwhile(n * k * m)) {
    matmul_nn_serial(a, b, c, n, k, m, accumulate);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
    matmul_nn_serial(a + r * k, b, c + r * m, 1, k, m, accumulate);
  }
#endif
}

// ---------------------------------------------------------------- matmul_nt

void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m, bool accumulate) {
  for (std::size_t r = 0; r < n; ++r) {
    const double* arow = a + r * k;
    double* crow = c + r * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double v = dot_rows(arow, b + j * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m, bool accumulate) {
  if (!parallel_worthwhile(n * k * m)) {
    matmul_nt_serial(a, b, c, n, k, m, accumulate);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
    matmul_nt_serial(a + r * k, b, c + r * m, 1, k, m, accumulate);
  }
#endif
}

// ---------------------------------------------------------------- matmul_tn

void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t n, std::size_t k, std::size_t m, bool accumulate) {
  for (std::size_t r = 0; r < n; ++r) {
    double* crow = c + r * m;
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += a[i * n + r] * b[i * m + j];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m, bool accumulate) {
  if (!parallel_worthwhile(n * k * m)) {
    matmul_tn_serial(a, b, c, n, k, m, accumulate);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
    double* crow = c + r * m;
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += a[i * n + r] * b[i * m + j];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
#endif
}

// --------------------------------------------------------------- activation

void leaky_relu_serial(const double* x, double* y, std::size_t n, double slope) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
}

void leaky_relu(const double* x, double* y, std::size_t n, double slope) {
  if (!parallel_worthwhile(n)) {
    leaky_relu_serial(x, y, n, slope);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    y[i] = x[i] > 0.0 ? x[i] : slope * x[i];
#endif
}

void leaky_relu_grad_serial(const double* x, const double* g, double* dx,
                            std::size_t n, double slope) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += g[i] * (x[i] >= 0.0 ? 1.0 : slope);
}

void leaky_relu_grad(const double* x, const double* g, double* dx,
                     std::size_t n, double slope) {
  if (!parallel_worthwhile(n)) {
    leaky_relu_grad_serial(x, g, dx, n, slope);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
    dx[i] += g[i] * (x[i] >= 0.0 ? 1.0 : slope);
#endif
}

// --------------------------------------------------------------------- bias

void add_bias_serial(const double* x, const double* bias, double* y,
                     std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * cols;
    double* yr = y + r * cols;
    for (std::size_t c = 0; c < cols; ++c) yr[c] = xr[c] + bias[c];
  }
}

void add_bias(const double* x, const double* bias, double* y,
              std::size_t rows, std::size_t cols) {
  if (!parallel_worthwhile(rows * cols)) {
    add_bias_serial(x, bias, y, rows, cols);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
    add_bias_serial(x + r * cols, bias, y + r * cols, 1, cols);
#endif
}

void bias_grad_serial(const double* g, double* db, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* gr = g + r * cols;
    for (std::size_t c = 0; c < cols; ++c) db[c] += gr[c];
  }
}

void add_into_serial(const double* src, double* dst, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

// --------------------------------------------------------------------- adam

void adam_update_serial(double* param, const double* grad, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double corr1, double corr2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = m[i] / corr1;
    const double vhat = v[i] / corr2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void adam_update(double* param, const double* grad, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double corr1, double corr2) {
  if (!parallel_worthwhile(n)) {
    adam_update_serial(param, grad, m, v, n, lr, beta1, beta2, eps, corr1, corr2);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    const double mhat = m[i] / corr1;
    const double vhat = v[i] / corr2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
#endif
}

}  // namespace mela::kern
