#include "solo/kernels.hpp"

#include <cmath>

// Reference implementations. Kept deliberately plain: these are the oracles
// the vectorized backends are tested against.

namespace solo::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_squares(const float* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = static_cast<double>(x[i]);
    acc += v * v;
  }
  return acc;
}

double sum_squares(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

void scale(float* x, std::size_t n, float g) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= g;
}

float peak_abs(const float* x, std::size_t n) {
  float peak = 0.0f;
  for (std::size_t i = 0; i < n; ++i) {
    float v = std::fabs(x[i]);
    if (v > peak) peak = v;
  }
  return peak;
}

}  // namespace solo::kernels::scalar
