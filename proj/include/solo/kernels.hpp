#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops used by the DSP and classifier code. Every
// operation has a scalar reference implementation and, on x86-64 with
// AVX2+FMA, a vectorized variant; the active backend is picked once at
// startup (cpuid) and can be overridden with set_backend() or the
// SOLO_KERNELS env var ("auto", "scalar", "avx2").
//
// Reductions accumulate in double regardless of input type, so scalar and
// SIMD backends agree to ~1e-12 relative; they are not bit-identical
// because the summation order differs.

namespace solo::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
std::string backend_name();

// Returns false if the requested backend is unsupported on this CPU
// (the scalar backend is always available).
bool set_backend(Backend b);

// Re-applies the default selection (cpuid + SOLO_KERNELS override).
void reset_backend();

// sum of a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);

// sum of x[i]^2, accumulated in double
double sum_squares(const float* x, std::size_t n);
double sum_squares(const double* x, std::size_t n);

// x[i] *= g, in place
void scale(float* x, std::size_t n, float g);

// max |x[i]|; 0 for empty input
float peak_abs(const float* x, std::size_t n);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
double sum_squares(const float* x, std::size_t n);
double sum_squares(const double* x, std::size_t n);
void scale(float* x, std::size_t n, float g);
float peak_abs(const float* x, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
bool supported();  // runtime cpuid check
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void axpy(float alpha, const float* x, float* y, std::size_t n);
double sum_squares(const float* x, std::size_t n);
double sum_squares(const double* x, std::size_t n);
void scale(float* x, std::size_t n, float g);
float peak_abs(const float* x, std::size_t n);
}  // namespace avx2
#endif

}  // namespace solo::kernels
