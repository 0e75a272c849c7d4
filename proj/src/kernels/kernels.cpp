#include "solo/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace solo::kernels {

namespace {

struct Dispatch {
  double (*dot_f64)(const double*, const double*, std::size_t);
  void (*axpy_f64)(double, const double*, double*, std::size_t);
  void (*axpy_f32)(float, const float*, float*, std::size_t);
  double (*sum_squares_f32)(const float*, std::size_t);
  double (*sum_squares_f64)(const double*, std::size_t);
  void (*scale_f32)(float*, std::size_t, float);
  float (*peak_abs_f32)(const float*, std::size_t);
};

constexpr Dispatch kScalar = {
    scalar::dot,  scalar::axpy, scalar::axpy,    scalar::sum_squares,
    scalar::sum_squares, scalar::scale, scalar::peak_abs,
};

#if defined(__x86_64__) || defined(_M_X64)
constexpr Dispatch kAvx2 = {
    avx2::dot,  avx2::axpy, avx2::axpy,    avx2::sum_squares,
    avx2::sum_squares, avx2::scale, avx2::peak_abs,
};
#endif

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return avx2::supported();
#else
  return false;
#endif
}

Backend default_backend() {
  const char* env = std::getenv("SOLO_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::Avx2;
    // "auto" or anything unrecognized falls through to detection
  }
  return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

struct State {
  Backend backend;
  const Dispatch* table;
};

State make_state(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
  if (b == Backend::Avx2) return {Backend::Avx2, &kAvx2};
#endif
  return {Backend::Scalar, &kScalar};
}

State& state() {
  static State s = make_state(default_backend());
  return s;
}

}  // namespace

Backend active_backend() { return state().backend; }

std::string backend_name() {
  switch (state().backend) {
    case Backend::Avx2:
      return "avx2";
    case Backend::Scalar:
    default:
      return "scalar";
  }
}

bool set_backend(Backend b) {
  if (b == Backend::Avx2 && !avx2_supported()) return false;
  state() = make_state(b);
  return true;
}

void reset_backend() { state() = make_state(default_backend()); }

double dot(const double* a, const double* b, std::size_t n) {
  return state().table->dot_f64(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  state().table->axpy_f64(alpha, x, y, n);
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  state().table->axpy_f32(alpha, x, y, n);
}

double sum_squares(const float* x, std::size_t n) {
  return state().table->sum_squares_f32(x, n);
}

double sum_squares(const double* x, std::size_t n) {
  return state().table->sum_squares_f64(x, n);
}

void scale(float* x, std::size_t n, float g) { state().table->scale_f32(x, n, g); }

float peak_abs(const float* x, std::size_t n) {
  return state().table->peak_abs_f32(x, n);
}

}  // namespace solo::kernels
