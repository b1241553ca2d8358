#pragma once

#include <array>
#include <cmath>

// Forward-mode second-order automatic differentiation over a fixed, small
// number of variables.  Used for the per-interval terms of the trajectory
// transcription, which depend on four local unknowns.
namespace rdmm::ad {

template <int N>
struct Jet {
  double v = 0.0;
  std::array<double, N> g{};
  std::array<std::array<double, N>, N> h{};

  Jet() = default;
  Jet(double value) : v(value) {}  // NOLINT: constants convert implicitly

  static Jet variable(double value, int index, double scale = 1.0) {
    Jet j(value);
    j.g[index] = scale;
    return j;
  }
};

// Applies a scalar function with derivatives (f, f', f'') to a jet.
template <int N>
Jet<N> chain(const Jet<N>& a, double f, double df, double d2f) {
  Jet<N> r(f);
  for (int i = 0; i < N; ++i) r.g[i] = df * a.g[i];
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) r.h[i][j] = df * a.h[i][j] + d2f * a.g[i] * a.g[j];
  return r;
}

template <int N>
Jet<N> operator+(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r(a.v + b.v);
  for (int i = 0; i < N; ++i) {
    r.g[i] = a.g[i] + b.g[i];
    for (int j = 0; j < N; ++j) r.h[i][j] = a.h[i][j] + b.h[i][j];
  }
  return r;
}

template <int N>
Jet<N> operator-(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r(a.v - b.v);
  for (int i = 0; i < N; ++i) {
    r.g[i] = a.g[i] - b.g[i];
    for (int j = 0; j < N; ++j) r.h[i][j] = a.h[i][j] - b.h[i][j];
  }
  return r;
}

template <int N>
Jet<N> operator-(const Jet<N>& a) {
  return Jet<N>(0.0) - a;
}

template <int N>
Jet<N> operator*(const Jet<N>& a, const Jet<N>& b) {
  Jet<N> r(a.v * b.v);
  for (int i = 0; i < N; ++i) r.g[i] = a.v * b.g[i] + b.v * a.g[i];
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      r.h[i][j] = a.v * b.h[i][j] + b.v * a.h[i][j] + a.g[i] * b.g[j] + a.g[j] * b.g[i];
  return r;
}

template <int N>
Jet<N> operator*(double s, const Jet<N>& a) {
  Jet<N> r(s * a.v);
  for (int i = 0; i < N; ++i) {
    r.g[i] = s * a.g[i];
    for (int j = 0; j < N; ++j) r.h[i][j] = s * a.h[i][j];
  }
  return r;
}

template <int N>
Jet<N> operator*(const Jet<N>& a, double s) {
  return s * a;
}

template <int N>
Jet<N> operator/(const Jet<N>& a, double s) {
  return (1.0 / s) * a;
}

template <int N>
Jet<N> reciprocal(const Jet<N>& a) {
  const double inv = 1.0 / a.v;
  return chain(a, inv, -inv * inv, 2.0 * inv * inv * inv);
}

template <int N>
Jet<N> operator/(const Jet<N>& a, const Jet<N>& b) {
  return a * reciprocal(b);
}

template <int N>
Jet<N> operator+(const Jet<N>& a, double s) {
  Jet<N> r = a;
  r.v += s;
  return r;
}

template <int N>
Jet<N> operator+(double s, const Jet<N>& a) {
  return a + s;
}

template <int N>
Jet<N> operator-(const Jet<N>& a, double s) {
  return a + (-s);
}

template <int N>
Jet<N> operator-(double s, const Jet<N>& a) {
  return (-a) + s;
}

template <int N>
Jet<N> sin(const Jet<N>& a) {
  const double s = std::sin(a.v);
  return chain(a, s, std::cos(a.v), -s);
}

template <int N>
Jet<N> cos(const Jet<N>& a) {
  const double c = std::cos(a.v);
  return chain(a, c, -std::sin(a.v), -c);
}

template <int N>
Jet<N> sqrt(const Jet<N>& a) {
  const double r = std::sqrt(a.v);
  return chain(a, r, 0.5 / r, -0.25 / (r * a.v));
}

template <int N>
Jet<N> exp(const Jet<N>& a) {
  const double e = std::exp(a.v);
  return chain(a, e, e, e);
}

inline double logistic(double a);

/// 1 / (1 + exp(-a)), evaluated without overflow.
template <int N>
Jet<N> logistic(const Jet<N>& a) {
  const double s = logistic(a.v);
  const double d1 = s * (1.0 - s);
  return chain(a, s, d1, d1 * (1.0 - 2.0 * s));
}

inline double logistic(double a) {
  return a >= 0.0 ? 1.0 / (1.0 + std::exp(-a)) : std::exp(a) / (1.0 + std::exp(a));
}

inline double value_of(double a) { return a; }

template <int N>
double value_of(const Jet<N>& a) {
  return a.v;
}

}  // namespace rdmm::ad
