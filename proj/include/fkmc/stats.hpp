#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace fkmc {

/// Streaming mean/variance of complex samples, Welford style, with the
/// standard pairwise merge. A constant sample stream yields exactly zero
/// second moments (no cancellation residue), which the constant-integrand
/// kernel cases rely on.
struct ComplexMoments {
  std::int64_t n = 0;
  double mean_re = 0.0, mean_im = 0.0;
  double m2_re = 0.0, m2_im = 0.0;

  void add(std::complex<double> z) {
    ++n;
    const double d_re = z.real() - mean_re;
    const double d_im = z.imag() - mean_im;
    mean_re += d_re / static_cast<double>(n);
    mean_im += d_im / static_cast<double>(n);
    m2_re += d_re * (z.real() - mean_re);
    m2_im += d_im * (z.imag() - mean_im);
  }

  void merge(const ComplexMoments& o) {
    if (o.n == 0) return;
    if (n == 0) { *this = o; return; }
    const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
    const double nt = na + nb;
    const double d_re = o.mean_re - mean_re;
    const double d_im = o.mean_im - mean_im;
    mean_re += d_re * nb / nt;
    mean_im += d_im * nb / nt;
    m2_re += o.m2_re + d_re * d_re * na * nb / nt;
    m2_im += o.m2_im + d_im * d_im * na * nb / nt;
    n += o.n;
  }

  std::complex<double> mean() const { return {mean_re, mean_im}; }

  /// Combined-component standard error: sqrt((s2_re + s2_im)/n) with the
  /// unbiased sample variances.
  double standard_error() const {
    if (n < 2) return 0.0;
    const double s2 = (m2_re + m2_im) / static_cast<double>(n - 1);
    return std::sqrt(s2 / static_cast<double>(n));
  }

  double variance_re() const {
    return n < 2 ? 0.0 : m2_re / static_cast<double>(n - 1);
  }
  double variance_im() const {
    return n < 2 ? 0.0 : m2_im / static_cast<double>(n - 1);
  }
};

/// Real-valued convenience wrapper.
struct Moments {
  ComplexMoments c;
  void add(double x) { c.add({x, 0.0}); }
  void merge(const Moments& o) { c.merge(o.c); }
  std::int64_t n() const { return c.n; }
  double mean() const { return c.mean_re; }
  double standard_error() const { return c.standard_error(); }
  double variance() const { return c.variance_re(); }
};

}  // namespace fkmc
