#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "core/rng.h"
#include "core/tensor.h"

namespace pagetext::testutil {

// Central finite differences against the tape gradient for every element of
// every parameter. make_loss must rebuild the graph from the live parameter
// values on each call.
inline double max_rel_grad_error(std::vector<Tensor<double>> params,
                                 const std::function<Tensor<double>(Tape<double>*)>& make_loss,
                                 double h = 1e-5) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Tape<double> tape;
  Tensor<double> loss = make_loss(&tape);
  tape.backward(loss);
  tape.clear();

  double worst = 0.0;
  for (auto& p : params) {
    for (int64_t i = 0; i < p.size(); ++i) {
      double saved = p.data()[i];
      p.data()[i] = saved + h;
      double up = make_loss(nullptr).item();
      p.data()[i] = saved - h;
      double down = make_loss(nullptr).item();
      p.data()[i] = saved;
      double fd = (up - down) / (2.0 * h);
      double analytic = p.grad()[i];
      double denom = std::max({std::fabs(fd), std::fabs(analytic), 1e-6});
      worst = std::max(worst, std::fabs(fd - analytic) / denom);
    }
  }
  return worst;
}

template <typename T>
Tensor<T> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<T>::zeros(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Gaussian CDF by Simpson quadrature; independent of std::erf.
inline double gaussian_cdf_quadrature(double x) {
  const int n = 4000;  // even
  double a = 0.0, b = std::fabs(x);
  double hstep = (b - a) / n;
  auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * 3.14159265358979323846); };
  double acc = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) acc += pdf(a + i * hstep) * (i % 2 ? 4.0 : 2.0);
  double integral = acc * hstep / 3.0;
  return x >= 0 ? 0.5 + integral : 0.5 - integral;
}

}  // namespace pagetext::testutil
