#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/tensor.h"
#include "test_util.h"

using namespace pagetext;
using namespace pagetext::testutil;

namespace {

// direct six-nested-loop cross-correlation, the conv oracle
template <typename T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Tensor<T>& k, const Tensor<T>& bias, int stride,
                       int pad) {
  int ci = x.dim(0), H = x.dim(1), W = x.dim(2);
  int co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  int ho = (H + 2 * pad - kh) / stride + 1;
  int wo = (W + 2 * pad - kw) / stride + 1;
  auto out = Tensor<T>::zeros({co, ho, wo});
  for (int oc = 0; oc < co; ++oc) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        for (int ic = 0; ic < ci; ++ic) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              int iy = oy * stride + ky - pad;
              int ix = ox * stride + kx - pad;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x.data()[(static_cast<int64_t>(ic) * H + iy) * W + ix] *
                     k.data()[((static_cast<int64_t>(oc) * ci + ic) * kh + ky) * kw + kx];
            }
          }
        }
        if (bias.defined()) acc += bias.data()[oc];
        out.data()[(static_cast<int64_t>(oc) * ho + oy) * wo + ox] = acc;
      }
    }
  }
  return out;
}

// textbook ADAM, written directly from the update equations
void adam_reference(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v, double alpha, double b1, double b2, double eps,
                    int64_t t) {
  for (size_t i = 0; i < p.size(); ++i) {
    m[i] = b1 * m[i] + (1 - b1) * g[i];
    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
    double mhat = m[i] / (1 - std::pow(b1, static_cast<double>(t)));
    double vhat = v[i] / (1 - std::pow(b2, static_cast<double>(t)));
    p[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

TEST_CASE("matmul identity and hand-checked values") {
  auto m = Tensor<double>::from({2, 2}, {3, -1, 2, 5});
  auto eye = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto out = ops::matmul<double>(nullptr, eye, m);
  for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == doctest::Approx(m.data()[i]));

  auto a = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto b = Tensor<double>::from({2, 1}, {0, 1});
  auto c = ops::matmul<double>(nullptr, a, b);
  CHECK(c.data()[0] == doctest::Approx(2));
  CHECK(c.data()[1] == doctest::Approx(4));

  CHECK_THROWS_AS(ops::matmul<double>(nullptr, a, Tensor<double>::zeros({3, 2})), contract_error);
}

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(42);
  auto a = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({4, 2}, rng);
  double err = max_rel_grad_error({a, b}, [&](Tape<double>* t) {
    return ops::sum_all(t, ops::matmul(t, a, b));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("matmul_nt and matmul_tn match matmul with transposed operands") {
  Rng rng(7);
  auto a = random_tensor<double>({3, 5}, rng);
  auto b = random_tensor<double>({4, 5}, rng);
  auto nt = ops::matmul_nt<double>(nullptr, a, b, 1.0);
  auto bt = Tensor<double>::zeros({5, 4});
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) bt.data()[j * 4 + i] = b.data()[i * 5 + j];
  }
  auto ref = ops::matmul<double>(nullptr, a, bt);
  for (int64_t i = 0; i < nt.size(); ++i) CHECK(nt.data()[i] == doctest::Approx(ref.data()[i]));

  double err = max_rel_grad_error({a, b}, [&](Tape<double>* t) {
    return ops::sum_all(t, ops::matmul_nt(t, a, b, 0.37));
  });
  CHECK(err < 1e-4);

  auto c = random_tensor<double>({5, 3}, rng);
  auto d = random_tensor<double>({5, 2}, rng);
  err = max_rel_grad_error({c, d}, [&](Tape<double>* t) {
    return ops::sum_all(t, ops::matmul_tn(t, c, d));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("conv2d identity kernel") {
  Rng rng(3);
  auto x = random_tensor<double>({1, 4, 5}, rng);
  auto k = Tensor<double>::from({1, 1, 1, 1}, {1.0});
  Tensor<double> none;
  auto out = ops::conv2d<double>(nullptr, x, k, none, 1, 0);
  REQUIRE(out.shape() == std::vector<int>{1, 4, 5});
  for (int64_t i = 0; i < x.size(); ++i) CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d all-ones kernel on all-ones input") {
  auto x = Tensor<double>::full({1, 5, 5}, 1.0);
  auto k = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  Tensor<double> none;
  auto out = ops::conv2d<double>(nullptr, x, k, none, 1, 0);
  REQUIRE(out.shape() == std::vector<int>{1, 3, 3});
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(9.0));
}

TEST_CASE("conv2d equals the naive loop oracle bit-for-bit") {
  Rng rng(11);
  // the spec's 2x3x4x4 case plus random small shapes up to 8x8
  for (int trial = 0; trial < 12; ++trial) {
    int ci = trial == 0 ? 3 : static_cast<int>(rng.uniform_int(1, 3));
    int co = trial == 0 ? 2 : static_cast<int>(rng.uniform_int(1, 3));
    int H = trial == 0 ? 4 : static_cast<int>(rng.uniform_int(3, 8));
    int W = trial == 0 ? 4 : static_cast<int>(rng.uniform_int(3, 8));
    int kh = trial == 0 ? 4 : static_cast<int>(rng.uniform_int(1, 3));
    int kw = trial == 0 ? 4 : static_cast<int>(rng.uniform_int(1, 3));
    int stride = trial == 0 ? 1 : static_cast<int>(rng.uniform_int(1, 2));
    int pad = trial == 0 ? 0 : static_cast<int>(rng.uniform_int(0, 1));
    if (H + 2 * pad < kh || W + 2 * pad < kw) continue;
    auto x = random_tensor<double>({ci, H, W}, rng);
    auto k = random_tensor<double>({co, ci, kh, kw}, rng);
    auto bias = random_tensor<double>({co}, rng);
    auto fast = ops::conv2d<double>(nullptr, x, k, bias, stride, pad);
    auto slow = conv2d_naive(x, k, bias, stride, pad);
    REQUIRE(fast.shape() == slow.shape());
    for (int64_t i = 0; i < fast.size(); ++i) CHECK(fast.data()[i] == slow.data()[i]);
  }
}

TEST_CASE("conv2d rejects kernels larger than the padded input") {
  auto x = Tensor<double>::full({1, 2, 2}, 1.0);
  auto k = Tensor<double>::full({1, 1, 5, 5}, 1.0);
  Tensor<double> none;
  CHECK_THROWS_AS(ops::conv2d<double>(nullptr, x, k, none, 1, 0), contract_error);
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(13);
  auto x = random_tensor<double>({2, 2, 5, 4}, rng);
  auto k = random_tensor<double>({3, 2, 3, 3}, rng);
  auto bias = random_tensor<double>({3}, rng);
  double err = max_rel_grad_error({x, k, bias}, [&](Tape<double>* t) {
    return ops::sum_all(t, ops::gelu(t, ops::conv2d(t, x, k, bias, 2, 1)));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("softmax uniform, shift invariance, closed form") {
  auto c = Tensor<double>::full({4}, 1.7);
  auto u = ops::softmax<double>(nullptr, c, 0);
  for (int i = 0; i < 4; ++i) CHECK(u.data()[i] == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(5);
  auto x = random_tensor<double>({6}, rng, -3, 3);
  auto shifted = Tensor<double>::zeros({6});
  for (int i = 0; i < 6; ++i) shifted.data()[i] = x.data()[i] + 11.25;
  auto sx = ops::softmax<double>(nullptr, x, 0);
  auto ss = ops::softmax<double>(nullptr, shifted, 0);
  for (int i = 0; i < 6; ++i) CHECK(std::fabs(sx.data()[i] - ss.data()[i]) < 1e-12);

  auto two = Tensor<double>::from({2}, {0.0, std::log(3.0)});
  auto st = ops::softmax<double>(nullptr, two, 0);
  CHECK(st.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(st.data()[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay in [0,1]") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor<double>({static_cast<int>(rng.uniform_int(1, 6)),
                                    static_cast<int>(rng.uniform_int(1, 9))},
                                   rng, -30, 30);
    auto y = ops::softmax<double>(nullptr, x, 1);
    for (int r = 0; r < x.dim(0); ++r) {
      double sum = 0;
      for (int j = 0; j < x.dim(1); ++j) {
        double v = y.data()[r * x.dim(1) + j];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        sum += v;
      }
      CHECK(std::fabs(sum - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("softmax over a middle axis") {
  Rng rng(23);
  auto x = random_tensor<double>({2, 3, 2}, rng);
  auto y = ops::softmax<double>(nullptr, x, 1);
  for (int o = 0; o < 2; ++o) {
    for (int in = 0; in < 2; ++in) {
      double sum = 0;
      for (int l = 0; l < 3; ++l) sum += y.data()[(o * 3 + l) * 2 + in];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  double err = max_rel_grad_error({x}, [&](Tape<double>* t) {
    auto s = ops::softmax(t, x, 1);
    return ops::sum_all(t, ops::mul(t, s, s));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("gelu values against an independent quadrature oracle") {
  auto x = Tensor<double>::from({3}, {0.0, 10.0, 1.0});
  auto y = ops::gelu<double>(nullptr, x);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == doctest::Approx(10.0).epsilon(1e-6));
  double expected = 1.0 * gaussian_cdf_quadrature(1.0);
  CHECK(expected == doctest::Approx(0.841345).epsilon(1e-5));  // sanity on the oracle itself
  CHECK(y.data()[2] == doctest::Approx(expected).epsilon(1e-9));

  Rng rng(29);
  auto r = random_tensor<double>({40}, rng, -4, 4);
  auto g = ops::gelu<double>(nullptr, r);
  for (int i = 0; i < 40; ++i) {
    CHECK(g.data()[i] ==
          doctest::Approx(r.data()[i] * gaussian_cdf_quadrature(r.data()[i])).epsilon(1e-9));
  }
  double err = max_rel_grad_error({r}, [&](Tape<double>* t) {
    return ops::sum_all(t, ops::gelu(t, r));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("layer_norm constant row and two-point row") {
  auto gain = Tensor<double>::full({4}, 1.0);
  auto bias = Tensor<double>::zeros({4});
  auto c = Tensor<double>::full({1, 4}, 3.25);
  auto y = ops::layer_norm<double>(nullptr, c, gain, bias, 1e-5);
  for (int i = 0; i < 4; ++i) CHECK(std::fabs(y.data()[i]) < 1e-9);

  auto g2 = Tensor<double>::full({2}, 1.0);
  auto b2 = Tensor<double>::zeros({2});
  auto two = Tensor<double>::from({1, 2}, {1.0, 3.0});
  auto z = ops::layer_norm<double>(nullptr, two, g2, b2, 1e-12);
  CHECK(z.data()[0] == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(z.data()[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("layer_norm matches a direct mean/variance oracle") {
  Rng rng(31);
  int d = 7;
  auto x = random_tensor<double>({3, d}, rng);
  auto gain = random_tensor<double>({d}, rng, 0.5, 1.5);
  auto bias = random_tensor<double>({d}, rng);
  double eps = 1e-5;
  auto y = ops::layer_norm<double>(nullptr, x, gain, bias, eps);
  for (int r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (int i = 0; i < d; ++i) mean += x.data()[r * d + i];
    mean /= d;
    for (int i = 0; i < d; ++i) {
      double c = x.data()[r * d + i] - mean;
      var += c * c;
    }
    var /= d;
    for (int i = 0; i < d; ++i) {
      double ref = gain.data()[i] * (x.data()[r * d + i] - mean) / std::sqrt(var + eps) +
                   bias.data()[i];
      CHECK(y.data()[r * d + i] == doctest::Approx(ref).epsilon(1e-10));
    }
  }
  double err = max_rel_grad_error({x, gain, bias}, [&](Tape<double>* t) {
    auto out = ops::layer_norm(t, x, gain, bias, eps);
    return ops::sum_all(t, ops::mul(t, out, out));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("group_norm gradients and per-group statistics") {
  Rng rng(37);
  auto x = random_tensor<double>({2, 4, 3, 2}, rng);
  auto gain = random_tensor<double>({4}, rng, 0.5, 1.5);
  auto bias = random_tensor<double>({4}, rng);
  auto y = ops::group_norm<double>(nullptr, x, 4, gain, bias, 1e-6);
  // per-channel groups: each (image, channel) slab is standardized
  for (int b = 0; b < 2; ++b) {
    for (int c = 0; c < 4; ++c) {
      double mean = 0;
      for (int s = 0; s < 6; ++s) {
        double xh = (y.data()[(b * 4 + c) * 6 + s] - bias.data()[c]) / gain.data()[c];
        mean += xh;
      }
      CHECK(std::fabs(mean / 6.0) < 1e-9);
    }
  }
  double err = max_rel_grad_error({x, gain, bias}, [&](Tape<double>* t) {
    auto out = ops::group_norm(t, x, 2, gain, bias, 1e-6);
    return ops::sum_all(t, ops::mul(t, out, out));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("dropout eval and p=0 are the identity; train statistics hold") {
  Rng rng(41);
  auto x = random_tensor<float>({100000}, rng, 0.5, 1.5);
  Rng r1(1);
  auto eval_out = ops::dropout<float>(nullptr, x, 0.5, Mode::kEval, r1);
  CHECK(eval_out.same_storage(x));
  auto p0 = ops::dropout<float>(nullptr, x, 0.0, Mode::kTrain, r1);
  CHECK(p0.same_storage(x));

  auto y = ops::dropout<float>(nullptr, x, 0.5, Mode::kTrain, r1);
  int64_t survivors = 0;
  double mean_in = 0, mean_out = 0;
  for (int64_t i = 0; i < x.size(); ++i) {
    if (y.data()[i] != 0.0f) ++survivors;
    mean_in += x.data()[i];
    mean_out += y.data()[i];
  }
  double frac = static_cast<double>(survivors) / static_cast<double>(x.size());
  CHECK(frac > 0.49);
  CHECK(frac < 0.51);
  CHECK(std::fabs(mean_out - mean_in) / mean_in < 0.02);

  CHECK_THROWS_AS(ops::dropout<float>(nullptr, x, 1.0, Mode::kTrain, r1), contract_error);
}

TEST_CASE("backward: sum and sum of squares") {
  Rng rng(43);
  auto x = random_tensor<double>({5, 3}, rng);
  x.set_requires_grad(true);
  {
    Tape<double> tape;
    auto loss = ops::sum_all(&tape, x);
    tape.backward(loss);
    for (int64_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 1.0);
  }
  x.zero_grad();
  {
    Tape<double> tape;
    auto loss = ops::sum_all(&tape, ops::mul(&tape, x, x));
    tape.backward(loss);
    for (int64_t i = 0; i < x.size(); ++i) {
      CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward requires a scalar loss and is deterministic") {
  Rng rng(47);
  auto x = random_tensor<double>({4}, rng);
  x.set_requires_grad(true);
  Tape<double> tape;
  auto y = ops::mul(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), contract_error);

  auto run = [&]() {
    x.zero_grad();
    Tape<double> t2;
    auto loss = ops::sum_all(&t2, ops::gelu(&t2, ops::mul(&t2, x, x)));
    t2.backward(loss);
    return std::vector<double>(x.grad(), x.grad() + x.size());
  };
  auto g1 = run();
  auto g2 = run();
  CHECK(g1 == g2);
}

TEST_CASE("unreachable tensors keep zero gradients") {
  Rng rng(53);
  auto x = random_tensor<double>({3}, rng);
  auto unused = random_tensor<double>({3}, rng);
  x.set_requires_grad(true);
  unused.set_requires_grad(true);
  Tape<double> tape;
  auto loss = ops::sum_all(&tape, x);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(unused.grad()[i] == 0.0);
}

TEST_CASE("elementwise, bias, embedding, slicing gradients") {
  Rng rng(59);
  auto a = random_tensor<double>({3, 4}, rng);
  auto b = random_tensor<double>({3, 4}, rng);
  auto bias = random_tensor<double>({4}, rng);
  double err = max_rel_grad_error({a, b, bias}, [&](Tape<double>* t) {
    auto s = ops::add(t, ops::mul(t, a, b), ops::sub(t, a, b));
    s = ops::add_bias_rows(t, s, bias);
    s = ops::relu(t, s);
    auto left = ops::slice_block(t, s, 0, 3, 0, 2);
    auto right = ops::slice_block(t, s, 0, 3, 2, 4);
    auto joined = ops::concat_cols(t, {left, right});
    auto stacked = ops::concat_rows(t, {joined, joined});
    return ops::scale(t, ops::sum_all(t, ops::mul(t, stacked, stacked)), 0.5);
  });
  CHECK(err < 1e-4);

  auto table = random_tensor<double>({5, 3}, rng);
  std::vector<int32_t> ids = {0, 2, 2, 4};
  err = max_rel_grad_error({table}, [&](Tape<double>* t) {
    auto e = ops::embedding(t, table, ids);
    return ops::sum_all(t, ops::mul(t, e, e));
  });
  CHECK(err < 1e-4);

  auto x4 = random_tensor<double>({2, 3, 2, 2}, rng);
  err = max_rel_grad_error({x4}, [&](Tape<double>* t) {
    auto f = ops::flatten_hw(t, x4);
    return ops::sum_all(t, ops::mul(t, f, f));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("log_softmax and masked NLL gradients") {
  Rng rng(61);
  auto logits = random_tensor<double>({5, 7}, rng, -2, 2);
  std::vector<int32_t> ids = {1, 0, 6, 3, 3};
  std::vector<double> mask = {1, 1, 0, 1, 1};
  double err = max_rel_grad_error({logits}, [&](Tape<double>* t) {
    auto lp = ops::log_softmax_rows(t, logits);
    return ops::nll_masked(t, lp, ids, mask);
  });
  CHECK(err < 1e-4);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::vector<float> p = {1.0f, -2.0f};
  std::vector<float> g = {0.0f, 0.0f};
  std::vector<float> m = {0.0f, 0.0f};
  std::vector<float> v = {0.0f, 0.0f};
  AdamParams hp;
  adam_step<float>(p, g, m, v, hp, 1);
  CHECK(p[0] == 1.0f);
  CHECK(p[1] == -2.0f);
}

TEST_CASE("adam: first step magnitude is about alpha") {
  std::vector<double> p = {0.0};
  std::vector<double> g = {1.0};
  std::vector<double> m = {0.0};
  std::vector<double> v = {0.0};
  AdamParams hp;  // alpha defaults to 2e-4
  adam_step<double>(p, g, m, v, hp, 1);
  // bias correction makes mhat = vhat = 1 on the first step
  CHECK(p[0] == doctest::Approx(-hp.alpha).epsilon(1e-6));
}

TEST_CASE("adam matches an independent reference over several steps") {
  AdamParams hp;
  hp.alpha = 0.01;
  std::vector<double> p = {0.5}, m = {0.0}, v = {0.0};
  std::vector<double> rp = {0.5}, rm = {0.0}, rv = {0.0};
  std::vector<double> grads = {1.0, -0.3, 0.7, 0.01, -2.0};
  for (int64_t t = 1; t <= static_cast<int64_t>(grads.size()); ++t) {
    std::vector<double> g = {grads[static_cast<size_t>(t - 1)]};
    adam_step<double>(p, g, m, v, hp, t);
    adam_reference(rp, g, rm, rv, hp.alpha, hp.beta1, hp.beta2, hp.eps, t);
    CHECK(p[0] == doctest::Approx(rp[0]).epsilon(1e-10));
  }
  std::vector<double> bad = {1.0, 2.0};
  CHECK_THROWS_AS(adam_step<double>(p, bad, m, v, hp, 6), contract_error);
}

TEST_CASE("tensor invariants: shape/data agreement and finiteness checks") {
  CHECK_THROWS_AS(Tensor<float>::from({2, 2}, {1.f, 2.f, 3.f}), contract_error);
  CHECK_THROWS_AS(Tensor<float>::zeros({0}), contract_error);
  auto t = Tensor<float>::from({2}, {1.f, 2.f});
  CHECK(all_finite(t));
  t.data()[1] = std::numeric_limits<float>::infinity();
  CHECK(!all_finite(t));
}
