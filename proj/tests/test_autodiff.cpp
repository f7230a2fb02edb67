// tests/test_autodiff.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "accentlab/autodiff.hpp"
#include "accentlab/rng.hpp"

#include "support/gradsuite.hpp"
#include "support/oracles.hpp"

using namespace accentlab;

namespace {

Parameter<double> param(const std::string& name, Shape shape, const std::vector<double>& values) {
  Parameter<double> p(name, std::move(shape));
  p.tensor.v = values;
  return p;
}

Tensor<double> random_tensor(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.v) v = rng.normal() * 0.8;
  return t;
}

}  // namespace

TEST_CASE("gradients match finite differences for every op") {
  const auto results = testsupport::gradient_suite(5, 20240517);
  REQUIRE(results.size() >= 12);
  for (const auto& r : results) {
    INFO(r.op);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("dense layer computes x W + b") {
  Tape<double> tape;
  auto x = tape.input({2, 3}, {1, 2, 3, 4, 5, 6});
  auto W = param("W", {3, 2}, {1, 0, 0, 1, 1, 1});
  auto b = param("b", {2}, {0.5, -0.5});
  const auto y = tape.dense(x, W, b);
  const auto& out = tape.node(y);
  REQUIRE(out.rows() == 2);
  REQUIRE(out.cols() == 2);
  CHECK(out.at(0, 0) == Catch::Approx(1 + 3 + 0.5));
  CHECK(out.at(0, 1) == Catch::Approx(2 + 3 - 0.5));
  CHECK(out.at(1, 0) == Catch::Approx(4 + 6 + 0.5));
  CHECK(out.at(1, 1) == Catch::Approx(5 + 6 - 0.5));
}

TEST_CASE("identity dense layer reproduces its input") {
  Rng rng(9);
  Tensor<double> x = random_tensor({3, 4}, rng);
  auto W = param("W", {4, 4}, {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
  auto b = param("b", {4}, {0, 0, 0, 0});
  Tape<double> tape;
  const auto y = tape.dense(tape.input(x), W, b);
  REQUIRE(tape.node(y).v == x.v);
}

TEST_CASE("conv1d agrees with the loop reference and zero-pads edges") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const int T = 4 + static_cast<int>(rng.uniform_int(0, 5));
    const int ci = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int co = 1 + static_cast<int>(rng.uniform_int(0, 2));
    const int k = 2 * static_cast<int>(rng.uniform_int(1, 2)) + 1;  // 3 or 5
    Tensor<double> x = random_tensor({T, ci}, rng);
    auto K = param("K", {k, ci, co}, {});
    K.tensor = random_tensor({k, ci, co}, rng);
    auto b = param("b", {co}, {});
    b.tensor = random_tensor({co}, rng);

    Tape<double> tape;
    const auto y = tape.conv1d(tape.input(x), K, b);
    const auto ref = testsupport::conv1d_ref(x.v, K.tensor.v, b.tensor.v, T, ci, co, k);
    REQUIRE(tape.node(y).v.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      REQUIRE(tape.node(y).v[i] == Catch::Approx(ref[i]).margin(1e-12));
    }
  }
}

TEST_CASE("pointwise conv1d with an identity kernel is the identity") {
  Rng rng(12);
  Tensor<double> x = random_tensor({6, 2}, rng);
  auto K = param("K", {1, 2, 2}, {1, 0, 0, 1});
  auto b = param("b", {2}, {0, 0});
  Tape<double> tape;
  const auto y = tape.conv1d(tape.input(x), K, b);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    REQUIRE(tape.node(y).v[i] == Catch::Approx(x.v[i]));
  }
}

TEST_CASE("strided conv1d keeps every stride-th frame") {
  Rng rng(13);
  Tensor<double> x = random_tensor({7, 2}, rng);
  auto K = param("K", {1, 2, 2}, {1, 0, 0, 1});
  auto b = param("b", {2}, {0, 0});
  Tape<double> tape;
  const auto y = tape.conv1d(tape.input(x), K, b, 2);
  const auto& out = tape.node(y);
  REQUIRE(out.rows() == 4);  // ceil(7/2)
  for (int t = 0; t < 4; ++t) {
    for (int c = 0; c < 2; ++c) REQUIRE(out.at(t, c) == Catch::Approx(x.at(2 * t, c)));
  }
}

TEST_CASE("conv1d_transpose matches the scatter reference and both lengths") {
  Rng rng(14);
  for (int out_len : {-1, 11, 15}) {
    const int T = 6, ci = 2, co = 3, k = 5, stride = 2;
    Tensor<double> x = random_tensor({T, ci}, rng);
    auto K = param("K", {k, ci, co}, {});
    K.tensor = random_tensor({k, ci, co}, rng);
    auto b = param("b", {co}, {});
    b.tensor = random_tensor({co}, rng);

    Tape<double> tape;
    const auto y = tape.conv1d_transpose(tape.input(x), K, b, stride, out_len);
    const int to = out_len > 0 ? out_len : T * stride;
    REQUIRE(tape.node(y).rows() == to);
    const auto ref =
        testsupport::conv1d_transpose_ref(x.v, K.tensor.v, b.tensor.v, T, ci, co, k, stride, to);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      REQUIRE(tape.node(y).v[i] == Catch::Approx(ref[i]).margin(1e-12));
    }
  }
}

TEST_CASE("conv1d_transpose is the adjoint of strided conv1d") {
  // <conv(x), y> must equal <x, conv_transpose(y)> when both use the same
  // kernel, stride, and zero bias.
  Rng rng(15);
  const int T = 12, ci = 2, co = 3, k = 5, stride = 2;
  const int to = (T + stride - 1) / stride;
  Tensor<double> x = random_tensor({T, ci}, rng);
  Tensor<double> y = random_tensor({to, co}, rng);
  auto K = param("K", {k, ci, co}, {});
  K.tensor = random_tensor({k, ci, co}, rng);
  auto zb_co = param("b", {co}, std::vector<double>(co, 0.0));
  auto zb_ci = param("b", {ci}, std::vector<double>(ci, 0.0));

  Tape<double> tape;
  const auto cx = tape.conv1d(tape.input(x), K, zb_co, stride);
  double lhs = 0.0;
  for (std::size_t i = 0; i < y.v.size(); ++i) lhs += tape.node(cx).v[i] * y.v[i];

  // The adjoint maps co back to ci: transpose the kernel's channel axes.
  // Both ops index taps as t*stride + d - off, so the taps stay in place.
  auto Kt = param("Kt", {k, co, ci}, {});
  Kt.tensor = Tensor<double>({k, co, ci});
  for (int d = 0; d < k; ++d) {
    for (int a = 0; a < ci; ++a) {
      for (int o = 0; o < co; ++o) {
        Kt.tensor.v[(static_cast<std::size_t>(d) * co + o) * ci + a] =
            K.tensor.v[(static_cast<std::size_t>(d) * ci + a) * co + o];
      }
    }
  }
  const auto ty = tape.conv1d_transpose(tape.input(y), Kt, zb_ci, stride, T);
  double rhs = 0.0;
  for (std::size_t i = 0; i < x.v.size(); ++i) rhs += tape.node(ty).v[i] * x.v[i];
  REQUIRE(lhs == Catch::Approx(rhs).epsilon(1e-8));
}

TEST_CASE("maxpool1d takes window maxima and routes gradient to the argmax") {
  Tape<double> tape;
  auto x = tape.input({5, 1}, {1.0, 3.0, 2.0, 5.0, 4.0});
  const auto y = tape.maxpool1d(x, 2, 2);
  REQUIRE(tape.node(y).rows() == 2);
  CHECK(tape.node(y).at(0, 0) == 3.0);
  CHECK(tape.node(y).at(1, 0) == 5.0);

  const auto loss = tape.mse(y, tape.input({2, 1}, {0.0, 0.0}));
  tape.backward(loss);
  const auto& g = tape.node(x).g;
  CHECK(g[0] == 0.0);
  CHECK(g[1] != 0.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] != 0.0);
  CHECK(g[4] == 0.0);
}

TEST_CASE("lstm_step matches the gate formula reference") {
  Rng rng(16);
  const int n = 1, d = 3, u = 2;
  Tensor<double> x = random_tensor({n, d}, rng);
  Tensor<double> h = random_tensor({n, u}, rng);
  Tensor<double> c = random_tensor({n, u}, rng);
  auto W = param("W", {d, 4 * u}, {});
  W.tensor = random_tensor({d, 4 * u}, rng);
  auto U = param("U", {u, 4 * u}, {});
  U.tensor = random_tensor({u, 4 * u}, rng);
  auto b = param("b", {4 * u}, {});
  b.tensor = random_tensor({4 * u}, rng);

  Tape<double> tape;
  const auto hc = tape.lstm_step(tape.input(x), tape.input(h), tape.input(c), W, U, b);
  const auto ref = testsupport::lstm_step_ref(x.v, h.v, c.v, W.tensor.v, U.tensor.v, b.tensor.v,
                                              d, u);
  for (int j = 0; j < u; ++j) {
    REQUIRE(tape.node(hc.first).v[static_cast<std::size_t>(j)] == Catch::Approx(ref.h[static_cast<std::size_t>(j)]));
    REQUIRE(tape.node(hc.second).v[static_cast<std::size_t>(j)] == Catch::Approx(ref.c[static_cast<std::size_t>(j)]));
  }
}

TEST_CASE("softmax rows sum to one and reject NaN input") {
  Tape<double> tape;
  auto x = tape.input({2, 3}, {1.0, 2.0, 3.0, 1000.0, 1000.0, 1000.0});
  const auto y = tape.softmax(x);
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 3; ++j) sum += tape.node(y).at(i, j);
    REQUIRE(sum == Catch::Approx(1.0));
  }
  const auto ref = testsupport::softmax_ref({1.0, 2.0, 3.0});
  for (int j = 0; j < 3; ++j) REQUIRE(tape.node(y).at(0, j) == Catch::Approx(ref[static_cast<std::size_t>(j)]));

  auto bad = tape.input({1, 2}, {std::numeric_limits<double>::quiet_NaN(), 1.0});
  REQUIRE_THROWS_AS(tape.softmax(bad), PreconditionError);
}

TEST_CASE("attention weights form a distribution and pool the rows") {
  Rng rng(17);
  Tensor<double> x = random_tensor({5, 3}, rng);
  auto w = param("w", {3}, {});
  w.tensor = random_tensor({3}, rng);
  auto beta = param("beta", {1}, {0.3});

  Tape<double> tape;
  const auto [y, scores] = tape.attention_1d(tape.input(x), w, beta);
  const auto& s = tape.node(scores);
  REQUIRE(s.size() == 5);
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) sum += s.v[i];
  REQUIRE(sum == Catch::Approx(1.0));
  // y = sum_t alpha_t x_t
  for (int c = 0; c < 3; ++c) {
    double expect = 0.0;
    for (int t = 0; t < 5; ++t) expect += s.v[static_cast<std::size_t>(t)] * x.at(t, c);
    REQUIRE(tape.node(y).v[static_cast<std::size_t>(c)] == Catch::Approx(expect));
  }
}

TEST_CASE("per-channel attention normalizes each column independently") {
  Rng rng(18);
  Tensor<double> x = random_tensor({4, 3}, rng);
  auto w = param("w", {3}, {});
  w.tensor = random_tensor({3}, rng);
  auto beta = param("beta", {3}, {});
  beta.tensor = random_tensor({3}, rng);

  Tape<double> tape;
  const auto [y, scores] = tape.attention_2d(tape.input(x), w, beta);
  const auto& s = tape.node(scores);
  REQUIRE(s.rows() == 4);
  REQUIRE(s.cols() == 3);
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (int t = 0; t < 4; ++t) sum += s.at(t, c);
    REQUIRE(sum == Catch::Approx(1.0));
    double expect = 0.0;
    for (int t = 0; t < 4; ++t) expect += s.at(t, c) * x.at(t, c);
    REQUIRE(tape.node(y).v[static_cast<std::size_t>(c)] == Catch::Approx(expect));
  }
}

TEST_CASE("dropout zeroes at the configured rate and rescales survivors") {
  Rng rng(19);
  Tensor<double> x({1, 10000});
  for (auto& v : x.v) v = 1.0;

  Tape<double> tape;
  Rng drop(55);
  const auto y = tape.dropout(tape.input(x), 0.3, Mode::kTrain, drop);
  int zeros = 0;
  for (const auto v : tape.node(y).v) {
    if (v == 0.0) {
      ++zeros;
    } else {
      REQUIRE(v == Catch::Approx(1.0 / 0.7));
    }
  }
  REQUIRE(zeros > 2700);
  REQUIRE(zeros < 3300);

  Rng drop2(56);
  const auto ye = tape.dropout(tape.input(x), 0.3, Mode::kEval, drop2);
  for (const auto v : tape.node(ye).v) REQUIRE(v == 1.0);

  Rng drop3(57);
  const auto y0 = tape.dropout(tape.input(x), 0.0, Mode::kTrain, drop3);
  for (const auto v : tape.node(y0).v) REQUIRE(v == 1.0);
}

TEST_CASE("cross entropy of a onehot-perfect prediction is near zero") {
  Tape<double> tape;
  auto p = tape.input({2, 3}, {1.0, 0.0, 0.0, 0.0, 1.0, 0.0});
  const auto loss = tape.cross_entropy(p, {0, 1});
  REQUIRE(tape.node(loss).v[0] == Catch::Approx(0.0).margin(1e-9));

  auto uniform = tape.input({1, 4}, {0.25, 0.25, 0.25, 0.25});
  const auto lu = tape.cross_entropy(uniform, {2});
  REQUIRE(tape.node(lu).v[0] == Catch::Approx(std::log(4.0)));
}

TEST_CASE("cross entropy rejects non-distribution rows and bad labels") {
  Tape<double> tape;
  auto not_dist = tape.input({1, 3}, {0.5, 0.4, 0.4});
  REQUIRE_THROWS_AS(tape.cross_entropy(not_dist, {0}), PreconditionError);
  auto ok = tape.input({1, 3}, {0.2, 0.3, 0.5});
  REQUIRE_THROWS_AS(tape.cross_entropy(ok, {3}), PreconditionError);
}

TEST_CASE("fused softmax cross entropy backward is probs minus onehot") {
  Rng rng(20);
  const int n = 3, k = 4;
  Tensor<double> logits = random_tensor({n, k}, rng);
  const std::vector<int> labels = {2, 0, 3};

  Tape<double> tape;
  const auto x = tape.input(logits);
  const auto [loss, probs] = tape.softmax_cross_entropy(x, labels);
  tape.backward(loss);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) {
      const double onehot = labels[static_cast<std::size_t>(i)] == j ? 1.0 : 0.0;
      const double expect = (tape.node(probs).at(i, j) - onehot) / n;
      REQUIRE(tape.node(x).g[static_cast<std::size_t>(i * k + j)] ==
              Catch::Approx(expect).margin(1e-10));
    }
  }
}

TEST_CASE("mse averages squared error over all entries") {
  Tape<double> tape;
  auto a = tape.input({2, 2}, {1.0, 2.0, 3.0, 4.0});
  auto b = tape.input({2, 2}, {1.0, 0.0, 3.0, 0.0});
  const auto loss = tape.mse(a, b);
  REQUIRE(tape.node(loss).v[0] == Catch::Approx((4.0 + 16.0) / 4.0));
}

TEST_CASE("backward through fan-out accumulates both paths") {
  // y = x + x has dy/dx = 2.
  Tape<double> tape;
  auto x = tape.input({1, 2}, {3.0, -1.0});
  const auto y = tape.add(x, x);
  const auto loss = tape.mse(y, tape.input({1, 2}, {0.0, 0.0}));
  tape.backward(loss);
  // loss = ((2*x0)^2 + (2*x1)^2) / 2, so dloss/dx_i = 4*x_i.
  REQUIRE(tape.node(x).g[0] == Catch::Approx(12.0));
  REQUIRE(tape.node(x).g[1] == Catch::Approx(-4.0));
}

TEST_CASE("parameter gradients accumulate across passes until an optimizer step") {
  auto W = param("W", {1, 1}, {2.0});
  auto b = param("b", {1}, {0.0});
  Tape<double> tape;
  auto run = [&]() {
    auto x = tape.input({1, 1}, {1.0});
    const auto y = tape.dense(x, W, b);
    const auto loss = tape.mse(y, tape.input({1, 1}, {0.0}));
    tape.backward(loss);
  };
  run();
  const double g1 = W.tensor.g[0];
  run();
  REQUIRE(W.tensor.g[0] == Catch::Approx(2.0 * g1));
}

TEST_CASE("adam steps match the scalar recurrence") {
  const std::vector<double> grads = {0.4, -0.2, 0.9, 0.1, -0.5};
  auto W = param("W", {1}, {1.0});
  W.tensor.ensure_grad();
  for (const double g : grads) {
    W.tensor.g[0] = g;
    adam_step<double>({&W}, 0.01);
    REQUIRE(W.tensor.g[0] == 0.0);  // cleared after the step
  }
  REQUIRE(W.tensor.v[0] == Catch::Approx(testsupport::adam_scalar_ref(1.0, grads, 0.01)));
}

TEST_CASE("first adam step moves by about lr in the gradient direction") {
  auto W = param("W", {2}, {0.0, 0.0});
  W.tensor.ensure_grad();
  W.tensor.g = {0.3, -0.7};
  adam_step<double>({&W}, 0.001);
  REQUIRE(W.tensor.v[0] == Catch::Approx(-0.001).epsilon(1e-4));
  REQUIRE(W.tensor.v[1] == Catch::Approx(0.001).epsilon(1e-4));
}

TEST_CASE("rmsprop steps match the scalar recurrence") {
  const std::vector<double> grads = {0.4, -0.2, 0.9};
  auto W = param("W", {1}, {1.0});
  W.tensor.ensure_grad();
  for (const double g : grads) {
    W.tensor.g[0] = g;
    rmsprop_step<double>({&W}, 0.01);
  }
  REQUIRE(W.tensor.v[0] == Catch::Approx(testsupport::rmsprop_scalar_ref(1.0, grads, 0.01)));
}

TEST_CASE("optimizer steps require gradients for every parameter") {
  auto W = param("W", {1}, {1.0});
  REQUIRE_THROWS_AS(adam_step<double>({&W}), PreconditionError);
}

TEST_CASE("reshape, slices, and stacking preserve values") {
  Tape<double> tape;
  auto x = tape.input({2, 3}, {1, 2, 3, 4, 5, 6});
  const auto flat = tape.reshape(x, {6});
  REQUIRE(tape.node(flat).v == std::vector<double>{1, 2, 3, 4, 5, 6});

  const auto top = tape.slice_rows(x, 0, 1);
  REQUIRE(tape.node(top).v == std::vector<double>{1, 2, 3});

  const auto rep = tape.repeat_row(top, 3);
  REQUIRE(tape.node(rep).rows() == 3);
  REQUIRE(tape.node(rep).v == std::vector<double>{1, 2, 3, 1, 2, 3, 1, 2, 3});

  const auto wide = tape.concat_cols(x, x);
  REQUIRE(tape.node(wide).cols() == 6);
  REQUIRE(tape.node(wide).at(1, 3) == 4.0);

  const auto stacked = tape.stack_rows({top, top});
  REQUIRE(tape.node(stacked).rows() == 2);
  REQUIRE(tape.node(stacked).at(1, 2) == 3.0);
}
