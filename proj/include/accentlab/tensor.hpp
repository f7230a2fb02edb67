// accentlab/tensor.hpp
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

#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "accentlab/error.hpp"
#include "accentlab/rng.hpp"

namespace accentlab {

using Shape = std::vector<int>;

inline std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense tensor of rank 0..3 with an optional same-shape gradient buffer.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;  // values, row-major
  std::vector<T> g;  // gradient; empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)) {
    require(shape.size() <= 3, "Tensor: rank must be at most 3");
    v.assign(shape_size(shape), T(0));
  }

  std::size_t size() const { return v.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rows() const { return shape.size() >= 1 ? shape[0] : 1; }
  int cols() const { return shape.size() >= 2 ? shape[1] : 1; }

  T& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  T at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }
  T& gat(int r, int c) { return g[static_cast<std::size_t>(r) * cols() + c]; }

  bool has_grad() const { return !g.empty(); }
  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), T(0));
  }
  void zero_grad() {
    if (!g.empty()) std::fill(g.begin(), g.end(), T(0));
  }
};

// A named, trainable tensor plus its optimizer state. Moment buffers are
// allocated by the first optimizer step that needs them.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> moment1;  // Adam m / unused by RMSProp
  std::vector<T> moment2;  // Adam v / RMSProp mean square
  long step_count = 0;

  Parameter() = default;
  Parameter(std::string n, Shape s) : name(std::move(n)), tensor(std::move(s)) {}

  std::size_t size() const { return tensor.size(); }
  void zero_grad() { tensor.zero_grad(); }
};

// Uniform fan-scaled init, limit +/- sqrt(6 / (fan_in + fan_out)).
// Matrices use (rows, cols); rank-3 conv kernels [k, c_in, c_out] use
// (k*c_in, k*c_out); rank-1 tensors (biases) are zeroed.
template <typename T>
inline void glorot_uniform_init(Parameter<T>& p, Rng& rng) {
  const Shape& s = p.tensor.shape;
  if (s.size() <= 1) {
    std::fill(p.tensor.v.begin(), p.tensor.v.end(), T(0));
    return;
  }
  double fan_in = 0.0, fan_out = 0.0;
  if (s.size() == 2) {
    fan_in = s[0];
    fan_out = s[1];
  } else {
    fan_in = static_cast<double>(s[0]) * s[1];
    fan_out = static_cast<double>(s[0]) * s[2];
  }
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& x : p.tensor.v) x = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace accentlab
