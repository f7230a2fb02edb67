// accentlab/autodiff.hpp
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

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "accentlab/error.hpp"
#include "accentlab/rng.hpp"
#include "accentlab/tensor.hpp"

namespace accentlab {

enum class Mode { kTrain, kEval };

// Reverse-mode tape. Operations record a backward closure at execution
// time; backward() replays the closures in exact reverse order, seeding the
// loss gradient with 1. Gradients accumulate additively, so fan-out falls
// out naturally. Node gradients are reset at the start of every backward
// pass; parameter gradients persist and accumulate across passes until an
// optimizer step (or zero_grad) clears them.
template <typename T>
class Tape {
 public:
  using NodeId = int;

  NodeId make(Shape shape) {
    nodes_.emplace_back(std::move(shape));
    nodes_.back().ensure_grad();
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId input(const Tensor<T>& t) {
    const NodeId id = make(t.shape);
    nodes_[static_cast<std::size_t>(id)].v = t.v;
    return id;
  }

  NodeId input(Shape shape, const std::vector<T>& values) {
    require(shape_size(shape) == values.size(), "Tape::input: value count mismatch");
    const NodeId id = make(std::move(shape));
    nodes_[static_cast<std::size_t>(id)].v = values;
    return id;
  }

  Tensor<T>& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Tensor<T>& node(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    back_.clear();
  }

  // ---- layers ----------------------------------------------------------

  // y = x W + b for a batch of row vectors.
  NodeId dense(NodeId x_id, Parameter<T>& W, Parameter<T>& b) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2, "dense: input must be rank 2, got " + shape_str(x.shape));
    require(W.tensor.shape.size() == 2 && x.cols() == W.tensor.rows(),
            "dense: shape mismatch " + shape_str(x.shape) + " x " + shape_str(W.tensor.shape));
    require(b.tensor.size() == static_cast<std::size_t>(W.tensor.cols()),
            "dense: bias shape mismatch");
    const int n = x.rows(), din = x.cols(), dout = W.tensor.cols();
    const NodeId y_id = make({n, dout});
    Tensor<T>& y = node(y_id);
    for (int i = 0; i < n; ++i) {
      const T* xr = &x.v[static_cast<std::size_t>(i) * din];
      T* yr = &y.v[static_cast<std::size_t>(i) * dout];
      for (int o = 0; o < dout; ++o) yr[o] = b.tensor.v[static_cast<std::size_t>(o)];
      for (int k = 0; k < din; ++k) {
        const T xv = xr[k];
        const T* wr = &W.tensor.v[static_cast<std::size_t>(k) * dout];
        for (int o = 0; o < dout; ++o) yr[o] += xv * wr[o];
      }
    }
    W.tensor.ensure_grad();
    b.tensor.ensure_grad();
    back_.push_back([this, x_id, y_id, &W, &b, n, din, dout] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (int i = 0; i < n; ++i) {
        const T* dyr = &y.g[static_cast<std::size_t>(i) * dout];
        const T* xr = &x.v[static_cast<std::size_t>(i) * din];
        T* dxr = &x.g[static_cast<std::size_t>(i) * din];
        for (int k = 0; k < din; ++k) {
          const T* wr = &W.tensor.v[static_cast<std::size_t>(k) * dout];
          T* dwr = &W.tensor.g[static_cast<std::size_t>(k) * dout];
          T acc = T(0);
          const T xv = xr[k];
          for (int o = 0; o < dout; ++o) {
            acc += dyr[o] * wr[o];
            dwr[o] += xv * dyr[o];
          }
          dxr[k] += acc;
        }
        for (int o = 0; o < dout; ++o) b.tensor.g[static_cast<std::size_t>(o)] += dyr[o];
      }
    });
    return y_id;
  }

  // Temporal cross-correlation with zero "same" padding. Input [T, C_in],
  // kernel [k, C_in, C_out]; output t maps to input position t*stride.
  NodeId conv1d(NodeId x_id, Parameter<T>& K, Parameter<T>& b, int stride = 1) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2, "conv1d: input must be rank 2");
    require(K.tensor.shape.size() == 3, "conv1d: kernel must be rank 3");
    const int tin = x.rows(), cin = x.cols();
    const int k = K.tensor.dim(0), kcin = K.tensor.dim(1), cout = K.tensor.dim(2);
    require(kcin == cin, "conv1d: channel mismatch " + shape_str(x.shape) + " vs kernel " +
                             shape_str(K.tensor.shape));
    require(k % 2 == 1, "conv1d: kernel width must be odd for same padding");
    require(stride >= 1, "conv1d: stride must be positive");
    require(b.tensor.size() == static_cast<std::size_t>(cout), "conv1d: bias shape mismatch");
    const int tout = (tin + stride - 1) / stride;
    const int off = k / 2;

    const NodeId y_id = make({tout, cout});
    Tensor<T>& y = node(y_id);
    for (int t = 0; t < tout; ++t) {
      T* yr = &y.v[static_cast<std::size_t>(t) * cout];
      for (int o = 0; o < cout; ++o) yr[o] = b.tensor.v[static_cast<std::size_t>(o)];
      for (int d = 0; d < k; ++d) {
        const int ti = t * stride + d - off;
        if (ti < 0 || ti >= tin) continue;
        const T* xr = &x.v[static_cast<std::size_t>(ti) * cin];
        const T* kd = &K.tensor.v[static_cast<std::size_t>(d) * cin * cout];
        for (int c = 0; c < cin; ++c) {
          const T xv = xr[c];
          const T* kr = kd + static_cast<std::size_t>(c) * cout;
          for (int o = 0; o < cout; ++o) yr[o] += xv * kr[o];
        }
      }
    }
    K.tensor.ensure_grad();
    b.tensor.ensure_grad();
    back_.push_back([this, x_id, y_id, &K, &b, tin, cin, k, cout, tout, stride, off] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (int t = 0; t < tout; ++t) {
        const T* dyr = &y.g[static_cast<std::size_t>(t) * cout];
        for (int o = 0; o < cout; ++o) b.tensor.g[static_cast<std::size_t>(o)] += dyr[o];
        for (int d = 0; d < k; ++d) {
          const int ti = t * stride + d - off;
          if (ti < 0 || ti >= tin) continue;
          const T* xr = &x.v[static_cast<std::size_t>(ti) * cin];
          T* dxr = &x.g[static_cast<std::size_t>(ti) * cin];
          const T* kd = &K.tensor.v[static_cast<std::size_t>(d) * cin * cout];
          T* dkd = &K.tensor.g[static_cast<std::size_t>(d) * cin * cout];
          for (int c = 0; c < cin; ++c) {
            const T* kr = kd + static_cast<std::size_t>(c) * cout;
            T* dkr = dkd + static_cast<std::size_t>(c) * cout;
            const T xv = xr[c];
            T acc = T(0);
            for (int o = 0; o < cout; ++o) {
              acc += dyr[o] * kr[o];
              dkr[o] += xv * dyr[o];
            }
            dxr[c] += acc;
          }
        }
      }
    });
    return y_id;
  }

  // Upsampling adjoint of conv1d: scatters each input step onto stride-
  // spaced output positions. Output length defaults to T*stride; a caller
  // may request a longer (bias-filled tail) or shorter (cropped) length so
  // decoder stacks can reproduce odd encoder lengths exactly.
  NodeId conv1d_transpose(NodeId x_id, Parameter<T>& K, Parameter<T>& b, int stride = 2,
                          int out_length = -1) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2, "conv1d_transpose: input must be rank 2");
    require(K.tensor.shape.size() == 3, "conv1d_transpose: kernel must be rank 3");
    const int tin = x.rows(), cin = x.cols();
    const int k = K.tensor.dim(0), kcin = K.tensor.dim(1), cout = K.tensor.dim(2);
    require(kcin == cin, "conv1d_transpose: channel mismatch");
    require(k % 2 == 1, "conv1d_transpose: kernel width must be odd");
    require(stride >= 1, "conv1d_transpose: stride must be positive");
    require(b.tensor.size() == static_cast<std::size_t>(cout),
            "conv1d_transpose: bias shape mismatch");
    const int tout = out_length > 0 ? out_length : tin * stride;
    const int off = k / 2;

    const NodeId y_id = make({tout, cout});
    Tensor<T>& y = node(y_id);
    for (int to = 0; to < tout; ++to) {
      T* yr = &y.v[static_cast<std::size_t>(to) * cout];
      for (int o = 0; o < cout; ++o) yr[o] = b.tensor.v[static_cast<std::size_t>(o)];
    }
    for (int t = 0; t < tin; ++t) {
      const T* xr = &x.v[static_cast<std::size_t>(t) * cin];
      for (int d = 0; d < k; ++d) {
        const int to = t * stride + d - off;
        if (to < 0 || to >= tout) continue;
        T* yr = &y.v[static_cast<std::size_t>(to) * cout];
        const T* kd = &K.tensor.v[static_cast<std::size_t>(d) * cin * cout];
        for (int c = 0; c < cin; ++c) {
          const T xv = xr[c];
          const T* kr = kd + static_cast<std::size_t>(c) * cout;
          for (int o = 0; o < cout; ++o) yr[o] += xv * kr[o];
        }
      }
    }
    K.tensor.ensure_grad();
    b.tensor.ensure_grad();
    back_.push_back([this, x_id, y_id, &K, &b, tin, cin, k, cout, tout, stride, off] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (int to = 0; to < tout; ++to) {
        const T* dyr = &y.g[static_cast<std::size_t>(to) * cout];
        for (int o = 0; o < cout; ++o) b.tensor.g[static_cast<std::size_t>(o)] += dyr[o];
      }
      for (int t = 0; t < tin; ++t) {
        const T* xr = &x.v[static_cast<std::size_t>(t) * cin];
        T* dxr = &x.g[static_cast<std::size_t>(t) * cin];
        for (int d = 0; d < k; ++d) {
          const int to = t * stride + d - off;
          if (to < 0 || to >= tout) continue;
          const T* dyr = &y.g[static_cast<std::size_t>(to) * cout];
          const T* kd = &K.tensor.v[static_cast<std::size_t>(d) * cin * cout];
          T* dkd = &K.tensor.g[static_cast<std::size_t>(d) * cin * cout];
          for (int c = 0; c < cin; ++c) {
            const T* kr = kd + static_cast<std::size_t>(c) * cout;
            T* dkr = dkd + static_cast<std::size_t>(c) * cout;
            const T xv = xr[c];
            T acc = T(0);
            for (int o = 0; o < cout; ++o) {
              acc += dyr[o] * kr[o];
              dkr[o] += xv * dyr[o];
            }
            dxr[c] += acc;
          }
        }
      }
    });
    return y_id;
  }

  // Per-channel windowed max; gradient routes to the first maximal index.
  NodeId maxpool1d(NodeId x_id, int k = 2, int stride = 2) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2, "maxpool1d: input must be rank 2");
    require(k >= 1 && stride >= 1, "maxpool1d: window and stride must be positive");
    const int tin = x.rows(), c = x.cols();
    require(tin >= k, "maxpool1d: input shorter than window");
    const int tout = (tin - k) / stride + 1;

    const NodeId y_id = make({tout, c});
    Tensor<T>& y = node(y_id);
    auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(tout) * c);
    for (int t = 0; t < tout; ++t) {
      for (int ch = 0; ch < c; ++ch) {
        int best = t * stride;
        T best_v = x.at(best, ch);
        for (int d = 1; d < k; ++d) {
          const T v = x.at(t * stride + d, ch);
          if (v > best_v) {
            best_v = v;
            best = t * stride + d;
          }
        }
        y.at(t, ch) = best_v;
        (*argmax)[static_cast<std::size_t>(t) * c + ch] = best;
      }
    }
    back_.push_back([this, x_id, y_id, argmax, tout, c] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (int t = 0; t < tout; ++t) {
        for (int ch = 0; ch < c; ++ch) {
          x.gat((*argmax)[static_cast<std::size_t>(t) * c + ch], ch) += y.gat(t, ch);
        }
      }
    });
    return y_id;
  }

  // One LSTM cell step. Weight blocks along the 4u axis are ordered
  // [input | forget | candidate | output].
  std::pair<NodeId, NodeId> lstm_step(NodeId x_id, NodeId h_id, NodeId c_id, Parameter<T>& W,
                                      Parameter<T>& U, Parameter<T>& b) {
    const Tensor<T>& x = node(x_id);
    const Tensor<T>& h = node(h_id);
    const Tensor<T>& c = node(c_id);
    require(x.shape.size() == 2 && h.shape.size() == 2 && c.shape.size() == 2,
            "lstm_step: inputs must be rank 2");
    const int n = x.rows(), d = x.cols(), u = h.cols();
    require(h.rows() == n && c.rows() == n && c.cols() == u, "lstm_step: state shape mismatch");
    require(W.tensor.rows() == d && W.tensor.cols() == 4 * u, "lstm_step: W shape mismatch");
    require(U.tensor.rows() == u && U.tensor.cols() == 4 * u, "lstm_step: U shape mismatch");
    require(b.tensor.size() == static_cast<std::size_t>(4 * u), "lstm_step: bias shape mismatch");

    const NodeId hn_id = make({n, u});
    const NodeId cn_id = make({n, u});
    auto gates = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * 4 * u);
    auto tanh_cn = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * u);

    auto sigmoid = [](T z) {
      if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
      const T e = std::exp(z);
      return e / (T(1) + e);
    };

    {
      Tensor<T>& hn = node(hn_id);
      Tensor<T>& cn = node(cn_id);
      std::vector<T> z(static_cast<std::size_t>(4) * u);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 4 * u; ++j) z[static_cast<std::size_t>(j)] = b.tensor.v[static_cast<std::size_t>(j)];
        const T* xr = &x.v[static_cast<std::size_t>(i) * d];
        for (int kk = 0; kk < d; ++kk) {
          const T xv = xr[kk];
          const T* wr = &W.tensor.v[static_cast<std::size_t>(kk) * 4 * u];
          for (int j = 0; j < 4 * u; ++j) z[static_cast<std::size_t>(j)] += xv * wr[j];
        }
        const T* hr = &h.v[static_cast<std::size_t>(i) * u];
        for (int kk = 0; kk < u; ++kk) {
          const T hv = hr[kk];
          const T* ur = &U.tensor.v[static_cast<std::size_t>(kk) * 4 * u];
          for (int j = 0; j < 4 * u; ++j) z[static_cast<std::size_t>(j)] += hv * ur[j];
        }
        T* gi = &(*gates)[static_cast<std::size_t>(i) * 4 * u];
        for (int j = 0; j < u; ++j) {
          const T ig = sigmoid(z[static_cast<std::size_t>(j)]);
          const T fg = sigmoid(z[static_cast<std::size_t>(u + j)]);
          const T gg = std::tanh(z[static_cast<std::size_t>(2 * u + j)]);
          const T og = sigmoid(z[static_cast<std::size_t>(3 * u + j)]);
          gi[j] = ig;
          gi[u + j] = fg;
          gi[2 * u + j] = gg;
          gi[3 * u + j] = og;
          const T cv = fg * c.at(i, j) + ig * gg;
          cn.at(i, j) = cv;
          const T tc = std::tanh(cv);
          (*tanh_cn)[static_cast<std::size_t>(i) * u + j] = tc;
          hn.at(i, j) = og * tc;
        }
      }
    }
    W.tensor.ensure_grad();
    U.tensor.ensure_grad();
    b.tensor.ensure_grad();
    back_.push_back([this, x_id, h_id, c_id, hn_id, cn_id, gates, tanh_cn, &W, &U, &b, n, d, u] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& h = node(h_id);
      Tensor<T>& c = node(c_id);
      Tensor<T>& hn = node(hn_id);
      Tensor<T>& cn = node(cn_id);
      std::vector<T> dz(static_cast<std::size_t>(4) * u);
      for (int i = 0; i < n; ++i) {
        const T* gi = &(*gates)[static_cast<std::size_t>(i) * 4 * u];
        for (int j = 0; j < u; ++j) {
          const T ig = gi[j], fg = gi[u + j], gg = gi[2 * u + j], og = gi[3 * u + j];
          const T tc = (*tanh_cn)[static_cast<std::size_t>(i) * u + j];
          const T dh = hn.gat(i, j);
          const T dc_total = cn.gat(i, j) + dh * og * (T(1) - tc * tc);
          const T do_ = dh * tc;
          const T df = dc_total * c.at(i, j);
          const T di = dc_total * gg;
          const T dg = dc_total * ig;
          c.gat(i, j) += dc_total * fg;
          dz[static_cast<std::size_t>(j)] = di * ig * (T(1) - ig);
          dz[static_cast<std::size_t>(u + j)] = df * fg * (T(1) - fg);
          dz[static_cast<std::size_t>(2 * u + j)] = dg * (T(1) - gg * gg);
          dz[static_cast<std::size_t>(3 * u + j)] = do_ * og * (T(1) - og);
        }
        const T* xr = &x.v[static_cast<std::size_t>(i) * d];
        T* dxr = &x.g[static_cast<std::size_t>(i) * d];
        for (int kk = 0; kk < d; ++kk) {
          const T* wr = &W.tensor.v[static_cast<std::size_t>(kk) * 4 * u];
          T* dwr = &W.tensor.g[static_cast<std::size_t>(kk) * 4 * u];
          T acc = T(0);
          const T xv = xr[kk];
          for (int j = 0; j < 4 * u; ++j) {
            acc += dz[static_cast<std::size_t>(j)] * wr[j];
            dwr[j] += xv * dz[static_cast<std::size_t>(j)];
          }
          dxr[kk] += acc;
        }
        const T* hr = &h.v[static_cast<std::size_t>(i) * u];
        T* dhr = &h.g[static_cast<std::size_t>(i) * u];
        for (int kk = 0; kk < u; ++kk) {
          const T* ur = &U.tensor.v[static_cast<std::size_t>(kk) * 4 * u];
          T* dur = &U.tensor.g[static_cast<std::size_t>(kk) * 4 * u];
          T acc = T(0);
          const T hv = hr[kk];
          for (int j = 0; j < 4 * u; ++j) {
            acc += dz[static_cast<std::size_t>(j)] * ur[j];
            dur[j] += hv * dz[static_cast<std::size_t>(j)];
          }
          dhr[kk] += acc;
        }
        for (int j = 0; j < 4 * u; ++j) b.tensor.g[static_cast<std::size_t>(j)] += dz[static_cast<std::size_t>(j)];
      }
    });
    return {hn_id, cn_id};
  }

  // Row-wise softmax with max subtraction.
  NodeId softmax(NodeId x_id) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2, "softmax: input must be rank 2");
    for (T v : x.v) {
      if (std::isnan(v)) throw PreconditionError("softmax: NaN input");
    }
    const int n = x.rows(), k = x.cols();
    const NodeId y_id = make({n, k});
    Tensor<T>& y = node(y_id);
    for (int i = 0; i < n; ++i) {
      const T* xr = &x.v[static_cast<std::size_t>(i) * k];
      T* yr = &y.v[static_cast<std::size_t>(i) * k];
      T mx = xr[0];
      for (int j = 1; j < k; ++j) mx = std::max(mx, xr[j]);
      T sum = T(0);
      for (int j = 0; j < k; ++j) {
        yr[j] = std::exp(xr[j] - mx);
        sum += yr[j];
      }
      for (int j = 0; j < k; ++j) yr[j] /= sum;
    }
    back_.push_back([this, x_id, y_id, n, k] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (int i = 0; i < n; ++i) {
        const T* yr = &y.v[static_cast<std::size_t>(i) * k];
        const T* dyr = &y.g[static_cast<std::size_t>(i) * k];
        T dot = T(0);
        for (int j = 0; j < k; ++j) dot += dyr[j] * yr[j];
        T* dxr = &x.g[static_cast<std::size_t>(i) * k];
        for (int j = 0; j < k; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
      }
    });
    return y_id;
  }

  // Single attention distribution over time, shared by all feature dims:
  // e_t = x_t . w + beta, scores = softmax(e), y_c = sum_t scores_t x_tc.
  std::pair<NodeId, NodeId> attention_1d(NodeId x_id, Parameter<T>& w, Parameter<T>& beta) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2 && x.rows() >= 1, "attention_1d: input must be rank 2, T >= 1");
    const int t_len = x.rows(), c = x.cols();
    require(w.tensor.size() == static_cast<std::size_t>(c), "attention_1d: w shape mismatch");
    require(beta.tensor.size() == 1, "attention_1d: beta must be a scalar");

    const NodeId s_id = make({t_len});
    const NodeId y_id = make({c});
    Tensor<T>& s = node(s_id);
    Tensor<T>& y = node(y_id);
    {
      T mx = -std::numeric_limits<T>::infinity();
      for (int t = 0; t < t_len; ++t) {
        T e = beta.tensor.v[0];
        const T* xr = &x.v[static_cast<std::size_t>(t) * c];
        for (int j = 0; j < c; ++j) e += xr[j] * w.tensor.v[static_cast<std::size_t>(j)];
        s.v[static_cast<std::size_t>(t)] = e;
        mx = std::max(mx, e);
      }
      T sum = T(0);
      for (int t = 0; t < t_len; ++t) {
        s.v[static_cast<std::size_t>(t)] = std::exp(s.v[static_cast<std::size_t>(t)] - mx);
        sum += s.v[static_cast<std::size_t>(t)];
      }
      for (int t = 0; t < t_len; ++t) s.v[static_cast<std::size_t>(t)] /= sum;
      for (int j = 0; j < c; ++j) {
        T acc = T(0);
        for (int t = 0; t < t_len; ++t) acc += s.v[static_cast<std::size_t>(t)] * x.at(t, j);
        y.v[static_cast<std::size_t>(j)] = acc;
      }
    }
    w.tensor.ensure_grad();
    beta.tensor.ensure_grad();
    back_.push_back([this, x_id, s_id, y_id, &w, &beta, t_len, c] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& s = node(s_id);
      Tensor<T>& y = node(y_id);
      // upstream into scores: direct use plus the weighted sum.
      std::vector<T> ds(static_cast<std::size_t>(t_len));
      for (int t = 0; t < t_len; ++t) {
        T acc = s.g[static_cast<std::size_t>(t)];
        const T* xr = &x.v[static_cast<std::size_t>(t) * c];
        for (int j = 0; j < c; ++j) acc += y.g[static_cast<std::size_t>(j)] * xr[j];
        ds[static_cast<std::size_t>(t)] = acc;
        T* dxr = &x.g[static_cast<std::size_t>(t) * c];
        const T st = s.v[static_cast<std::size_t>(t)];
        for (int j = 0; j < c; ++j) dxr[j] += st * y.g[static_cast<std::size_t>(j)];
      }
      T dot = T(0);
      for (int t = 0; t < t_len; ++t) dot += ds[static_cast<std::size_t>(t)] * s.v[static_cast<std::size_t>(t)];
      for (int t = 0; t < t_len; ++t) {
        const T de = s.v[static_cast<std::size_t>(t)] * (ds[static_cast<std::size_t>(t)] - dot);
        const T* xr = &x.v[static_cast<std::size_t>(t) * c];
        T* dxr = &x.g[static_cast<std::size_t>(t) * c];
        for (int j = 0; j < c; ++j) {
          w.tensor.g[static_cast<std::size_t>(j)] += de * xr[j];
          dxr[j] += de * w.tensor.v[static_cast<std::size_t>(j)];
        }
        beta.tensor.g[0] += de;
      }
    });
    return {y_id, s_id};
  }

  // Separate attention distribution per feature dimension:
  // scores[., c] = softmax_t(x[., c] w_c + beta_c), y_c = sum_t scores_tc x_tc.
  std::pair<NodeId, NodeId> attention_2d(NodeId x_id, Parameter<T>& w, Parameter<T>& beta) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2 && x.rows() >= 1, "attention_2d: input must be rank 2, T >= 1");
    const int t_len = x.rows(), c = x.cols();
    require(w.tensor.size() == static_cast<std::size_t>(c), "attention_2d: w shape mismatch");
    require(beta.tensor.size() == static_cast<std::size_t>(c), "attention_2d: beta shape mismatch");

    const NodeId s_id = make({t_len, c});
    const NodeId y_id = make({c});
    Tensor<T>& s = node(s_id);
    Tensor<T>& y = node(y_id);
    for (int j = 0; j < c; ++j) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int t = 0; t < t_len; ++t) {
        const T e = x.at(t, j) * w.tensor.v[static_cast<std::size_t>(j)] + beta.tensor.v[static_cast<std::size_t>(j)];
        s.at(t, j) = e;
        mx = std::max(mx, e);
      }
      T sum = T(0);
      for (int t = 0; t < t_len; ++t) {
        s.at(t, j) = std::exp(s.at(t, j) - mx);
        sum += s.at(t, j);
      }
      T acc = T(0);
      for (int t = 0; t < t_len; ++t) {
        s.at(t, j) /= sum;
        acc += s.at(t, j) * x.at(t, j);
      }
      y.v[static_cast<std::size_t>(j)] = acc;
    }
    w.tensor.ensure_grad();
    beta.tensor.ensure_grad();
    back_.push_back([this, x_id, s_id, y_id, &w, &beta, t_len, c] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& s = node(s_id);
      Tensor<T>& y = node(y_id);
      for (int j = 0; j < c; ++j) {
        T dot = T(0);
        std::vector<T> ds(static_cast<std::size_t>(t_len));
        for (int t = 0; t < t_len; ++t) {
          const T d = s.gat(t, j) + y.g[static_cast<std::size_t>(j)] * x.at(t, j);
          ds[static_cast<std::size_t>(t)] = d;
          dot += d * s.at(t, j);
          x.gat(t, j) += s.at(t, j) * y.g[static_cast<std::size_t>(j)];
        }
        for (int t = 0; t < t_len; ++t) {
          const T de = s.at(t, j) * (ds[static_cast<std::size_t>(t)] - dot);
          w.tensor.g[static_cast<std::size_t>(j)] += de * x.at(t, j);
          beta.tensor.g[static_cast<std::size_t>(j)] += de;
          x.gat(t, j) += de * w.tensor.v[static_cast<std::size_t>(j)];
        }
      }
    });
    return {y_id, s_id};
  }

  // Inverted dropout: train mode zeroes with probability p and scales the
  // survivors by 1/(1-p); eval mode is the identity.
  NodeId dropout(NodeId x_id, double p, Mode mode, Rng& rng) {
    require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
    const Tensor<T>& x = node(x_id);
    const NodeId y_id = make(x.shape);
    Tensor<T>& y = node(y_id);
    if (mode == Mode::kEval || p == 0.0) {
      y.v = x.v;
      back_.push_back([this, x_id, y_id] {
        Tensor<T>& x = node(x_id);
        Tensor<T>& y = node(y_id);
        for (std::size_t i = 0; i < x.g.size(); ++i) x.g[i] += y.g[i];
      });
      return y_id;
    }
    auto mask = std::make_shared<std::vector<T>>(x.size());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
    for (std::size_t i = 0; i < x.size(); ++i) {
      (*mask)[i] = rng.uniform() < p ? T(0) : keep_scale;
      y.v[i] = x.v[i] * (*mask)[i];
    }
    back_.push_back([this, x_id, y_id, mask] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < x.g.size(); ++i) x.g[i] += y.g[i] * (*mask)[i];
    });
    return y_id;
  }

  // ---- elementwise and structural ops ----------------------------------

  NodeId relu(NodeId x_id) {
    const Tensor<T>& x = node(x_id);
    const NodeId y_id = make(x.shape);
    Tensor<T>& y = node(y_id);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > T(0) ? x.v[i] : T(0);
    back_.push_back([this, x_id, y_id] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < x.g.size(); ++i) {
        if (x.v[i] > T(0)) x.g[i] += y.g[i];
      }
    });
    return y_id;
  }

  NodeId tanh_act(NodeId x_id) {
    const Tensor<T>& x = node(x_id);
    const NodeId y_id = make(x.shape);
    Tensor<T>& y = node(y_id);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = std::tanh(x.v[i]);
    back_.push_back([this, x_id, y_id] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < x.g.size(); ++i) x.g[i] += y.g[i] * (T(1) - y.v[i] * y.v[i]);
    });
    return y_id;
  }

  NodeId add(NodeId a_id, NodeId b_id) {
    const Tensor<T>& a = node(a_id);
    const Tensor<T>& b = node(b_id);
    require(a.shape == b.shape, "add: shape mismatch");
    const NodeId y_id = make(a.shape);
    Tensor<T>& y = node(y_id);
    for (std::size_t i = 0; i < a.size(); ++i) y.v[i] = a.v[i] + b.v[i];
    back_.push_back([this, a_id, b_id, y_id] {
      Tensor<T>& a = node(a_id);
      Tensor<T>& b = node(b_id);
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < y.g.size(); ++i) {
        a.g[i] += y.g[i];
        b.g[i] += y.g[i];
      }
    });
    return y_id;
  }

  NodeId scale(NodeId x_id, T factor) {
    const Tensor<T>& x = node(x_id);
    const NodeId y_id = make(x.shape);
    Tensor<T>& y = node(y_id);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] * factor;
    back_.push_back([this, x_id, y_id, factor] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < x.g.size(); ++i) x.g[i] += y.g[i] * factor;
    });
    return y_id;
  }

  NodeId reshape(NodeId x_id, Shape shape) {
    const Tensor<T>& x = node(x_id);
    require(shape_size(shape) == x.size(), "reshape: element count mismatch");
    const NodeId y_id = make(std::move(shape));
    Tensor<T>& y = node(y_id);
    y.v = x.v;
    back_.push_back([this, x_id, y_id] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < x.g.size(); ++i) x.g[i] += y.g[i];
    });
    return y_id;
  }

  // Rows [row0, row1) of a rank-2 tensor.
  NodeId slice_rows(NodeId x_id, int row0, int row1) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() == 2, "slice_rows: input must be rank 2");
    require(0 <= row0 && row0 < row1 && row1 <= x.rows(), "slice_rows: range out of bounds");
    const int c = x.cols();
    const NodeId y_id = make({row1 - row0, c});
    Tensor<T>& y = node(y_id);
    std::copy(x.v.begin() + static_cast<std::ptrdiff_t>(row0) * c,
              x.v.begin() + static_cast<std::ptrdiff_t>(row1) * c, y.v.begin());
    back_.push_back([this, x_id, y_id, row0, c] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < y.g.size(); ++i) {
        x.g[static_cast<std::size_t>(row0) * c + i] += y.g[i];
      }
    });
    return y_id;
  }

  // Broadcasts a single row to n rows.
  NodeId repeat_row(NodeId x_id, int n) {
    const Tensor<T>& x = node(x_id);
    require(x.shape.size() <= 2, "repeat_row: input must be a row");
    require(x.shape.size() == 1 || x.rows() == 1, "repeat_row: input must be a single row");
    const int c = static_cast<int>(x.size());
    const NodeId y_id = make({n, c});
    Tensor<T>& y = node(y_id);
    for (int i = 0; i < n; ++i) {
      std::copy(x.v.begin(), x.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(i) * c);
    }
    back_.push_back([this, x_id, y_id, n, c] {
      Tensor<T>& x = node(x_id);
      Tensor<T>& y = node(y_id);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < c; ++j) x.g[static_cast<std::size_t>(j)] += y.g[static_cast<std::size_t>(i) * c + j];
      }
    });
    return y_id;
  }

  NodeId concat_cols(NodeId a_id, NodeId b_id) {
    const Tensor<T>& a = node(a_id);
    const Tensor<T>& b = node(b_id);
    require(a.shape.size() == 2 && b.shape.size() == 2 && a.rows() == b.rows(),
            "concat_cols: need rank-2 inputs with equal row counts");
    const int n = a.rows(), ca = a.cols(), cb = b.cols();
    const NodeId y_id = make({n, ca + cb});
    Tensor<T>& y = node(y_id);
    for (int i = 0; i < n; ++i) {
      std::copy(a.v.begin() + static_cast<std::ptrdiff_t>(i) * ca,
                a.v.begin() + static_cast<std::ptrdiff_t>(i + 1) * ca,
                y.v.begin() + static_cast<std::ptrdiff_t>(i) * (ca + cb));
      std::copy(b.v.begin() + static_cast<std::ptrdiff_t>(i) * cb,
                b.v.begin() + static_cast<std::ptrdiff_t>(i + 1) * cb,
                y.v.begin() + static_cast<std::ptrdiff_t>(i) * (ca + cb) + ca);
    }
    back_.push_back([this, a_id, b_id, y_id, n, ca, cb] {
      Tensor<T>& a = node(a_id);
      Tensor<T>& b = node(b_id);
      Tensor<T>& y = node(y_id);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ca; ++j) {
          a.g[static_cast<std::size_t>(i) * ca + j] += y.g[static_cast<std::size_t>(i) * (ca + cb) + j];
        }
        for (int j = 0; j < cb; ++j) {
          b.g[static_cast<std::size_t>(i) * cb + j] += y.g[static_cast<std::size_t>(i) * (ca + cb) + ca + j];
        }
      }
    });
    return y_id;
  }

  // Stacks single-row nodes into one [n, k] batch.
  NodeId stack_rows(const std::vector<NodeId>& ids) {
    require(!ids.empty(), "stack_rows: empty input");
    const int k = static_cast<int>(node(ids[0]).size());
    for (NodeId id : ids) {
      require(static_cast<int>(node(id).size()) == k, "stack_rows: row length mismatch");
    }
    const int n = static_cast<int>(ids.size());
    const NodeId y_id = make({n, k});
    Tensor<T>& y = node(y_id);
    for (int i = 0; i < n; ++i) {
      const Tensor<T>& r = node(ids[static_cast<std::size_t>(i)]);
      std::copy(r.v.begin(), r.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(i) * k);
    }
    auto ids_copy = std::make_shared<std::vector<NodeId>>(ids);
    back_.push_back([this, ids_copy, y_id, k] {
      Tensor<T>& y = node(y_id);
      for (std::size_t i = 0; i < ids_copy->size(); ++i) {
        Tensor<T>& r = node((*ids_copy)[i]);
        for (int j = 0; j < k; ++j) r.g[static_cast<std::size_t>(j)] += y.g[i * static_cast<std::size_t>(k) + j];
      }
    });
    return y_id;
  }

  // ---- losses -----------------------------------------------------------

  // Mean of -log(probs[i, labels[i]]), probabilities clamped at 1e-12.
  NodeId cross_entropy(NodeId probs_id, const std::vector<int>& labels) {
    const Tensor<T>& p = node(probs_id);
    require(p.shape.size() == 2, "cross_entropy: probs must be rank 2");
    const int n = p.rows(), k = p.cols();
    require(static_cast<int>(labels.size()) == n, "cross_entropy: label count mismatch");
    for (int i = 0; i < n; ++i) {
      require(labels[static_cast<std::size_t>(i)] >= 0 && labels[static_cast<std::size_t>(i)] < k,
              "cross_entropy: label out of range");
      T row_sum = T(0);
      for (int j = 0; j < k; ++j) row_sum += p.at(i, j);
      require(std::abs(static_cast<double>(row_sum) - 1.0) < 0.05,
              "cross_entropy: probability rows must sum to 1");
    }
    const NodeId l_id = make({1});
    Tensor<T>& l = node(l_id);
    const T clamp = static_cast<T>(1e-12);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc -= std::log(static_cast<double>(std::max(p.at(i, labels[static_cast<std::size_t>(i)]), clamp)));
    }
    l.v[0] = static_cast<T>(acc / n);
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    back_.push_back([this, probs_id, l_id, labels_copy, n, clamp] {
      Tensor<T>& p = node(probs_id);
      Tensor<T>& l = node(l_id);
      const T dl = l.g[0];
      for (int i = 0; i < n; ++i) {
        const int lab = (*labels_copy)[static_cast<std::size_t>(i)];
        const T pv = std::max(p.at(i, lab), clamp);
        p.gat(i, lab) -= dl / (static_cast<T>(n) * pv);
      }
    });
    return l_id;
  }

  // Fused softmax + cross-entropy on logits; backward is (probs - onehot)/n.
  // Returns {loss, probs}.
  std::pair<NodeId, NodeId> softmax_cross_entropy(NodeId logits_id, const std::vector<int>& labels) {
    const NodeId probs_id = softmax(logits_id);
    const Tensor<T>& probs = node(probs_id);
    const int n = probs.rows(), k = probs.cols();
    require(static_cast<int>(labels.size()) == n, "softmax_cross_entropy: label count mismatch");
    for (int lab : labels) {
      require(lab >= 0 && lab < k, "softmax_cross_entropy: label out of range");
    }
    // The softmax node above handles forward normalization; the fused
    // backward writes straight into the logits, bypassing the softmax
    // Jacobian for stability.
    const NodeId l_id = make({1});
    Tensor<T>& l = node(l_id);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc -= std::log(std::max(static_cast<double>(probs.at(i, labels[static_cast<std::size_t>(i)])), 1e-300));
    }
    l.v[0] = static_cast<T>(acc / n);
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    back_.push_back([this, logits_id, probs_id, l_id, labels_copy, n, k] {
      Tensor<T>& logits = node(logits_id);
      Tensor<T>& probs = node(probs_id);
      Tensor<T>& l = node(l_id);
      const T dl = l.g[0];
      for (int i = 0; i < n; ++i) {
        const int lab = (*labels_copy)[static_cast<std::size_t>(i)];
        for (int j = 0; j < k; ++j) {
          const T onehot = j == lab ? T(1) : T(0);
          logits.gat(i, j) += dl * (probs.at(i, j) - onehot) / static_cast<T>(n);
        }
      }
    });
    return {l_id, probs_id};
  }

  // Mean over all entries of (a - b)^2.
  NodeId mse(NodeId a_id, NodeId b_id) {
    const Tensor<T>& a = node(a_id);
    const Tensor<T>& b = node(b_id);
    require(a.shape == b.shape, "mse: shape mismatch");
    const NodeId l_id = make({1});
    Tensor<T>& l = node(l_id);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
      acc += d * d;
    }
    const std::size_t count = a.size();
    l.v[0] = static_cast<T>(acc / static_cast<double>(count));
    back_.push_back([this, a_id, b_id, l_id, count] {
      Tensor<T>& a = node(a_id);
      Tensor<T>& b = node(b_id);
      Tensor<T>& l = node(l_id);
      const T f = T(2) * l.g[0] / static_cast<T>(count);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = a.v[i] - b.v[i];
        a.g[i] += f * d;
        b.g[i] -= f * d;
      }
    });
    return l_id;
  }

  // ---- backward ---------------------------------------------------------

  void backward(NodeId loss_id) {
    Tensor<T>& loss = node(loss_id);
    require(loss.size() == 1, "backward: loss must be a scalar");
    for (auto& t : nodes_) t.zero_grad();
    loss.g[0] = T(1);
    for (auto it = back_.rbegin(); it != back_.rend(); ++it) (*it)();
  }

 private:
  std::deque<Tensor<T>> nodes_;
  std::vector<std::function<void()>> back_;
};

// ---- optimizers ----------------------------------------------------------

// Adam with bias correction; gradients are zeroed after the update.
template <typename T>
inline void adam_step(const std::vector<Parameter<T>*>& params, double lr = 0.001,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  for (Parameter<T>* p : params) {
    if (!p->tensor.has_grad()) {
      throw PreconditionError("adam_step: parameter '" + p->name + "' has no gradient");
    }
    if (p->moment1.size() != p->size()) p->moment1.assign(p->size(), T(0));
    if (p->moment2.size() != p->size()) p->moment2.assign(p->size(), T(0));
    p->step_count += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(p->step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(p->step_count));
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = static_cast<double>(p->tensor.g[i]);
      const double m = beta1 * static_cast<double>(p->moment1[i]) + (1.0 - beta1) * g;
      const double v = beta2 * static_cast<double>(p->moment2[i]) + (1.0 - beta2) * g * g;
      p->moment1[i] = static_cast<T>(m);
      p->moment2[i] = static_cast<T>(v);
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      p->tensor.v[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + eps));
    }
    p->zero_grad();
  }
}

// RMSProp (no bias correction); gradients are zeroed after the update.
template <typename T>
inline void rmsprop_step(const std::vector<Parameter<T>*>& params, double lr = 0.001,
                         double rho = 0.9, double eps = 1e-8) {
  for (Parameter<T>* p : params) {
    if (!p->tensor.has_grad()) {
      throw PreconditionError("rmsprop_step: parameter '" + p->name + "' has no gradient");
    }
    if (p->moment2.size() != p->size()) p->moment2.assign(p->size(), T(0));
    p->step_count += 1;
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = static_cast<double>(p->tensor.g[i]);
      const double v = rho * static_cast<double>(p->moment2[i]) + (1.0 - rho) * g * g;
      p->moment2[i] = static_cast<T>(v);
      p->tensor.v[i] -= static_cast<T>(lr * g / (std::sqrt(v) + eps));
    }
    p->zero_grad();
  }
}

// ---- finite-difference gradient checking ---------------------------------

// Compares analytic gradients (already accumulated into each tensor's .g)
// against central finite differences of loss_fn, which must recompute the
// scalar loss from the tensors' current values. Returns the max relative
// error |a - n| / max(|a|, |n|, 1e-8).
template <typename T, typename LossFn>
inline double grad_check(LossFn&& loss_fn, const std::vector<Tensor<T>*>& wrt, double eps = 1e-3) {
  double max_rel = 0.0;
  for (Tensor<T>* t : wrt) {
    require(t->has_grad(), "grad_check: tensor has no analytic gradient");
    for (std::size_t i = 0; i < t->size(); ++i) {
      const T saved = t->v[i];
      t->v[i] = saved + static_cast<T>(eps);
      const double f_plus = static_cast<double>(loss_fn());
      t->v[i] = saved - static_cast<T>(eps);
      const double f_minus = static_cast<double>(loss_fn());
      t->v[i] = saved;
      const double numeric = (f_plus - f_minus) / (2.0 * eps);
      const double analytic = static_cast<double>(t->g[i]);
      // The 1e-4 floor makes near-zero components an absolute comparison;
      // finite differences cannot resolve relative error below roundoff.
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace accentlab
