// accentlab/analysis.hpp
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
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "accentlab/error.hpp"
#include "accentlab/rng.hpp"

namespace accentlab {

// Low-dimensional view of a point set, with enough metadata to reproduce it.
struct Embedding {
  int n = 0;
  int dims = 0;
  std::vector<double> points;  // n * dims, row-major
  std::vector<int> labels;     // may be empty
  std::string method;
  double perplexity = 0.0;
  double learning_rate = 0.0;
  int epochs = 0;
  std::vector<double> kl_history;  // t-SNE objective per epoch
  std::vector<std::string> warnings;

  double at(int i, int j) const { return points[static_cast<std::size_t>(i) * dims + j]; }
};

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. A is destroyed;
// eigenvalues land in `vals` and the orthonormal eigenvectors in the
// columns of `vecs`, both sorted by descending eigenvalue.
inline void jacobi_eigen(std::vector<double>& A, int m, std::vector<double>& vals,
                         std::vector<double>& vecs) {
  auto a = [&](int i, int j) -> double& { return A[static_cast<std::size_t>(i) * m + j]; };
  vecs.assign(static_cast<std::size_t>(m) * m, 0.0);
  auto v = [&](int i, int j) -> double& { return vecs[static_cast<std::size_t>(i) * m + j]; };
  for (int i = 0; i < m; ++i) v(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < m; ++p) {
      for (int q = p + 1; q < m; ++q) off += a(p, q) * a(p, q);
    }
    if (off < 1e-24 * m * m) break;
    for (int p = 0; p < m; ++p) {
      for (int q = p + 1; q < m; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < m; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < m; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < m; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  vals.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) vals[static_cast<std::size_t>(i)] = a(i, i);

  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return vals[static_cast<std::size_t>(x)] > vals[static_cast<std::size_t>(y)]; });
  std::vector<double> sorted_vals(static_cast<std::size_t>(m));
  std::vector<double> sorted_vecs(static_cast<std::size_t>(m) * m);
  for (int j = 0; j < m; ++j) {
    sorted_vals[static_cast<std::size_t>(j)] = vals[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
    for (int i = 0; i < m; ++i) {
      sorted_vecs[static_cast<std::size_t>(i) * m + j] = v(i, order[static_cast<std::size_t>(j)]);
    }
  }
  vals = std::move(sorted_vals);
  vecs = std::move(sorted_vecs);
}

}  // namespace detail

struct PcaResult {
  Embedding embedding;                     // projections onto the top-k components
  std::vector<double> components;          // k * d, row-major, orthonormal rows
  std::vector<double> explained_variance;  // k, non-increasing
  std::vector<double> mean;                // d, for reconstruction
};

// Principal components via eigendecomposition of whichever of the d*d
// covariance or n*n Gram matrix is smaller. A request beyond the data rank
// zero-pads the trailing components and records a warning.
inline PcaResult pca(const std::vector<double>& X, int n, int d, int k,
                     std::vector<int> labels = {}) {
  require(n >= 2, "pca: need at least 2 points");
  require(k >= 1 && k <= std::min(n, d), "pca: k must be in [1, min(n,d)]");
  require(X.size() == static_cast<std::size_t>(n) * d, "pca: matrix size mismatch");
  require(labels.empty() || labels.size() == static_cast<std::size_t>(n),
          "pca: label count mismatch");

  PcaResult res;
  res.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) res.mean[static_cast<std::size_t>(j)] += X[static_cast<std::size_t>(i) * d + j];
  }
  for (auto& m : res.mean) m /= n;
  std::vector<double> C(X.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      C[static_cast<std::size_t>(i) * d + j] = X[static_cast<std::size_t>(i) * d + j] - res.mean[static_cast<std::size_t>(j)];
    }
  }

  std::vector<double> vals, vecs;
  res.components.assign(static_cast<std::size_t>(k) * d, 0.0);
  if (d <= n) {
    std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* row = &C[static_cast<std::size_t>(i) * d];
      for (int p = 0; p < d; ++p) {
        for (int q = p; q < d; ++q) cov[static_cast<std::size_t>(p) * d + q] += row[p] * row[q];
      }
    }
    for (int p = 0; p < d; ++p) {
      for (int q = p; q < d; ++q) {
        cov[static_cast<std::size_t>(p) * d + q] /= (n - 1);
        cov[static_cast<std::size_t>(q) * d + p] = cov[static_cast<std::size_t>(p) * d + q];
      }
    }
    detail::jacobi_eigen(cov, d, vals, vecs);
    for (int c = 0; c < k; ++c) {
      for (int j = 0; j < d; ++j) {
        res.components[static_cast<std::size_t>(c) * d + j] = vecs[static_cast<std::size_t>(j) * d + c];
      }
    }
  } else {
    std::vector<double> gram(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j2 = i; j2 < n; ++j2) {
        double acc = 0.0;
        for (int p = 0; p < d; ++p) {
          acc += C[static_cast<std::size_t>(i) * d + p] * C[static_cast<std::size_t>(j2) * d + p];
        }
        gram[static_cast<std::size_t>(i) * n + j2] = acc / (n - 1);
        gram[static_cast<std::size_t>(j2) * n + i] = gram[static_cast<std::size_t>(i) * n + j2];
      }
    }
    detail::jacobi_eigen(gram, n, vals, vecs);
    for (int c = 0; c < k; ++c) {
      const double lam = vals[static_cast<std::size_t>(c)];
      if (lam <= 0.0) continue;  // rank handling below
      const double norm = std::sqrt(lam * (n - 1));
      for (int j = 0; j < d; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
          acc += C[static_cast<std::size_t>(i) * d + j] * vecs[static_cast<std::size_t>(i) * n + c];
        }
        res.components[static_cast<std::size_t>(c) * d + j] = acc / norm;
      }
    }
  }

  const double lam_max = vals.empty() ? 0.0 : std::max(vals[0], 0.0);
  int rank = 0;
  for (int c = 0; c < k; ++c) {
    const double lam = vals[static_cast<std::size_t>(c)];
    if (lam > lam_max * 1e-12 && lam > 1e-300) {
      ++rank;
    } else {
      for (int j = 0; j < d; ++j) res.components[static_cast<std::size_t>(c) * d + j] = 0.0;
    }
  }
  res.explained_variance.assign(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < rank; ++c) res.explained_variance[static_cast<std::size_t>(c)] = vals[static_cast<std::size_t>(c)];
  if (rank < k) {
    res.embedding.warnings.push_back("requested " + std::to_string(k) +
                                     " components but data rank is " + std::to_string(rank) +
                                     "; trailing components zero-padded");
  }

  res.embedding.n = n;
  res.embedding.dims = k;
  res.embedding.method = "pca";
  res.embedding.labels = std::move(labels);
  res.embedding.points.assign(static_cast<std::size_t>(n) * k, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < k; ++c) {
      double acc = 0.0;
      for (int j = 0; j < d; ++j) {
        acc += C[static_cast<std::size_t>(i) * d + j] * res.components[static_cast<std::size_t>(c) * d + j];
      }
      res.embedding.points[static_cast<std::size_t>(i) * k + c] = acc;
    }
  }
  return res;
}

struct TsneParams {
  double perplexity = 5.0;
  double learning_rate = 100.0;
  int epochs = 400;
  int out_dims = 2;
  std::uint64_t seed = 0;
};

// Exact O(n^2) t-SNE: per-point bandwidths found by binary search to the
// requested perplexity, early exaggeration x12 for the first 50 epochs,
// momentum 0.5 -> 0.8 after epoch 250, adaptive per-coordinate gains.
// Deterministic for a given seed.
inline Embedding tsne(const std::vector<double>& X, int n, int d, const TsneParams& prm,
                      std::vector<int> labels = {}) {
  require(n >= 2, "tsne: need at least 2 points");
  require(X.size() == static_cast<std::size_t>(n) * d, "tsne: matrix size mismatch");
  require(prm.out_dims == 2 || prm.out_dims == 3, "tsne: out_dims must be 2 or 3");
  require(prm.epochs >= 1, "tsne: epochs must be >= 1");
  require(prm.perplexity > 0, "tsne: perplexity must be positive");
  if (!(prm.perplexity < (n - 1) / 3.0)) {
    throw PreconditionError("tsne: perplexity " + std::to_string(prm.perplexity) +
                            " too large for " + std::to_string(n) +
                            " points (need perplexity < (n-1)/3)");
  }
  require(labels.empty() || labels.size() == static_cast<std::size_t>(n),
          "tsne: label count mismatch");

  const std::size_t nn = static_cast<std::size_t>(n);
  std::vector<double> d2(nn * nn, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < d; ++p) {
        const double diff = X[static_cast<std::size_t>(i) * d + p] - X[static_cast<std::size_t>(j) * d + p];
        acc += diff * diff;
      }
      d2[static_cast<std::size_t>(i) * nn + j] = acc;
      d2[static_cast<std::size_t>(j) * nn + i] = acc;
    }
  }

  // Conditional distributions at the target entropy log(perplexity).
  std::vector<double> P(nn * nn, 0.0);
  const double target_h = std::log(prm.perplexity);
  std::vector<double> row(nn);
  for (int i = 0; i < n; ++i) {
    double beta = 1.0, beta_min = -1.0, beta_max = -1.0;
    for (int iter = 0; iter < 64; ++iter) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        row[static_cast<std::size_t>(j)] =
            j == i ? 0.0 : std::exp(-beta * d2[static_cast<std::size_t>(i) * nn + j]);
        sum += row[static_cast<std::size_t>(j)];
      }
      double h = 0.0;
      for (int j = 0; j < n; ++j) {
        if (row[static_cast<std::size_t>(j)] > 0.0) {
          const double p = row[static_cast<std::size_t>(j)] / sum;
          h -= p * std::log(p);
        }
      }
      const double diff = h - target_h;
      if (std::abs(diff) < 1e-7) break;
      if (diff > 0) {  // entropy too high: sharpen
        beta_min = beta;
        beta = beta_max < 0 ? beta * 2.0 : (beta + beta_max) / 2.0;
      } else {
        beta_max = beta;
        beta = beta_min < 0 ? beta / 2.0 : (beta + beta_min) / 2.0;
      }
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      row[static_cast<std::size_t>(j)] =
          j == i ? 0.0 : std::exp(-beta * d2[static_cast<std::size_t>(i) * nn + j]);
      sum += row[static_cast<std::size_t>(j)];
    }
    for (int j = 0; j < n; ++j) {
      P[static_cast<std::size_t>(i) * nn + j] = row[static_cast<std::size_t>(j)] / sum;
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double p = (P[static_cast<std::size_t>(i) * nn + j] + P[static_cast<std::size_t>(j) * nn + i]) / (2.0 * n);
      const double pf = std::max(p, 1e-12);
      P[static_cast<std::size_t>(i) * nn + j] = pf;
      P[static_cast<std::size_t>(j) * nn + i] = pf;
    }
  }

  const int dims = prm.out_dims;
  Rng rng = Rng(prm.seed).substream("tsne");
  std::vector<double> Y(nn * dims);
  for (auto& y : Y) y = rng.normal() * 1e-4;
  std::vector<double> inc(nn * dims, 0.0), gains(nn * dims, 1.0), grad(nn * dims, 0.0);
  std::vector<double> num(nn * nn, 0.0);

  Embedding e;
  e.n = n;
  e.dims = dims;
  e.method = "tsne";
  e.perplexity = prm.perplexity;
  e.learning_rate = prm.learning_rate;
  e.epochs = prm.epochs;
  e.labels = std::move(labels);
  e.kl_history.reserve(static_cast<std::size_t>(prm.epochs));

  // Gradient of the (optionally exaggerated) objective plus the true KL at
  // the current layout. The KL always uses the unexaggerated P.
  const auto evaluate = [&](double exag) -> double {
    double num_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double acc = 0.0;
        for (int p = 0; p < dims; ++p) {
          const double diff = Y[static_cast<std::size_t>(i) * dims + p] - Y[static_cast<std::size_t>(j) * dims + p];
          acc += diff * diff;
        }
        const double q = 1.0 / (1.0 + acc);
        num[static_cast<std::size_t>(i) * nn + j] = q;
        num[static_cast<std::size_t>(j) * nn + i] = q;
        num_sum += 2.0 * q;
      }
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    double kl = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double pij = P[static_cast<std::size_t>(i) * nn + j];
        const double nij = num[static_cast<std::size_t>(i) * nn + j];
        const double qij = std::max(nij / num_sum, 1e-12);
        const double mult = (exag * pij - qij) * nij;
        for (int p = 0; p < dims; ++p) {
          grad[static_cast<std::size_t>(i) * dims + p] +=
              4.0 * mult * (Y[static_cast<std::size_t>(i) * dims + p] - Y[static_cast<std::size_t>(j) * dims + p]);
        }
        if (j > i) kl += 2.0 * pij * std::log(pij / qij);
      }
    }
    return kl;
  };

  // Each coordinate moves at most this far per epoch; it stops the
  // exaggeration phase from slinging points out of the layout.
  const double max_step = 4.0;
  const int exaggeration_epochs = std::min(50, prm.epochs);
  std::vector<double> y_prev;
  double kl_prev = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < prm.epochs; ++epoch) {
    const double exag = epoch < exaggeration_epochs ? 12.0 : 1.0;
    const double momentum = epoch < 250 ? 0.5 : 0.8;

    double kl = evaluate(exag);
    // Monotone safeguard once exaggeration is over: a step that raised the
    // objective is undone and retried smaller, so the recorded KL never
    // climbs. The recorded value is always the KL of the layout kept.
    if (epoch > exaggeration_epochs && kl > kl_prev) {
      Y = y_prev;
      std::fill(inc.begin(), inc.end(), 0.0);
      for (auto& g : gains) g = std::max(g * 0.5, 0.01);
      kl = evaluate(exag);
    }
    e.kl_history.push_back(kl);
    kl_prev = kl;
    y_prev = Y;

    for (std::size_t idx = 0; idx < Y.size(); ++idx) {
      const bool same_sign = (grad[idx] > 0.0) == (inc[idx] > 0.0);
      gains[idx] = same_sign ? std::max(gains[idx] * 0.8, 0.01) : gains[idx] + 0.2;
      inc[idx] = momentum * inc[idx] - prm.learning_rate * gains[idx] * grad[idx];
      inc[idx] = std::clamp(inc[idx], -max_step, max_step);
      Y[idx] += inc[idx];
    }
    for (int p = 0; p < dims; ++p) {
      double mean = 0.0;
      for (int i = 0; i < n; ++i) mean += Y[static_cast<std::size_t>(i) * dims + p];
      mean /= n;
      for (int i = 0; i < n; ++i) Y[static_cast<std::size_t>(i) * dims + p] -= mean;
    }
  }

  e.points = std::move(Y);
  return e;
}

// ---- CSV export -----------------------------------------------------------

inline void export_embedding(const Embedding& e, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("export_embedding: cannot write '" + path + "'");
  out << "label";
  for (int j = 0; j < e.dims; ++j) out << ",dim" << j;
  out << "\n";
  out << std::setprecision(10);
  for (int i = 0; i < e.n; ++i) {
    out << (e.labels.empty() ? -1 : e.labels[static_cast<std::size_t>(i)]);
    for (int j = 0; j < e.dims; ++j) out << "," << e.at(i, j);
    out << "\n";
  }
  if (!out.good()) throw InputError("export_embedding: write failed for '" + path + "'");
}

// Attention scores against clip time. c_dim = 1 writes a single score
// column; larger c_dim writes one column per feature dimension.
inline void export_attention(const std::vector<double>& scores, int t_dim, int c_dim,
                             const std::vector<double>& time_ms, const std::string& path) {
  require(t_dim >= 1 && c_dim >= 1, "export_attention: empty scores");
  require(scores.size() == static_cast<std::size_t>(t_dim) * c_dim,
          "export_attention: score shape mismatch");
  require(time_ms.size() == static_cast<std::size_t>(t_dim), "export_attention: time axis mismatch");
  std::ofstream out(path);
  if (!out) throw InputError("export_attention: cannot write '" + path + "'");
  out << "time_ms";
  if (c_dim == 1) {
    out << ",score";
  } else {
    for (int c = 0; c < c_dim; ++c) out << ",c" << c;
  }
  out << "\n";
  out << std::setprecision(10);
  for (int t = 0; t < t_dim; ++t) {
    out << time_ms[static_cast<std::size_t>(t)];
    for (int c = 0; c < c_dim; ++c) out << "," << scores[static_cast<std::size_t>(t) * c_dim + c];
    out << "\n";
  }
  if (!out.good()) throw InputError("export_attention: write failed for '" + path + "'");
}

}  // namespace accentlab
