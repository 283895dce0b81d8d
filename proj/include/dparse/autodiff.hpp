#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dparse/tensor.hpp"

namespace dparse::nn {

// Reverse-mode autodiff over Tensor values. Each operation returns a graph
// node holding the forward value and a closure that scatters the node's
// gradient into its parents. The graph is a DAG owned from the outputs via
// shared_ptr; parents never point at children, so no reference cycles.
template <class Real>
struct Node {
  Tensor<Real> value;
  Tensor<Real> grad;  // allocated lazily by ensure_grad()
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // reads this->grad, accumulates into parents
  bool requires_grad = false;
  bool backward_done = false;  // set on the root once backward() has run

  void ensure_grad() {
    if (grad.data.empty()) grad = Tensor<Real>::zeros(value.shape);
  }
};

template <class Real>
using NodePtr = std::shared_ptr<Node<Real>>;

template <class Real>
NodePtr<Real> constant(Tensor<Real> value) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  return n;
}

// Leaf with gradient tracking; ParamStore keeps these alive across steps.
template <class Real>
NodePtr<Real> leaf_param(Tensor<Real> value) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->ensure_grad();
  return n;
}

namespace detail {

template <class Real>
NodePtr<Real> make_op(Tensor<Real> value, std::vector<NodePtr<Real>> parents,
                      std::function<void(Node<Real>&)> backprop) {
  auto n = std::make_shared<Node<Real>>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  n->parents = std::move(parents);
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

}  // namespace detail

// ---- elementwise ----

template <class Real>
NodePtr<Real> add(NodePtr<Real> a, NodePtr<Real> b) {
  require(a->value.same_shape(b->value), "add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  Tensor<Real> out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b->value.data[i];
  return detail::make_op<Real>(std::move(out), {a, b}, [a, b](Node<Real>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < self.grad.data.size(); ++i) a->grad.data[i] += self.grad.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < self.grad.data.size(); ++i) b->grad.data[i] += self.grad.data[i];
    }
  });
}

// a[m,n] + row[1,n] broadcast over rows
template <class Real>
NodePtr<Real> add_row(NodePtr<Real> a, NodePtr<Real> row) {
  const int m = a->value.rows(), n = a->value.cols();
  require(row->value.rows() == 1 && row->value.cols() == n, "add_row: bias shape mismatch");
  Tensor<Real> out = a->value;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) += row->value.data[j];
  return detail::make_op<Real>(std::move(out), {a, row}, [a, row, m, n](Node<Real>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < self.grad.data.size(); ++i) a->grad.data[i] += self.grad.data[i];
    }
    if (row->requires_grad) {
      row->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) row->grad.data[j] += self.grad.at(i, j);
    }
  });
}

template <class Real>
NodePtr<Real> mul(NodePtr<Real> a, NodePtr<Real> b) {
  require(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor<Real> out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b->value.data[i];
  return detail::make_op<Real>(std::move(out), {a, b}, [a, b](Node<Real>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < self.grad.data.size(); ++i)
        a->grad.data[i] += self.grad.data[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < self.grad.data.size(); ++i)
        b->grad.data[i] += self.grad.data[i] * a->value.data[i];
    }
  });
}

// alpha * a + beta, elementwise
template <class Real>
NodePtr<Real> affine_elem(NodePtr<Real> a, Real alpha, Real beta) {
  Tensor<Real> out = a->value;
  for (Real& v : out.data) v = alpha * v + beta;
  return detail::make_op<Real>(std::move(out), {a}, [a, alpha](Node<Real>& self) {
    a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) a->grad.data[i] += alpha * self.grad.data[i];
  });
}

template <class Real>
NodePtr<Real> sigmoid(NodePtr<Real> a) {
  Tensor<Real> out = a->value;
  for (Real& v : out.data) v = Real(1) / (Real(1) + std::exp(-v));
  auto cache = std::make_shared<Tensor<Real>>(out);
  return detail::make_op<Real>(std::move(out), {a}, [a, cache](Node<Real>& self) {
    a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
      const Real s = cache->data[i];
      a->grad.data[i] += self.grad.data[i] * s * (Real(1) - s);
    }
  });
}

template <class Real>
NodePtr<Real> tanh_op(NodePtr<Real> a) {
  Tensor<Real> out = a->value;
  for (Real& v : out.data) v = std::tanh(v);
  auto cache = std::make_shared<Tensor<Real>>(out);
  return detail::make_op<Real>(std::move(out), {a}, [a, cache](Node<Real>& self) {
    a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
      const Real t = cache->data[i];
      a->grad.data[i] += self.grad.data[i] * (Real(1) - t * t);
    }
  });
}

// tanh-approximation GELU
template <class Real>
NodePtr<Real> gelu(NodePtr<Real> a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  Tensor<Real> out = a->value;
  for (Real& v : out.data) {
    const double x = static_cast<double>(v);
    v = static_cast<Real>(0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x))));
  }
  return detail::make_op<Real>(std::move(out), {a}, [a](Node<Real>& self) {
    a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
      const double x = static_cast<double>(a->value.data[i]);
      const double u = kC * (x + kA * x * x * x);
      const double t = std::tanh(u);
      const double du = kC * (1.0 + 3.0 * kA * x * x);
      const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      a->grad.data[i] += self.grad.data[i] * static_cast<Real>(d);
    }
  });
}

// ---- matrix products ----

template <class Real>
NodePtr<Real> matmul(NodePtr<Real> a, NodePtr<Real> b) {
  const int m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
  require(b->value.rows() == k, "matmul: inner dimensions disagree " + a->value.shape_str() + " x " + b->value.shape_str());
  Tensor<Real> out({m, n});
  gemm_nn(a->value.data.data(), b->value.data.data(), out.data.data(), m, k, n);
  return detail::make_op<Real>(std::move(out), {a, b}, [a, b, m, k, n](Node<Real>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      gemm_nt(self.grad.data.data(), b->value.data.data(), a->grad.data.data(), m, n, k);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      gemm_tn(a->value.data.data(), self.grad.data.data(), b->grad.data.data(), k, m, n);
    }
  });
}

// a[m,k] * b[n,k]^T
template <class Real>
NodePtr<Real> matmul_nt(NodePtr<Real> a, NodePtr<Real> b) {
  const int m = a->value.rows(), k = a->value.cols(), n = b->value.rows();
  require(b->value.cols() == k, "matmul_nt: inner dimensions disagree");
  Tensor<Real> out({m, n});
  gemm_nt(a->value.data.data(), b->value.data.data(), out.data.data(), m, k, n);
  return detail::make_op<Real>(std::move(out), {a, b}, [a, b, m, k, n](Node<Real>& self) {
    if (a->requires_grad) {
      a->ensure_grad();
      gemm_nn(self.grad.data.data(), b->value.data.data(), a->grad.data.data(), m, n, k);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      gemm_tn(self.grad.data.data(), a->value.data.data(), b->grad.data.data(), n, m, k);
    }
  });
}

// ---- shape ops ----

template <class Real>
NodePtr<Real> transpose(NodePtr<Real> a) {
  const int m = a->value.rows(), n = a->value.cols();
  Tensor<Real> out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a->value.at(i, j);
  return detail::make_op<Real>(std::move(out), {a}, [a, m, n](Node<Real>& self) {
    a->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) a->grad.at(i, j) += self.grad.at(j, i);
  });
}

template <class Real>
NodePtr<Real> slice_rows(NodePtr<Real> a, int r0, int r1) {
  const int m = a->value.rows(), n = a->value.cols();
  require(0 <= r0 && r0 < r1 && r1 <= m, "slice_rows: range out of bounds");
  Tensor<Real> out({r1 - r0, n});
  std::copy(a->value.data.begin() + static_cast<std::size_t>(r0) * n,
            a->value.data.begin() + static_cast<std::size_t>(r1) * n, out.data.begin());
  return detail::make_op<Real>(std::move(out), {a}, [a, r0, n](Node<Real>& self) {
    a->ensure_grad();
    const std::size_t off = static_cast<std::size_t>(r0) * n;
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) a->grad.data[off + i] += self.grad.data[i];
  });
}

template <class Real>
NodePtr<Real> slice_row(NodePtr<Real> a, int r) {
  return slice_rows(a, r, r + 1);
}

template <class Real>
NodePtr<Real> slice_cols(NodePtr<Real> a, int c0, int c1) {
  const int m = a->value.rows(), n = a->value.cols();
  require(0 <= c0 && c0 < c1 && c1 <= n, "slice_cols: range out of bounds");
  const int w = c1 - c0;
  Tensor<Real> out({m, w});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = a->value.at(i, c0 + j);
  return detail::make_op<Real>(std::move(out), {a}, [a, c0, w, m](Node<Real>& self) {
    a->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) a->grad.at(i, c0 + j) += self.grad.at(i, j);
  });
}

template <class Real>
NodePtr<Real> concat_cols(std::vector<NodePtr<Real>> parts) {
  require(!parts.empty(), "concat_cols: empty input");
  const int m = parts[0]->value.rows();
  int n = 0;
  for (const auto& p : parts) {
    require(p->value.rows() == m, "concat_cols: row mismatch");
    n += p->value.cols();
  }
  Tensor<Real> out({m, n});
  int off = 0;
  for (const auto& p : parts) {
    const int w = p->value.cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) out.at(i, off + j) = p->value.at(i, j);
    off += w;
  }
  auto ps = parts;
  return detail::make_op<Real>(std::move(out), std::move(parts), [ps, m](Node<Real>& self) {
    int off = 0;
    for (const auto& p : ps) {
      const int w = p->value.cols();
      if (p->requires_grad) {
        p->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j) p->grad.at(i, j) += self.grad.at(i, off + j);
      }
      off += w;
    }
  });
}

template <class Real>
NodePtr<Real> concat_rows(std::vector<NodePtr<Real>> parts) {
  require(!parts.empty(), "concat_rows: empty input");
  const int n = parts[0]->value.cols();
  int m = 0;
  for (const auto& p : parts) {
    require(p->value.cols() == n, "concat_rows: column mismatch");
    m += p->value.rows();
  }
  Tensor<Real> out({m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
    off += p->value.data.size();
  }
  auto ps = parts;
  return detail::make_op<Real>(std::move(out), std::move(parts), [ps](Node<Real>& self) {
    std::size_t off = 0;
    for (const auto& p : ps) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->grad.data.size(); ++i) p->grad.data[i] += self.grad.data[off + i];
      }
      off += p->value.data.size();
    }
  });
}

// rows of `table` selected by ids; duplicate ids accumulate on backward
template <class Real>
NodePtr<Real> gather_rows(NodePtr<Real> table, std::vector<int> ids) {
  const int v = table->value.rows(), d = table->value.cols();
  Tensor<Real> out({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < v, "gather_rows: id out of range");
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = table->value.at(ids[i], j);
  }
  return detail::make_op<Real>(std::move(out), {table}, [table, ids, d](Node<Real>& self) {
    table->ensure_grad();
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j) table->grad.at(ids[i], j) += self.grad.at(static_cast<int>(i), j);
  });
}

// ---- reductions and normalizations ----

template <class Real>
NodePtr<Real> reduce_sum(NodePtr<Real> a) {
  double acc = 0;
  for (Real v : a->value.data) acc += static_cast<double>(v);
  Tensor<Real> out({1, 1});
  out.data[0] = static_cast<Real>(acc);
  return detail::make_op<Real>(std::move(out), {a}, [a](Node<Real>& self) {
    a->ensure_grad();
    const Real g = self.grad.data[0];
    for (Real& v : a->grad.data) v += g;
  });
}

template <class Real>
NodePtr<Real> sum_scalars(std::vector<NodePtr<Real>> terms) {
  require(!terms.empty(), "sum_scalars: empty input");
  double acc = 0;
  for (const auto& t : terms) {
    require(t->value.numel() == 1, "sum_scalars: non-scalar term");
    acc += static_cast<double>(t->value.data[0]);
  }
  Tensor<Real> out({1, 1});
  out.data[0] = static_cast<Real>(acc);
  auto ts = terms;
  return detail::make_op<Real>(std::move(out), std::move(terms), [ts](Node<Real>& self) {
    for (const auto& t : ts) {
      if (t->requires_grad) {
        t->ensure_grad();
        t->grad.data[0] += self.grad.data[0];
      }
    }
  });
}

// Row-wise softmax. With a mask, excluded entries are exactly zero in the
// output and receive no gradient; each row must keep at least one allowed
// entry. Mask entries are 1 (allowed) / 0 (excluded).
template <class Real>
NodePtr<Real> softmax_rows(NodePtr<Real> a, const Tensor<Real>* mask = nullptr) {
  const int m = a->value.rows(), n = a->value.cols();
  if (mask) require(mask->rows() == m && mask->cols() == n, "softmax_rows: mask shape mismatch");
  Tensor<Real> out({m, n});
  for (int i = 0; i < m; ++i) {
    double mx = -1e308;
    bool any = false;
    for (int j = 0; j < n; ++j) {
      if (mask && mask->at(i, j) == Real(0)) continue;
      any = true;
      mx = std::max(mx, static_cast<double>(a->value.at(i, j)));
    }
    require(any, "softmax_rows: fully masked row");
    double z = 0;
    for (int j = 0; j < n; ++j) {
      if (mask && mask->at(i, j) == Real(0)) continue;
      z += std::exp(static_cast<double>(a->value.at(i, j)) - mx);
    }
    for (int j = 0; j < n; ++j) {
      if (mask && mask->at(i, j) == Real(0)) {
        out.at(i, j) = Real(0);
      } else {
        out.at(i, j) = static_cast<Real>(std::exp(static_cast<double>(a->value.at(i, j)) - mx) / z);
      }
    }
  }
  auto probs = std::make_shared<Tensor<Real>>(out);
  return detail::make_op<Real>(std::move(out), {a}, [a, probs, m, n](Node<Real>& self) {
    a->ensure_grad();
    for (int i = 0; i < m; ++i) {
      double dot = 0;
      for (int j = 0; j < n; ++j) dot += static_cast<double>(self.grad.at(i, j)) * static_cast<double>(probs->at(i, j));
      for (int j = 0; j < n; ++j) {
        const Real p = probs->at(i, j);
        a->grad.at(i, j) += p * (self.grad.at(i, j) - static_cast<Real>(dot));
      }
    }
  });
}

template <class Real>
NodePtr<Real> layer_norm(NodePtr<Real> x, NodePtr<Real> gain, NodePtr<Real> bias, Real eps = Real(1e-5)) {
  const int m = x->value.rows(), n = x->value.cols();
  require(gain->value.rows() == 1 && gain->value.cols() == n, "layer_norm: gain shape mismatch");
  require(bias->value.rows() == 1 && bias->value.cols() == n, "layer_norm: bias shape mismatch");
  Tensor<Real> out({m, n});
  auto xhat = std::make_shared<Tensor<Real>>(Tensor<Real>({m, n}));
  auto inv_std = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double mean = 0;
    for (int j = 0; j < n; ++j) mean += static_cast<double>(x->value.at(i, j));
    mean /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) {
      const double d = static_cast<double>(x->value.at(i, j)) - mean;
      var += d * d;
    }
    var /= n;
    const double istd = 1.0 / std::sqrt(var + static_cast<double>(eps));
    (*inv_std)[static_cast<std::size_t>(i)] = static_cast<Real>(istd);
    for (int j = 0; j < n; ++j) {
      const Real xh = static_cast<Real>((static_cast<double>(x->value.at(i, j)) - mean) * istd);
      xhat->at(i, j) = xh;
      out.at(i, j) = gain->value.data[j] * xh + bias->value.data[j];
    }
  }
  return detail::make_op<Real>(std::move(out), {x, gain, bias},
                               [x, gain, bias, xhat, inv_std, m, n](Node<Real>& self) {
    if (gain->requires_grad) {
      gain->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) gain->grad.data[j] += self.grad.at(i, j) * xhat->at(i, j);
    }
    if (bias->requires_grad) {
      bias->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) bias->grad.data[j] += self.grad.at(i, j);
    }
    if (x->requires_grad) {
      x->ensure_grad();
      for (int i = 0; i < m; ++i) {
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int j = 0; j < n; ++j) {
          const double dxh = static_cast<double>(self.grad.at(i, j)) * static_cast<double>(gain->value.data[j]);
          sum_dxhat += dxh;
          sum_dxhat_xhat += dxh * static_cast<double>(xhat->at(i, j));
        }
        const double istd = static_cast<double>((*inv_std)[static_cast<std::size_t>(i)]);
        for (int j = 0; j < n; ++j) {
          const double dxh = static_cast<double>(self.grad.at(i, j)) * static_cast<double>(gain->value.data[j]);
          x->grad.at(i, j) += static_cast<Real>(istd * (dxh - sum_dxhat / n -
                                                        static_cast<double>(xhat->at(i, j)) * sum_dxhat_xhat / n));
        }
      }
    }
  });
}

// Fused stabilized softmax + negative log-likelihood over a [1,k] logit row.
template <class Real>
NodePtr<Real> cross_entropy(NodePtr<Real> logits, int target) {
  require(logits->value.rows() == 1, "cross_entropy: expects a [1,k] logit row");
  const int k = logits->value.cols();
  require(target >= 0 && target < k, "cross_entropy: target out of range");
  double mx = -1e308;
  for (int j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(logits->value.data[j]));
  double z = 0;
  for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(logits->value.data[j]) - mx);
  auto probs = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    (*probs)[static_cast<std::size_t>(j)] = static_cast<Real>(std::exp(static_cast<double>(logits->value.data[j]) - mx) / z);
  Tensor<Real> out({1, 1});
  out.data[0] = static_cast<Real>(-(static_cast<double>(logits->value.data[target]) - mx - std::log(z)));
  return detail::make_op<Real>(std::move(out), {logits}, [logits, probs, target, k](Node<Real>& self) {
    logits->ensure_grad();
    const Real g = self.grad.data[0];
    for (int j = 0; j < k; ++j) {
      Real d = (*probs)[static_cast<std::size_t>(j)];
      if (j == target) d -= Real(1);
      logits->grad.data[j] += g * d;
    }
  });
}

// Inverted dropout with a precomputed mask of {0, 1/(1-rate)} entries.
template <class Real>
NodePtr<Real> dropout_mask(NodePtr<Real> a, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  auto mask = std::make_shared<Tensor<Real>>(a->value.shape);
  const Real keep_scale = static_cast<Real>(1.0 / (1.0 - rate));
  for (Real& v : mask->data) v = (rng.real() < rate) ? Real(0) : keep_scale;
  Tensor<Real> out = a->value;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask->data[i];
  return detail::make_op<Real>(std::move(out), {a}, [a, mask](Node<Real>& self) {
    a->ensure_grad();
    for (std::size_t i = 0; i < self.grad.data.size(); ++i) a->grad.data[i] += self.grad.data[i] * mask->data[i];
  });
}

// ---- backward pass ----

template <class Real>
void backward(const NodePtr<Real>& loss) {
  require(loss->value.numel() == 1, "backward: loss must be scalar");
  require(!loss->backward_done, "backward already run on this node");
  require(loss->requires_grad, "backward: loss does not depend on any parameter");

  // iterative post-order DFS
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> visited;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack;
  stack.emplace_back(loss.get(), 0);
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Real>* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss->ensure_grad();
  loss->grad.data[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* node = *it;
    if (node->backprop) {
      node->ensure_grad();
      node->backprop(*node);
    }
  }
  loss->backward_done = true;
}

}  // namespace dparse::nn
