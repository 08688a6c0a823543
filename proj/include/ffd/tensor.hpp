#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "ffd/errors.hpp"

namespace ffd {

// Dense row-major tensor. FP32 (`S = float`) is the training/inference path;
// FP64 instantiations exist for gradient checking.
template <typename S>
struct TensorDataT {
  std::vector<int> shape;
  std::vector<S> values;
  bool requires_grad = false;
  bool on_tape = false;   // produced by a recorded op or marked requires_grad
  std::vector<S> grad;    // allocated on first accumulation, same length as values

  int64_t numel() const { return static_cast<int64_t>(values.size()); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), S(0));
  }
  void zero_grad() { grad.clear(); }
};

template <typename S>
using TensorT = std::shared_ptr<TensorDataT<S>>;

using Tensor = TensorT<float>;

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw DimensionError("extent", "tensor extents must be positive, got " + std::to_string(e));
    n *= e;
  }
  return n;
}

template <typename S>
TensorT<S> make_tensor(std::vector<int> shape, std::vector<S> values, bool requires_grad = false) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw DimensionError("extent", "value count does not match shape product");
  auto t = std::make_shared<TensorDataT<S>>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  t->requires_grad = requires_grad;
  t->on_tape = requires_grad;
  return t;
}

template <typename S>
TensorT<S> make_zeros(std::vector<int> shape, bool requires_grad = false) {
  int64_t n = shape_numel(shape);
  return make_tensor<S>(std::move(shape), std::vector<S>(static_cast<size_t>(n), S(0)), requires_grad);
}

enum class Activation { Relu, Sigmoid, SoftmaxChannels };
enum class BatchNormMode { Train, Eval };

template <typename S>
struct BatchNormStateT {
  std::vector<S> running_mean;
  std::vector<S> running_var;
};

// Records primitive applications in topological order; backward() replays
// them in reverse exactly once. A tape and its tensors belong to one thread.
//
// The tape also folds every data-dependent branch decision (ReLU sign,
// smooth-L1 branch) into a running hash. The gradient checker compares the
// hash of the x+h and x-h evaluations to detect when a perturbation crosses
// a kink, which makes the central difference meaningless at that coordinate.
template <typename S>
class TapeT {
 public:
  explicit TapeT(bool recording = true) : recording_(recording) {}

  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  bool recording() const { return recording_; }
  size_t node_count() const { return nodes_.size(); }
  uint64_t branch_hash() const { return branch_hash_; }

  void note_branch(bool bit) {
    branch_hash_ ^= bit ? 0x9e3779b97f4a7c15ull : 0xc2b2ae3d27d4eb4full;
    branch_hash_ *= 0x100000001b3ull;
  }

  TensorT<S> leaf(std::vector<int> shape, std::vector<S> values, bool requires_grad = false) {
    return make_tensor<S>(std::move(shape), std::move(values), requires_grad);
  }

  // --- primitives ---------------------------------------------------------

  // 2-D convolution over C x H x W, weight C_out x C_in x k x k.
  // k in {1,3}, stride in {1,2}, padding = (k-1)/2.
  TensorT<S> conv2d(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                    int stride, int padding) {
    check_rank(x, 3, "conv2d input");
    check_rank(w, 4, "conv2d weight");
    check_rank(b, 1, "conv2d bias");
    const int c_in = x->shape[0], h = x->shape[1], wd = x->shape[2];
    const int c_out = w->shape[0], k = w->shape[2];
    if (w->shape[2] != w->shape[3])
      throw DimensionError("kernel", "conv2d kernel must be square");
    if (k != 1 && k != 3) throw ConfigError("conv2d: kernel size must be 1 or 3");
    if (stride != 1 && stride != 2) throw ConfigError("conv2d: stride must be 1 or 2");
    if (padding != (k - 1) / 2) throw ConfigError("conv2d: padding must equal (k-1)/2");
    if (w->shape[1] != c_in)
      throw DimensionError("channel", "conv2d input channels " + std::to_string(c_in) +
                                          " != weight in-channels " + std::to_string(w->shape[1]));
    if (b->shape[0] != c_out)
      throw DimensionError("channel", "conv2d bias length " + std::to_string(b->shape[0]) +
                                          " != out-channels " + std::to_string(c_out));
    const int h_out = (h + 2 * padding - k) / stride + 1;
    const int w_out = (wd + 2 * padding - k) / stride + 1;
    if (h_out <= 0 || w_out <= 0)
      throw DimensionError("height", "conv2d output would be empty");

    auto out = make_zeros<S>({c_out, h_out, w_out});
    const S* xv = x->values.data();
    const S* wv = w->values.data();
    const S* bv = b->values.data();
    S* ov = out->values.data();
    for (int co = 0; co < c_out; ++co) {
      for (int oy = 0; oy < h_out; ++oy) {
        for (int ox = 0; ox < w_out; ++ox) {
          S acc = bv[co];
          for (int ci = 0; ci < c_in; ++ci) {
            const S* xplane = xv + static_cast<int64_t>(ci) * h * wd;
            const S* wplane = wv + ((static_cast<int64_t>(co) * c_in + ci) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
              int iy = oy * stride - padding + ky;
              if (iy < 0 || iy >= h) continue;
              for (int kx = 0; kx < k; ++kx) {
                int ix = ox * stride - padding + kx;
                if (ix < 0 || ix >= wd) continue;
                acc += wplane[ky * k + kx] * xplane[iy * wd + ix];
              }
            }
          }
          ov[(static_cast<int64_t>(co) * h_out + oy) * w_out + ox] = acc;
        }
      }
    }

    record({x, w, b}, out, [=]() {
      const S* g = out->grad.data();
      S* gx = x->grad.data();
      S* gw = w->grad.data();
      S* gb = b->grad.data();
      const S* xv2 = x->values.data();
      const S* wv2 = w->values.data();
      for (int co = 0; co < c_out; ++co) {
        for (int oy = 0; oy < h_out; ++oy) {
          for (int ox = 0; ox < w_out; ++ox) {
            S go = g[(static_cast<int64_t>(co) * h_out + oy) * w_out + ox];
            gb[co] += go;
            for (int ci = 0; ci < c_in; ++ci) {
              const S* xplane = xv2 + static_cast<int64_t>(ci) * h * wd;
              S* gxplane = gx + static_cast<int64_t>(ci) * h * wd;
              const int64_t wbase = ((static_cast<int64_t>(co) * c_in + ci) * k) * k;
              for (int ky = 0; ky < k; ++ky) {
                int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < k; ++kx) {
                  int ix = ox * stride - padding + kx;
                  if (ix < 0 || ix >= wd) continue;
                  gw[wbase + ky * k + kx] += go * xplane[iy * wd + ix];
                  gxplane[iy * wd + ix] += go * wv2[wbase + ky * k + kx];
                }
              }
            }
          }
        }
      }
    });
    return out;
  }

  // Batch normalization over the spatial extent of each channel (batch = 1
  // reference path). Train mode normalizes by batch statistics (biased
  // variance) and updates running stats with the given momentum.
  TensorT<S> batch_norm(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                        BatchNormStateT<S>* state, BatchNormMode mode,
                        S eps = S(1e-5), S momentum = S(0.1)) {
    check_rank(x, 3, "batch_norm input");
    const int c = x->shape[0], h = x->shape[1], wd = x->shape[2];
    const int m = h * wd;
    if (m < 1) throw DimensionError("spatial", "batch_norm requires nonzero spatial extent");
    if (gamma->shape != std::vector<int>{c} || beta->shape != std::vector<int>{c})
      throw DimensionError("channel", "batch_norm gamma/beta must have one entry per channel");
    if (eps <= S(0)) throw ConfigError("batch_norm: epsilon must be positive");
    if (!state || static_cast<int>(state->running_mean.size()) != c ||
        static_cast<int>(state->running_var.size()) != c)
      throw DimensionError("channel", "batch_norm running stats must have one entry per channel");

    auto out = make_zeros<S>({c, h, wd});
    auto mean = std::make_shared<std::vector<S>>(c);
    auto ivar = std::make_shared<std::vector<S>>(c);
    const S* xv = x->values.data();
    const S* gv = gamma->values.data();
    const S* bv = beta->values.data();
    S* ov = out->values.data();

    for (int ci = 0; ci < c; ++ci) {
      const S* xp = xv + static_cast<int64_t>(ci) * m;
      S mu, iv;
      if (mode == BatchNormMode::Train) {
        S sum = 0;
        for (int i = 0; i < m; ++i) sum += xp[i];
        mu = sum / S(m);
        S var = 0;
        for (int i = 0; i < m; ++i) {
          S d = xp[i] - mu;
          var += d * d;
        }
        var /= S(m);
        iv = S(1) / std::sqrt(var + eps);
        state->running_mean[ci] = (S(1) - momentum) * state->running_mean[ci] + momentum * mu;
        state->running_var[ci] = (S(1) - momentum) * state->running_var[ci] + momentum * var;
      } else {
        mu = state->running_mean[ci];
        iv = S(1) / std::sqrt(state->running_var[ci] + eps);
      }
      (*mean)[ci] = mu;
      (*ivar)[ci] = iv;
      for (int i = 0; i < m; ++i)
        ov[static_cast<int64_t>(ci) * m + i] = gv[ci] * (xp[i] - mu) * iv + bv[ci];
    }

    record({x, gamma, beta}, out, [=]() {
      const S* g = out->grad.data();
      const S* xv2 = x->values.data();
      const S* gv2 = gamma->values.data();
      S* gx = x->grad.data();
      S* gg = gamma->grad.data();
      S* gb = beta->grad.data();
      for (int ci = 0; ci < c; ++ci) {
        const S mu = (*mean)[ci], iv = (*ivar)[ci];
        const S* xp = xv2 + static_cast<int64_t>(ci) * m;
        const S* gp = g + static_cast<int64_t>(ci) * m;
        S* gxp = gx + static_cast<int64_t>(ci) * m;
        S sum_g = 0, sum_g_xhat = 0;
        for (int i = 0; i < m; ++i) {
          S xhat = (xp[i] - mu) * iv;
          sum_g += gp[i];
          sum_g_xhat += gp[i] * xhat;
        }
        gg[ci] += sum_g_xhat;
        gb[ci] += sum_g;
        if (mode == BatchNormMode::Train) {
          for (int i = 0; i < m; ++i) {
            S xhat = (xp[i] - mu) * iv;
            gxp[i] += gv2[ci] * iv * (gp[i] - sum_g / S(m) - xhat * sum_g_xhat / S(m));
          }
        } else {
          for (int i = 0; i < m; ++i) gxp[i] += gv2[ci] * iv * gp[i];
        }
      }
    });
    return out;
  }

  TensorT<S> activation(const TensorT<S>& x, Activation kind) {
    switch (kind) {
      case Activation::Relu: return relu(x);
      case Activation::Sigmoid: return sigmoid(x);
      case Activation::SoftmaxChannels: return softmax_channels(x);
    }
    throw ConfigError("unknown activation kind");
  }

  // Subgradient at 0 is 0.
  TensorT<S> relu(const TensorT<S>& x) {
    auto out = make_zeros<S>(x->shape);
    const int64_t n = x->numel();
    for (int64_t i = 0; i < n; ++i) {
      bool pos = x->values[i] > S(0);
      note_branch(pos);
      out->values[i] = pos ? x->values[i] : S(0);
    }
    record({x}, out, [=]() {
      for (int64_t i = 0; i < n; ++i)
        if (x->values[i] > S(0)) x->grad[i] += out->grad[i];
    });
    return out;
  }

  TensorT<S> sigmoid(const TensorT<S>& x) {
    auto out = make_zeros<S>(x->shape);
    const int64_t n = x->numel();
    for (int64_t i = 0; i < n; ++i) {
      S v = x->values[i];
      out->values[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                                 : std::exp(v) / (S(1) + std::exp(v));
    }
    record({x}, out, [=]() {
      for (int64_t i = 0; i < n; ++i) {
        S s = out->values[i];
        x->grad[i] += out->grad[i] * s * (S(1) - s);
      }
    });
    return out;
  }

  // Softmax across axis 0 ("channels"), independently per remaining site.
  // Works for 1-D vectors (single site) and C x H x W maps alike.
  TensorT<S> softmax_channels(const TensorT<S>& x) {
    if (x->shape.empty()) throw DimensionError("channel", "softmax_channels needs a channel axis");
    const int c = x->shape[0];
    int64_t sites = x->numel() / c;
    auto out = make_zeros<S>(x->shape);
    for (int64_t s = 0; s < sites; ++s) {
      S mx = x->values[s];
      for (int ci = 1; ci < c; ++ci) mx = std::max(mx, x->values[ci * sites + s]);
      S denom = 0;
      for (int ci = 0; ci < c; ++ci) {
        S e = std::exp(x->values[ci * sites + s] - mx);
        out->values[ci * sites + s] = e;
        denom += e;
      }
      for (int ci = 0; ci < c; ++ci) out->values[ci * sites + s] /= denom;
    }
    record({x}, out, [=]() {
      for (int64_t s = 0; s < sites; ++s) {
        S dot = 0;
        for (int ci = 0; ci < c; ++ci)
          dot += out->grad[ci * sites + s] * out->values[ci * sites + s];
        for (int ci = 0; ci < c; ++ci) {
          S sv = out->values[ci * sites + s];
          x->grad[ci * sites + s] += sv * (out->grad[ci * sites + s] - dot);
        }
      }
    });
    return out;
  }

  // Arithmetic mean over the spatial positions of each channel.
  TensorT<S> global_avg_pool(const TensorT<S>& x) {
    check_rank(x, 3, "global_avg_pool input");
    const int c = x->shape[0];
    const int m = x->shape[1] * x->shape[2];
    auto out = make_zeros<S>({c});
    for (int ci = 0; ci < c; ++ci) {
      S sum = 0;
      for (int i = 0; i < m; ++i) sum += x->values[static_cast<int64_t>(ci) * m + i];
      out->values[ci] = sum / S(m);
    }
    record({x}, out, [=]() {
      for (int ci = 0; ci < c; ++ci) {
        S g = out->grad[ci] / S(m);
        for (int i = 0; i < m; ++i) x->grad[static_cast<int64_t>(ci) * m + i] += g;
      }
    });
    return out;
  }

  // out(c,h,w) = a(c,h,w) * b(c)
  TensorT<S> broadcast_mul(const TensorT<S>& a, const TensorT<S>& b) {
    check_rank(a, 3, "broadcast_mul lhs");
    check_rank(b, 1, "broadcast_mul rhs");
    const int c = a->shape[0];
    if (b->shape[0] != c)
      throw DimensionError("channel", "broadcast_mul channel counts differ: " +
                                          std::to_string(c) + " vs " + std::to_string(b->shape[0]));
    const int m = a->shape[1] * a->shape[2];
    auto out = make_zeros<S>(a->shape);
    for (int ci = 0; ci < c; ++ci)
      for (int i = 0; i < m; ++i)
        out->values[static_cast<int64_t>(ci) * m + i] =
            a->values[static_cast<int64_t>(ci) * m + i] * b->values[ci];
    record({a, b}, out, [=]() {
      for (int ci = 0; ci < c; ++ci) {
        S acc = 0;
        for (int i = 0; i < m; ++i) {
          int64_t idx = static_cast<int64_t>(ci) * m + i;
          a->grad[idx] += out->grad[idx] * b->values[ci];
          acc += out->grad[idx] * a->values[idx];
        }
        b->grad[ci] += acc;
      }
    });
    return out;
  }

  TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    if (a->shape != b->shape)
      throw DimensionError("extent", "add requires identical shapes");
    auto out = make_zeros<S>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] + b->values[i];
    record({a, b}, out, [=]() {
      for (int64_t i = 0; i < n; ++i) {
        a->grad[i] += out->grad[i];
        b->grad[i] += out->grad[i];
      }
    });
    return out;
  }

  TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
    if (a->shape != b->shape)
      throw DimensionError("extent", "mul requires identical shapes");
    auto out = make_zeros<S>(a->shape);
    const int64_t n = a->numel();
    for (int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] * b->values[i];
    record({a, b}, out, [=]() {
      for (int64_t i = 0; i < n; ++i) {
        a->grad[i] += out->grad[i] * b->values[i];
        b->grad[i] += out->grad[i] * a->values[i];
      }
    });
    return out;
  }

  // Column-wise affine map: x is [in] or [in, N], w is [out, in], b is [out].
  TensorT<S> linear(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    check_rank(w, 2, "linear weight");
    check_rank(b, 1, "linear bias");
    const bool vec = x->shape.size() == 1;
    if (!vec) check_rank(x, 2, "linear input");
    const int in = x->shape[0];
    const int cols = vec ? 1 : x->shape[1];
    const int out_dim = w->shape[0];
    if (w->shape[1] != in)
      throw DimensionError("channel", "linear input dim " + std::to_string(in) +
                                          " != weight in-dim " + std::to_string(w->shape[1]));
    if (b->shape[0] != out_dim)
      throw DimensionError("channel", "linear bias length mismatch");

    auto out = make_zeros<S>(vec ? std::vector<int>{out_dim} : std::vector<int>{out_dim, cols});
    for (int o = 0; o < out_dim; ++o) {
      for (int n = 0; n < cols; ++n) {
        S acc = b->values[o];
        for (int i = 0; i < in; ++i)
          acc += w->values[static_cast<int64_t>(o) * in + i] * x->values[static_cast<int64_t>(i) * cols + n];
        out->values[static_cast<int64_t>(o) * cols + n] = acc;
      }
    }
    record({x, w, b}, out, [=]() {
      for (int o = 0; o < out_dim; ++o) {
        for (int n = 0; n < cols; ++n) {
          S g = out->grad[static_cast<int64_t>(o) * cols + n];
          b->grad[o] += g;
          for (int i = 0; i < in; ++i) {
            w->grad[static_cast<int64_t>(o) * in + i] += g * x->values[static_cast<int64_t>(i) * cols + n];
            x->grad[static_cast<int64_t>(i) * cols + n] += g * w->values[static_cast<int64_t>(o) * in + i];
          }
        }
      }
    });
    return out;
  }

  // Spatial collapse of a (d*N_g) x H_o x W_o map into the d x (N_g*H_o*W_o)
  // query matrix. Column (t_r, t_c, s) reads channels [s*d, (s+1)*d) at site
  // (t_r, t_c); column index = (t_r*W_o + t_c)*N_g + s. Exact inverse below.
  TensorT<S> delineate(const TensorT<S>& x, int d) {
    check_rank(x, 3, "delineate input");
    const int c = x->shape[0], ho = x->shape[1], wo = x->shape[2];
    if (d <= 0 || c % d != 0)
      throw DimensionError("channel", "delineate: channels " + std::to_string(c) +
                                          " not divisible by query dimension " + std::to_string(d));
    const int n_g = c / d;
    const int cols = n_g * ho * wo;
    auto out = make_zeros<S>({d, cols});
    for (int tr = 0; tr < ho; ++tr)
      for (int tc = 0; tc < wo; ++tc)
        for (int s = 0; s < n_g; ++s) {
          int col = (tr * wo + tc) * n_g + s;
          for (int r = 0; r < d; ++r)
            out->values[static_cast<int64_t>(r) * cols + col] =
                x->values[(static_cast<int64_t>(s * d + r) * ho + tr) * wo + tc];
        }
    record({x}, out, [=]() {
      for (int tr = 0; tr < ho; ++tr)
        for (int tc = 0; tc < wo; ++tc)
          for (int s = 0; s < n_g; ++s) {
            int col = (tr * wo + tc) * n_g + s;
            for (int r = 0; r < d; ++r)
              x->grad[(static_cast<int64_t>(s * d + r) * ho + tr) * wo + tc] +=
                  out->grad[static_cast<int64_t>(r) * cols + col];
          }
    });
    return out;
  }

  // Inverse of delineate: d x (N_g*H_o*W_o) back to (d*N_g) x H_o x W_o.
  TensorT<S> inverse_delineate(const TensorT<S>& x, int n_g, int ho, int wo) {
    check_rank(x, 2, "inverse_delineate input");
    const int d = x->shape[0];
    const int cols = x->shape[1];
    if (cols != n_g * ho * wo)
      throw DimensionError("column", "inverse_delineate: column count mismatch");
    auto out = make_zeros<S>({d * n_g, ho, wo});
    for (int tr = 0; tr < ho; ++tr)
      for (int tc = 0; tc < wo; ++tc)
        for (int s = 0; s < n_g; ++s) {
          int col = (tr * wo + tc) * n_g + s;
          for (int r = 0; r < d; ++r)
            out->values[(static_cast<int64_t>(s * d + r) * ho + tr) * wo + tc] =
                x->values[static_cast<int64_t>(r) * cols + col];
        }
    record({x}, out, [=]() {
      for (int tr = 0; tr < ho; ++tr)
        for (int tc = 0; tc < wo; ++tc)
          for (int s = 0; s < n_g; ++s) {
            int col = (tr * wo + tc) * n_g + s;
            for (int r = 0; r < d; ++r)
              x->grad[static_cast<int64_t>(r) * cols + col] +=
                  out->grad[(static_cast<int64_t>(s * d + r) * ho + tr) * wo + tc];
          }
    });
    return out;
  }

  // Gather of columns from a [R, N] matrix; backward scatter-adds.
  TensorT<S> select_columns(const TensorT<S>& x, std::vector<int> cols) {
    check_rank(x, 2, "select_columns input");
    const int r = x->shape[0], n = x->shape[1];
    if (cols.empty()) throw DimensionError("column", "select_columns: empty selection");
    for (int c : cols)
      if (c < 0 || c >= n) throw DimensionError("column", "select_columns: index out of range");
    const int m = static_cast<int>(cols.size());
    auto out = make_zeros<S>({r, m});
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < m; ++j)
        out->values[static_cast<int64_t>(i) * m + j] = x->values[static_cast<int64_t>(i) * n + cols[j]];
    record({x}, out, [=]() {
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < m; ++j)
          x->grad[static_cast<int64_t>(i) * n + cols[j]] += out->grad[static_cast<int64_t>(i) * m + j];
    });
    return out;
  }

  // Mean over columns of -log softmax(logits)[target]; max-subtraction for
  // numerical stability. logits is [K, N], targets has N entries in [0, K).
  TensorT<S> softmax_cross_entropy_mean(const TensorT<S>& logits, std::vector<int> targets) {
    check_rank(logits, 2, "cross_entropy logits");
    const int k = logits->shape[0], n = logits->shape[1];
    if (static_cast<int>(targets.size()) != n)
      throw DimensionError("column", "cross_entropy: one target per column required");
    for (int t : targets)
      if (t < 0 || t >= k) throw ConfigError("cross_entropy: target class out of range");

    auto probs = std::make_shared<std::vector<S>>(static_cast<size_t>(k) * n);
    S total = 0;
    for (int col = 0; col < n; ++col) {
      S mx = logits->values[col];
      for (int ci = 1; ci < k; ++ci)
        mx = std::max(mx, logits->values[static_cast<int64_t>(ci) * n + col]);
      S denom = 0;
      for (int ci = 0; ci < k; ++ci) {
        S e = std::exp(logits->values[static_cast<int64_t>(ci) * n + col] - mx);
        (*probs)[static_cast<int64_t>(ci) * n + col] = e;
        denom += e;
      }
      for (int ci = 0; ci < k; ++ci) (*probs)[static_cast<int64_t>(ci) * n + col] /= denom;
      total += -std::log((*probs)[static_cast<int64_t>(targets[col]) * n + col]);
    }
    auto out = make_tensor<S>({1}, {total / S(n)});
    record({logits}, out, [=]() {
      S g = out->grad[0] / S(n);
      for (int col = 0; col < n; ++col)
        for (int ci = 0; ci < k; ++ci) {
          S p = (*probs)[static_cast<int64_t>(ci) * n + col];
          S onehot = (ci == targets[col]) ? S(1) : S(0);
          logits->grad[static_cast<int64_t>(ci) * n + col] += g * (p - onehot);
        }
    });
    return out;
  }

  // Smooth-L1 between [4, M] prediction and target, summed over the 4
  // coordinates per column and averaged over the M columns.
  TensorT<S> smooth_l1_mean(const TensorT<S>& pred, const TensorT<S>& target, S beta) {
    check_rank(pred, 2, "smooth_l1 pred");
    if (pred->shape != target->shape)
      throw DimensionError("extent", "smooth_l1: pred/target shapes differ");
    if (beta <= S(0)) throw ConfigError("smooth_l1: beta must be positive");
    const int64_t n = pred->numel();
    const int m = pred->shape[1];
    S total = 0;
    for (int64_t i = 0; i < n; ++i) {
      S d = pred->values[i] - target->values[i];
      bool quad = std::abs(d) < beta;
      note_branch(quad);
      total += quad ? S(0.5) * d * d / beta : std::abs(d) - S(0.5) * beta;
    }
    auto out = make_tensor<S>({1}, {total / S(m)});
    record({pred, target}, out, [=]() {
      S g = out->grad[0] / S(m);
      for (int64_t i = 0; i < n; ++i) {
        S d = pred->values[i] - target->values[i];
        S deriv = std::abs(d) < beta ? d / beta : (d > S(0) ? S(1) : (d < S(0) ? S(-1) : S(0)));
        pred->grad[i] += g * deriv;
        target->grad[i] -= g * deriv;
      }
    });
    return out;
  }

  TensorT<S> sum(const TensorT<S>& x) {
    S total = 0;
    for (S v : x->values) total += v;
    auto out = make_tensor<S>({1}, {total});
    record({x}, out, [=]() {
      const int64_t n = x->numel();
      for (int64_t i = 0; i < n; ++i) x->grad[i] += out->grad[0];
    });
    return out;
  }

  TensorT<S> scale(const TensorT<S>& x, S c) {
    auto out = make_zeros<S>(x->shape);
    const int64_t n = x->numel();
    for (int64_t i = 0; i < n; ++i) out->values[i] = c * x->values[i];
    record({x}, out, [=]() {
      for (int64_t i = 0; i < n; ++i) x->grad[i] += c * out->grad[i];
    });
    return out;
  }

  // Populates grad buffers of every tensor reachable from `loss`. Gradients
  // accumulate additively across fan-out.
  void backward(const TensorT<S>& loss) {
    if (loss->numel() != 1)
      throw NumericalError("backward: loss must be scalar, got " +
                           std::to_string(loss->numel()) + " elements");
    if (!loss->on_tape)
      throw NumericalError("backward: loss is not tape-recorded");
    loss->ensure_grad();
    loss->grad[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  static void check_rank(const TensorT<S>& t, size_t rank, const char* what) {
    if (t->shape.size() != rank)
      throw DimensionError("rank", std::string(what) + ": expected rank " +
                                       std::to_string(rank) + ", got " +
                                       std::to_string(t->shape.size()));
  }

  // Registers a backward closure when recording and any input is grad-tracked.
  // Closures may assume grad buffers of their tensors exist.
  void record(std::initializer_list<TensorT<S>> inputs, TensorT<S>& out,
              std::function<void()> backprop) {
    if (!recording_) return;
    bool tracked = false;
    for (const auto& t : inputs) tracked = tracked || t->on_tape;
    if (!tracked) return;
    out->on_tape = true;
    std::vector<TensorT<S>> ins(inputs);
    TensorT<S> o = out;
    nodes_.push_back([ins, o, fn = std::move(backprop)]() {
      if (o->grad.empty()) return;  // output not reachable from the loss
      for (const auto& t : ins) t->ensure_grad();
      fn();
    });
  }

  bool recording_;
  uint64_t branch_hash_ = 14695981039346656037ull;
  std::vector<std::function<void()>> nodes_;
};

using Tape = TapeT<float>;

}  // namespace ffd
