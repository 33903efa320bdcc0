#include "nsd/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace nsd::ad {

namespace {

std::atomic<bool> g_validation{false};

template <class T>
void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw_dimension(op, "operand shapes " + shape_string(a.shape()) + " and " +
                            shape_string(b.shape()) + " differ");
  }
}

template <class T>
void require_rank(const char* op, const Var<T>& x, std::size_t rank, const char* what) {
  if (x.shape().size() != rank) {
    throw_dimension(op, std::string(what) + " must have rank " + std::to_string(rank) +
                            ", got " + shape_string(x.shape()));
  }
}

template <class T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// Shared driver for elementwise unary ops: forward(x) and d/dx evaluated at x.
template <class T, class F, class D>
Var<T> unary_op(const char* name, const Var<T>& x, F forward, D derivative) {
  Tensor<T> out(x.shape());
  const auto in = x.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = forward(in[i]);
  return make_op<T>(name, std::move(out), {x}, [derivative](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    T* g = grad_target(p);
    if (!g) return;
    const auto xv = p.value.data();
    const auto yv = self.value.data();
    const auto gy = self.grad.data();
    for (std::size_t i = 0; i < xv.size(); ++i) g[i] += gy[i] * derivative(xv[i], yv[i]);
  });
}

}  // namespace

void set_validation(bool enabled) { g_validation.store(enabled); }
bool validation_enabled() { return g_validation.load(); }

// ---- Var -------------------------------------------------------------------

template <class T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

template <class T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->op = "leaf";
  return Var(std::move(node));
}

template <class T>
Tensor<T>& Var<T>::mutable_value() {
  if (!node_->parents.empty() || node_->backward_fn) {
    throw Error(ErrorKind::kConfig, "mutable_value() is only allowed on leaf variables");
  }
  return node_->value;
}

template <class T>
const Tensor<T>& Var<T>::grad() const {
  if (node_->grad.empty()) node_->grad = Tensor<T>(node_->value.shape());
  return node_->grad;
}

template <class T>
void Var<T>::zero_grad() {
  node_->grad = Tensor<T>(node_->value.shape());
}

template <class T>
Var<T> make_op(std::string op, Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  if (validation_enabled()) value.check_finite(op);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = std::move(op);
  for (const auto& p : parents) {
    if (p.defined() && p.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.shared());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

template <class T>
T* grad_target(Node<T>& node) {
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor<T>(node.value.shape());
  return node.grad.data().data();
}

template <class T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw_dimension("backward", "loss must be a scalar, got shape " +
                                    (loss.defined() ? shape_string(loss.shape()) : "[]"));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS yields a topological order.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* n : order) n->grad = Tensor<T>(n->value.shape());
  loss.node()->grad.fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

// ---- elementwise -----------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  const auto x = a.value().data();
  const auto y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  return make_op<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    const auto g = self.grad.data();
    for (auto& p : self.parents) {
      if (T* d = grad_target(*p)) axpy(T(1), g.data(), d, g.size());
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  const auto x = a.value().data();
  const auto y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  return make_op<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const auto g = self.grad.data();
    const auto av = pa.value.data();
    const auto bv = pb.value.data();
    if (T* d = grad_target(pa)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (T* d = grad_target(pb)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  const auto x = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = factor * x[i];
  return make_op<T>("scale", std::move(out), {a}, [factor](Node<T>& self) {
    if (T* d = grad_target(*self.parents[0])) {
      axpy(factor, self.grad.data().data(), d, self.grad.size());
    }
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return unary_op(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary_op(
      "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> elu(const Var<T>& x, T alpha) {
  return unary_op(
      "elu", x, [alpha](T v) { return v > T(0) ? v : alpha * std::expm1(v); },
      [alpha](T v, T y) { return v > T(0) ? T(1) : y + alpha; });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return unary_op(
      "sigmoid", x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// ---- reductions and shape ----------------------------------------------------

template <class T>
Var<T> sum(const Var<T>& x) {
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  return make_op<T>("sum", Tensor<T>(Shape{1}, std::vector<T>{acc}), {x},
                    [](Node<T>& self) {
                      Node<T>& p = *self.parents[0];
                      if (T* d = grad_target(p)) {
                        const T g = self.grad[0];
                        for (std::size_t i = 0; i < p.value.size(); ++i) d[i] += g;
                      }
                    });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  const T n = static_cast<T>(x.value().size());
  T acc = 0;
  for (T v : x.value().data()) acc += v;
  return make_op<T>("mean", Tensor<T>(Shape{1}, std::vector<T>{acc / n}), {x},
                    [n](Node<T>& self) {
                      Node<T>& p = *self.parents[0];
                      if (T* d = grad_target(p)) {
                        const T g = self.grad[0] / n;
                        for (std::size_t i = 0; i < p.value.size(); ++i) d[i] += g;
                      }
                    });
}

template <class T>
Var<T> mean_last_axis(const Var<T>& x) {
  const Shape& in = x.shape();
  if (in.empty()) throw_dimension("mean_last_axis", "rank-0 input");
  const std::size_t f = in.back();
  Shape out_shape(in.begin(), in.end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> out(out_shape);
  const auto v = x.value().data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    T acc = 0;
    for (std::size_t j = 0; j < f; ++j) acc += v[r * f + j];
    out[r] = acc / static_cast<T>(f);
  }
  return make_op<T>("mean_last_axis", std::move(out), {x}, [f](Node<T>& self) {
    if (T* d = grad_target(*self.parents[0])) {
      for (std::size_t r = 0; r < self.grad.size(); ++r) {
        const T g = self.grad[r] / static_cast<T>(f);
        for (std::size_t j = 0; j < f; ++j) d[r * f + j] += g;
      }
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  if (shape_size(shape) != x.value().size()) {
    throw_dimension("reshape", "cannot view " + shape_string(x.shape()) + " as " +
                                   shape_string(shape));
  }
  return make_op<T>("reshape", x.value().reshaped(std::move(shape)), {x},
                    [](Node<T>& self) {
                      if (T* d = grad_target(*self.parents[0])) {
                        axpy(T(1), self.grad.data().data(), d, self.grad.size());
                      }
                    });
}

// ---- layers ------------------------------------------------------------------

namespace {

constexpr std::size_t kOutBlock = 4;
constexpr std::size_t kTimeBlock = 16;

// Rows of `src` ([rows, len]) copied into zero-padded rows of length
// len + 2 * pad, plus kTimeBlock slack so blocked loads never run off the end.
template <class T>
std::vector<T> pad_rows(const T* src, std::size_t rows, std::size_t len, std::size_t pad) {
  const std::size_t lp = len + 2 * pad;
  std::vector<T> out(rows * lp + kTimeBlock, T(0));
  for (std::size_t r = 0; r < rows; ++r) std::copy(src + r * len, src + (r + 1) * len, out.data() + r * lp + pad);
  return out;
}

// One block of OB output rows by kTimeBlock samples, accumulated in registers.
template <std::size_t OB, class T>
void correlate_block(const T* xp, const T* w, T* y, std::size_t cin, std::size_t len,
                     std::size_t lp, std::size_t k, std::size_t t0, std::size_t tb) {
  T acc[OB][kTimeBlock] = {};
  for (std::size_t i = 0; i < cin; ++i) {
    const T* xr = xp + i * lp + t0;
    for (std::size_t s = 0; s < k; ++s) {
      const T* xs = xr + s;
      for (std::size_t oo = 0; oo < OB; ++oo) {
        const T wv = w[(oo * cin + i) * k + s];
#pragma omp simd
        for (std::size_t tt = 0; tt < kTimeBlock; ++tt) acc[oo][tt] += wv * xs[tt];
      }
    }
  }
  for (std::size_t oo = 0; oo < OB; ++oo) {
    T* yr = y + oo * len + t0;
    for (std::size_t tt = 0; tt < tb; ++tt) yr[tt] += acc[oo][tt];
  }
}

// y[o][t] += sum_i sum_s w[o][i][s] * xp[i][t + s], xp rows of length len + k - 1.
template <class T>
void correlate(const T* xp, const T* w, T* y, std::size_t cin, std::size_t cout,
               std::size_t len, std::size_t k) {
  const std::size_t lp = len + k - 1;
  std::size_t o0 = 0;
  for (; o0 + kOutBlock <= cout; o0 += kOutBlock) {
    for (std::size_t t0 = 0; t0 < len; t0 += kTimeBlock) {
      correlate_block<kOutBlock>(xp, w + o0 * cin * k, y + o0 * len, cin, len, lp, k, t0,
                                 std::min(kTimeBlock, len - t0));
    }
  }
  for (; o0 < cout; ++o0) {
    for (std::size_t t0 = 0; t0 < len; t0 += kTimeBlock) {
      correlate_block<1>(xp, w + o0 * cin * k, y + o0 * len, cin, len, lp, k, t0,
                         std::min(kTimeBlock, len - t0));
    }
  }
}

// out[o][j] += sum_t g[o][t] * col[j][t] for an OB x JB tile.
template <std::size_t OB, std::size_t JB, class T>
void reduce_tile(const T* g, const T* col, T* out, std::size_t len, std::size_t ldo) {
  T acc[OB][JB][kTimeBlock] = {};
  std::size_t t0 = 0;
  for (; t0 + kTimeBlock <= len; t0 += kTimeBlock) {
    for (std::size_t oo = 0; oo < OB; ++oo) {
      const T* gr = g + oo * len + t0;
      for (std::size_t jj = 0; jj < JB; ++jj) {
        const T* cr = col + jj * len + t0;
#pragma omp simd
        for (std::size_t tt = 0; tt < kTimeBlock; ++tt) acc[oo][jj][tt] += gr[tt] * cr[tt];
      }
    }
  }
  for (std::size_t oo = 0; oo < OB; ++oo) {
    for (std::size_t jj = 0; jj < JB; ++jj) {
      T total = 0;
      for (std::size_t tt = 0; tt < kTimeBlock; ++tt) total += acc[oo][jj][tt];
      for (std::size_t t = t0; t < len; ++t) total += g[oo * len + t] * col[jj * len + t];
      out[oo * ldo + jj] += total;
    }
  }
}

// dw[o][i][s] += sum_t g[o][t] * xp[i][t + s], via an unrolled [cin * k, len] view.
template <class T>
void correlate_weights(const T* g, const T* xp, T* dw, std::size_t cin, std::size_t cout,
                       std::size_t len, std::size_t k) {
  const std::size_t lp = len + k - 1;
  const std::size_t cols = cin * k;
  std::vector<T> col(cols * len);
  for (std::size_t i = 0; i < cin; ++i)
    for (std::size_t s = 0; s < k; ++s)
      std::copy(xp + i * lp + s, xp + i * lp + s + len, col.data() + (i * k + s) * len);
  constexpr std::size_t B = 4;
  std::size_t o0 = 0;
  for (; o0 + B <= cout; o0 += B) {
    std::size_t j0 = 0;
    for (; j0 + B <= cols; j0 += B)
      reduce_tile<B, B>(g + o0 * len, col.data() + j0 * len, dw + o0 * cols + j0, len, cols);
    for (; j0 < cols; ++j0)
      reduce_tile<B, 1>(g + o0 * len, col.data() + j0 * len, dw + o0 * cols + j0, len, cols);
  }
  for (; o0 < cout; ++o0) {
    std::size_t j0 = 0;
    for (; j0 + B <= cols; j0 += B)
      reduce_tile<1, B>(g + o0 * len, col.data() + j0 * len, dw + o0 * cols + j0, len, cols);
    for (; j0 < cols; ++j0)
      reduce_tile<1, 1>(g + o0 * len, col.data() + j0 * len, dw + o0 * cols + j0, len, cols);
  }
}

}  // namespace

template <class T>
Var<T> conv1d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias) {
  require_rank("conv1d", input, 3, "input");
  require_rank("conv1d", weight, 3, "weight");
  const std::size_t n = input.shape()[0], cin = input.shape()[1], len = input.shape()[2];
  const std::size_t cout = weight.shape()[0], k = weight.shape()[2];
  if (weight.shape()[1] != cin) {
    throw_dimension("conv1d", "weight " + shape_string(weight.shape()) +
                                  " does not match input channels of " +
                                  shape_string(input.shape()));
  }
  if (k % 2 == 0) throw_dimension("conv1d", "kernel size must be odd, got " + std::to_string(k));
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw_dimension("conv1d", "bias " + shape_string(bias.shape()) + " != [" +
                                  std::to_string(cout) + "]");
  }
  const std::size_t pad = k / 2;
  const std::size_t lp = len + 2 * pad;

  Tensor<T> out(Shape{n, cout, len});
  auto xp = std::make_shared<std::vector<T>>(pad_rows(input.value().data().data(), n * cin, len, pad));
  const T* w = weight.value().data().data();
  T* y = out.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    T* yb = y + b * cout * len;
    if (bias.defined()) {
      for (std::size_t o = 0; o < cout; ++o) std::fill(yb + o * len, yb + (o + 1) * len, bias.value()[o]);
    }
    correlate(xp->data() + b * cin * lp, w, yb, cin, cout, len, k);
  }

  std::vector<Var<T>> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op<T>(
      "conv1d", std::move(out), std::move(parents),
      [n, cin, len, cout, k, pad, lp, xp](Node<T>& self) {
        Node<T>& pin = *self.parents[0];
        Node<T>& pw = *self.parents[1];
        const T* gy = self.grad.data().data();
        T* dx = grad_target(pin);
        T* dw = grad_target(pw);
        T* db = self.parents.size() > 2 ? grad_target(*self.parents[2]) : nullptr;
        if (db) {
          for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t o = 0; o < cout; ++o) {
              const T* grow = gy + (b * cout + o) * len;
              T acc = 0;
              for (std::size_t t = 0; t < len; ++t) acc += grow[t];
              db[o] += acc;
            }
          }
        }
        if (dw) {
          for (std::size_t b = 0; b < n; ++b) {
            correlate_weights(gy + b * cout * len, xp->data() + b * cin * lp, dw, cin, cout, len, k);
          }
        }
        if (dx) {
          // Input gradient is a correlation of the padded output gradient with
          // the flipped, channel-transposed kernel.
          const T* wv = pw.value.data().data();
          std::vector<T> wflip(cin * cout * k);
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t i = 0; i < cin; ++i)
              for (std::size_t s = 0; s < k; ++s)
                wflip[(i * cout + o) * k + s] = wv[(o * cin + i) * k + (k - 1 - s)];
          const std::vector<T> gp = pad_rows(gy, n * cout, len, pad);
          for (std::size_t b = 0; b < n; ++b) {
            correlate(gp.data() + b * cout * lp, wflip.data(), dx + b * cin * len, cout, cin, len, k);
          }
        }
      });
}

template <class T>
Var<T> avg_pool1d(const Var<T>& x) {
  const Shape& in = x.shape();
  if (in.empty() || in.back() % 2 != 0) {
    throw_dimension("avg_pool1d", "last axis must be even, got " + shape_string(in));
  }
  Shape out_shape = in;
  out_shape.back() /= 2;
  Tensor<T> out(out_shape);
  const auto v = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (v[2 * i] + v[2 * i + 1]) * T(0.5);
  }
  return make_op<T>("avg_pool1d", std::move(out), {x}, [](Node<T>& self) {
    if (T* d = grad_target(*self.parents[0])) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const T g = self.grad[i] * T(0.5);
        d[2 * i] += g;
        d[2 * i + 1] += g;
      }
    }
  });
}

template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  const BatchNormState<T>& state, Mode mode, BatchNormState<T>* update) {
  require_rank("batch_norm", x, 3, "input");
  const std::size_t n = x.shape()[0], c = x.shape()[1], len = x.shape()[2];
  if (n == 0 || len == 0) throw_dimension("batch_norm", "zero-size batch");
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw_dimension("batch_norm", "gamma/beta must be [" + std::to_string(c) + "]");
  }
  if (state.running_mean.shape() != Shape{c} || state.running_var.shape() != Shape{c}) {
    throw_dimension("batch_norm", "running statistics must be [" + std::to_string(c) + "]");
  }
  const std::size_t m = n * len;
  const auto xv = x.value().data();

  std::vector<T> mu(c), inv_std(c);
  if (mode == Mode::kTrain) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* row = xv.data() + (b * c + ch) * len;
        for (std::size_t t = 0; t < len; ++t) s += row[t];
      }
      const double mean = s / double(m);
      double ss = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* row = xv.data() + (b * c + ch) * len;
        for (std::size_t t = 0; t < len; ++t) {
          const double dlt = row[t] - mean;
          ss += dlt * dlt;
        }
      }
      const double var = ss / double(m);
      mu[ch] = T(mean);
      inv_std[ch] = T(1.0 / std::sqrt(var + double(state.epsilon)));
      if (update) {
        const T mom = update->momentum;
        update->running_mean[ch] = mom * update->running_mean[ch] + (T(1) - mom) * T(mean);
        update->running_var[ch] = mom * update->running_var[ch] + (T(1) - mom) * T(var);
      }
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mu[ch] = state.running_mean[ch];
      inv_std[ch] = T(1) / std::sqrt(state.running_var[ch] + state.epsilon);
    }
  }

  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * len;
      const T g = gamma.value()[ch], be = beta.value()[ch];
      for (std::size_t t = 0; t < len; ++t) {
        const T h = (xv[off + t] - mu[ch]) * inv_std[ch];
        xhat[off + t] = h;
        out[off + t] = g * h + be;
      }
    }
  }

  const bool batch_stats = mode == Mode::kTrain;
  return make_op<T>(
      "batch_norm", std::move(out), {x, gamma, beta},
      [n, c, len, m, batch_stats, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](Node<T>& self) {
        Node<T>& px = *self.parents[0];
        Node<T>& pg = *self.parents[1];
        Node<T>& pb = *self.parents[2];
        T* dx = grad_target(px);
        T* dg = grad_target(pg);
        T* dbeta = grad_target(pb);
        const auto gy = self.grad.data();
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_g = 0, sum_gx = 0;
          for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = (b * c + ch) * len;
            for (std::size_t t = 0; t < len; ++t) {
              sum_g += gy[off + t];
              sum_gx += double(gy[off + t]) * xhat[off + t];
            }
          }
          if (dg) dg[ch] += T(sum_gx);
          if (dbeta) dbeta[ch] += T(sum_g);
          if (!dx) continue;
          const T gam = pg.value[ch];
          const T k = gam * inv_std[ch];
          if (batch_stats) {
            const T mg = T(sum_g / double(m)), mgx = T(sum_gx / double(m));
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t off = (b * c + ch) * len;
              for (std::size_t t = 0; t < len; ++t) {
                dx[off + t] += k * (gy[off + t] - mg - xhat[off + t] * mgx);
              }
            }
          } else {
            for (std::size_t b = 0; b < n; ++b) {
              const std::size_t off = (b * c + ch) * len;
              for (std::size_t t = 0; t < len; ++t) dx[off + t] += k * gy[off + t];
            }
          }
        }
      });
}

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  const std::size_t m = a.shape()[0], kk = a.shape()[1], nn = b.shape()[1];
  if (b.shape()[0] != kk) {
    throw_dimension("matmul", "inner dimensions of " + shape_string(a.shape()) + " and " +
                                  shape_string(b.shape()) + " disagree");
  }
  Tensor<T> out(Shape{m, nn});
  const T* av = a.value().data().data();
  const T* bv = b.value().data().data();
  T* o = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < kk; ++p) axpy(av[i * kk + p], bv + p * nn, o + i * nn, nn);
  }
  return make_op<T>("matmul", std::move(out), {a, b}, [m, kk, nn](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const T* g = self.grad.data().data();
    const T* av = pa.value.data().data();
    const T* bv = pb.value.data().data();
    if (T* da = grad_target(pa)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < kk; ++p) da[i * kk + p] += dot(g + i * nn, bv + p * nn, nn);
    }
    if (T* db = grad_target(pb)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < kk; ++p) axpy(av[i * kk + p], g + i * nn, db + p * nn, nn);
    }
  });
}

template <class T>
Var<T> batched_matmul(const Var<T>& a, const Var<T>& b) {
  require_rank("batched_matmul", a, 3, "lhs");
  require_rank("batched_matmul", b, 3, "rhs");
  const std::size_t bs = a.shape()[0], m = a.shape()[1], kk = a.shape()[2];
  const std::size_t nn = b.shape()[2];
  if (b.shape()[0] != bs || b.shape()[1] != kk) {
    throw_dimension("batched_matmul", "operands " + shape_string(a.shape()) + " and " +
                                          shape_string(b.shape()) + " disagree");
  }
  Tensor<T> out(Shape{bs, m, nn});
  const T* av = a.value().data().data();
  const T* bv = b.value().data().data();
  T* o = out.data().data();
  for (std::size_t s = 0; s < bs; ++s) {
    const T* as = av + s * m * kk;
    const T* bsp = bv + s * kk * nn;
    T* os = o + s * m * nn;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < kk; ++p) axpy(as[i * kk + p], bsp + p * nn, os + i * nn, nn);
  }
  return make_op<T>("batched_matmul", std::move(out), {a, b}, [bs, m, kk, nn](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    const T* g = self.grad.data().data();
    const T* av = pa.value.data().data();
    const T* bv = pb.value.data().data();
    T* da = grad_target(pa);
    T* db = grad_target(pb);
    for (std::size_t s = 0; s < bs; ++s) {
      const T* gs = g + s * m * nn;
      if (da) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < kk; ++p)
            da[s * m * kk + i * kk + p] += dot(gs + i * nn, bv + s * kk * nn + p * nn, nn);
      }
      if (db) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < kk; ++p)
            axpy(av[s * m * kk + i * kk + p], gs + i * nn, db + s * kk * nn + p * nn, nn);
      }
    }
  });
}

template <class T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank("dense", x, 2, "input");
  require_rank("dense", weight, 2, "weight");
  const std::size_t m = x.shape()[0], f = x.shape()[1], fo = weight.shape()[1];
  if (weight.shape()[0] != f) {
    throw_dimension("dense", "input " + shape_string(x.shape()) + " does not match weight " +
                                 shape_string(weight.shape()));
  }
  if (bias.shape() != Shape{fo}) {
    throw_dimension("dense", "bias " + shape_string(bias.shape()) + " != [" +
                                 std::to_string(fo) + "]");
  }
  Tensor<T> out(Shape{m, fo});
  const T* xv = x.value().data().data();
  const T* wv = weight.value().data().data();
  T* o = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(bias.value().data().begin(), bias.value().data().end(), o + i * fo);
    for (std::size_t p = 0; p < f; ++p) axpy(xv[i * f + p], wv + p * fo, o + i * fo, fo);
  }
  return make_op<T>("dense", std::move(out), {x, weight, bias}, [m, f, fo](Node<T>& self) {
    Node<T>& px = *self.parents[0];
    Node<T>& pw = *self.parents[1];
    const T* g = self.grad.data().data();
    const T* xv = px.value.data().data();
    const T* wv = pw.value.data().data();
    if (T* dx = grad_target(px)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < f; ++p) dx[i * f + p] += dot(g + i * fo, wv + p * fo, fo);
    }
    if (T* dw = grad_target(pw)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < f; ++p) axpy(xv[i * f + p], g + i * fo, dw + p * fo, fo);
    }
    if (T* db = grad_target(*self.parents[2])) {
      for (std::size_t i = 0; i < m; ++i) axpy(T(1), g + i * fo, db, fo);
    }
  });
}

template <class T>
Var<T> dropout(const Var<T>& x, double p, Mode mode, Rng* rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw Error(ErrorKind::kConfig, "dropout probability must be in [0,1), got " +
                                        std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) return x;
  if (!rng) throw Error(ErrorKind::kConfig, "dropout in train mode needs an rng");
  const T keep_scale = T(1.0 / (1.0 - p));
  std::bernoulli_distribution drop(p);
  Tensor<T> mask(x.shape());
  Tensor<T> out(x.shape());
  const auto v = x.value().data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = drop(*rng) ? T(0) : keep_scale;
    out[i] = v[i] * mask[i];
  }
  return make_op<T>("dropout", std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    if (T* d = grad_target(*self.parents[0])) {
      for (std::size_t i = 0; i < mask.size(); ++i) d[i] += self.grad[i] * mask[i];
    }
  });
}

// ---- ParameterStore --------------------------------------------------------

template <class T>
Var<T>& ParameterStore<T>::add(const std::string& name, Tensor<T> value, bool regularized) {
  if (entries_.count(name)) {
    throw Error(ErrorKind::kConfig, "duplicate parameter name '" + name + "'");
  }
  auto [it, _] = entries_.emplace(name, Entry{Var<T>::leaf(std::move(value)), regularized});
  return it->second.var;
}

template <class T>
const Var<T>& ParameterStore<T>::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(ErrorKind::kConfig, "unknown parameter '" + name + "'");
  return it->second.var;
}

template <class T>
Var<T>& ParameterStore<T>::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(ErrorKind::kConfig, "unknown parameter '" + name + "'");
  return it->second.var;
}

template <class T>
bool ParameterStore<T>::regularized(const std::string& name) const {
  auto it = entries_.find(name);
  return it != entries_.end() && it->second.regularized;
}

template <class T>
std::size_t ParameterStore<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.var.value().size();
  return n;
}

template <class T>
void ParameterStore<T>::zero_grad() {
  for (auto& [_, e] : entries_) e.var.zero_grad();
}

// ---- instantiation -----------------------------------------------------------

#define NSD_AD_INSTANTIATE(T)                                                          \
  template class Var<T>;                                                               \
  template class ParameterStore<T>;                                                    \
  template Var<T> make_op<T>(std::string, Tensor<T>, std::vector<Var<T>>,              \
                             std::function<void(Node<T>&)>);                           \
  template T* grad_target<T>(Node<T>&);                                                \
  template void backward<T>(const Var<T>&);                                            \
  template Var<T> add<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> mul<T>(const Var<T>&, const Var<T>&);                                \
  template Var<T> scale<T>(const Var<T>&, T);                                          \
  template Var<T> relu<T>(const Var<T>&);                                              \
  template Var<T> leaky_relu<T>(const Var<T>&, T);                                     \
  template Var<T> elu<T>(const Var<T>&, T);                                            \
  template Var<T> sigmoid<T>(const Var<T>&);                                           \
  template Var<T> sum<T>(const Var<T>&);                                               \
  template Var<T> mean<T>(const Var<T>&);                                              \
  template Var<T> mean_last_axis<T>(const Var<T>&);                                    \
  template Var<T> reshape<T>(const Var<T>&, Shape);                                    \
  template Var<T> conv1d<T>(const Var<T>&, const Var<T>&, const Var<T>&);              \
  template Var<T> avg_pool1d<T>(const Var<T>&);                                        \
  template Var<T> batch_norm<T>(const Var<T>&, const Var<T>&, const Var<T>&,           \
                                const BatchNormState<T>&, Mode, BatchNormState<T>*);                       \
  template Var<T> matmul<T>(const Var<T>&, const Var<T>&);                             \
  template Var<T> batched_matmul<T>(const Var<T>&, const Var<T>&);                     \
  template Var<T> dense<T>(const Var<T>&, const Var<T>&, const Var<T>&);               \
  template Var<T> dropout<T>(const Var<T>&, double, Mode, Rng*);

NSD_AD_INSTANTIATE(float)
NSD_AD_INSTANTIATE(double)

}  // namespace nsd::ad
