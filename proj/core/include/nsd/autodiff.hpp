#pragma once

#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "nsd/tensor.hpp"

namespace nsd::ad {

using Rng = std::mt19937_64;

enum class Mode { kTrain, kEval };

/// When enabled, every op output is checked for NaN/Inf and graph-attention
/// layers assert row-stochastic masked coefficients. Off by default.
void set_validation(bool enabled);
bool validation_enabled();

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents[i]->grad.
  std::function<void(Node&)> backward_fn;
  std::string op;
};

/// Handle to a node of the computation graph. Copies share the node.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value);
  static Var leaf(Tensor<T> value, bool requires_grad = true);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::string& op() const { return node_->op; }

  /// Leaves only: optimizers update parameter values in place between steps.
  Tensor<T>& mutable_value();

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient after backward(); zeros of the value's shape if never reached.
  const Tensor<T>& grad() const;
  void zero_grad();

  Node<T>* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Creates an op node; `backward_fn` is dropped when no parent requires grad.
template <class T>
Var<T> make_op(std::string op, Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn);

/// Gradient buffer of `node`, or nullptr when it does not take gradients.
template <class T>
T* grad_target(Node<T>& node);

/// Reverse-mode sweep from a scalar. Gradients of every reached node are reset
/// to zero first, then accumulated additively across fan-out.
template <class T>
void backward(const Var<T>& loss);

// ---- elementwise ---------------------------------------------------------

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> scale(const Var<T>& a, T factor);
template <class T> Var<T> relu(const Var<T>& x);
template <class T> Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2));
template <class T> Var<T> elu(const Var<T>& x, T alpha = T(1));
template <class T> Var<T> sigmoid(const Var<T>& x);

// ---- reductions and shape ------------------------------------------------

template <class T> Var<T> sum(const Var<T>& x);
template <class T> Var<T> mean(const Var<T>& x);
/// [..., F] -> [...]: mean over the last axis.
template <class T> Var<T> mean_last_axis(const Var<T>& x);
template <class T> Var<T> reshape(const Var<T>& x, Shape shape);

// ---- layers --------------------------------------------------------------

/// Cross-correlation with zero "same" padding. input [N, C_in, L],
/// weight [C_out, C_in, K] with K odd, bias [C_out] or undefined.
template <class T>
Var<T> conv1d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias);

/// Window 2, stride 2 along the last axis. Last axis must be even.
template <class T> Var<T> avg_pool1d(const Var<T>& x);

template <class T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.9);
  T epsilon = T(1e-5);
};

/// Normalizes [N, C, L] per C. Train mode uses batch statistics and, when
/// `update` is given, blends them into it with momentum
/// (running = m * running + (1 - m) * batch). Eval mode uses `state`.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  const BatchNormState<T>& state, Mode mode,
                  BatchNormState<T>* update = nullptr);

/// [M, K] x [K, N].
template <class T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
/// [B, M, K] x [B, K, N].
template <class T> Var<T> batched_matmul(const Var<T>& a, const Var<T>& b);
/// x [M, F] * weight [F, F'] + bias [F'].
template <class T>
Var<T> dense(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Inverted dropout: train mode zeroes with probability p and scales
/// survivors by 1/(1-p). Eval mode or p == 0 returns `x` unchanged.
template <class T>
Var<T> dropout(const Var<T>& x, double p, Mode mode, Rng* rng);

// ---- parameters ----------------------------------------------------------

/// Named trainable leaves. Iteration order is lexicographic by name.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    Var<T> var;
    bool regularized = false;  // receives the L2 kernel penalty
  };

  Var<T>& add(const std::string& name, Tensor<T> value, bool regularized);
  const Var<T>& get(const std::string& name) const;
  Var<T>& get(const std::string& name);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  bool regularized(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::map<std::string, Entry>& entries() { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

#define NSD_AD_EXTERN(T)                                 \
  extern template class Var<T>;                          \
  extern template class ParameterStore<T>;

NSD_AD_EXTERN(float)
NSD_AD_EXTERN(double)
#undef NSD_AD_EXTERN

}  // namespace nsd::ad
