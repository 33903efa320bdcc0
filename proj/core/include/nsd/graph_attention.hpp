#pragma once

#include <span>
#include <string>
#include <vector>

#include "nsd/autodiff.hpp"
#include "nsd/montage_graph.hpp"

namespace nsd::gat {

inline constexpr double kLeakySlope = 0.2;

/// Masked single-head attention. `projected` is H*W with shape [B, N, F'],
/// `attn` is the learnable vector of length 2F'. Returns A with shape
/// [B, N, N]: softmax over j in N_i of LeakyReLU([h_i W || h_j W] . a),
/// exactly zero outside the mask.
template <class T>
ad::Var<T> attention_coefficients(const ad::Var<T>& projected, const ad::Var<T>& attn,
                                  const graph::Adjacency& mask, T slope = T(kLeakySlope));

template <class T>
struct GatWeights {
  ad::Var<T> weight;  // [F, F']
  ad::Var<T> attn;    // [2F']
};


/// H' = ELU(A (H W)) for H with shape [B, N, F]. If `attention` is given the
/// coefficient node is stored there.
template <class T>
ad::Var<T> gat_forward(const ad::Var<T>& h, const GatWeights<T>& layer,
                       const graph::Adjacency& mask, T slope = T(kLeakySlope),
                       ad::Var<T>* attention = nullptr);

/// Layers in sequence with dropout on node features between layers.
/// `outputs` (optional) receives every layer's activation.
template <class T>
ad::Var<T> gat_stack(const ad::Var<T>& h, std::span<const GatWeights<T>> layers,
                     const graph::Adjacency& mask, ad::Mode mode, double dropout_p,
                     ad::Rng* rng, std::vector<ad::Var<T>>* outputs = nullptr);

/// Max |row sum - 1| over rows, and whether every off-mask entry is zero.
template <class T>
struct AttentionCheck {
  double max_row_error = 0.0;
  bool mask_respected = true;
  bool in_unit_interval = true;
};

template <class T>
AttentionCheck<T> check_attention(const Tensor<T>& coefficients, const graph::Adjacency& mask);

}  // namespace nsd::gat
