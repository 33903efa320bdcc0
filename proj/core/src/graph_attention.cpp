#include "nsd/graph_attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nsd/error.hpp"

namespace nsd::gat {

template <class T>
ad::Var<T> attention_coefficients(const ad::Var<T>& projected, const ad::Var<T>& attn,
                                  const graph::Adjacency& mask, T slope) {
  if (projected.shape().size() != 3) {
    throw_dimension("attention_coefficients", "projected features must be [B, N, F']");
  }
  const std::size_t bs = projected.shape()[0], n = projected.shape()[1], f = projected.shape()[2];
  if (attn.shape() != Shape{2 * f}) {
    throw_dimension("attention_coefficients", "attention vector must have length " +
                                                  std::to_string(2 * f) + ", got " +
                                                  shape_string(attn.shape()));
  }
  if (mask.nodes() != n) {
    throw_dimension("attention_coefficients", "mask has " + std::to_string(mask.nodes()) +
                                                  " nodes, features have " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask(i, i)) {
      throw Error(ErrorKind::kData, "attention mask lacks the self-loop of node " +
                                        std::to_string(i));
    }
  }

  const T* p = projected.value().data().data();
  const T* a = attn.value().data().data();
  Tensor<T> src(Shape{bs, n}), dst(Shape{bs, n});
  for (std::size_t b = 0; b < bs; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = p + (b * n + i) * f;
      T s1 = 0, s2 = 0;
      for (std::size_t k = 0; k < f; ++k) {
        s1 += row[k] * a[k];
        s2 += row[k] * a[f + k];
      }
      src.at(b, i) = s1;
      dst.at(b, i) = s2;
    }
  }

  Tensor<T> out(Shape{bs, n, n});
  std::vector<T> logits(n);
  for (std::size_t b = 0; b < bs; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      T row_max = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask(i, j)) continue;
        const T z = src.at(b, i) + dst.at(b, j);
        logits[j] = z > T(0) ? z : slope * z;
        row_max = std::max(row_max, logits[j]);
      }
      T denom = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask(i, j)) continue;
        const T e = std::exp(logits[j] - row_max);
        out.at(b, i, j) = e;
        denom += e;
      }
      for (std::size_t j = 0; j < n; ++j) out.at(b, i, j) /= denom;
    }
  }

  if (ad::validation_enabled()) {
    const auto check = check_attention(out, mask);
    if (check.max_row_error > 1e-6 || !check.mask_respected || !check.in_unit_interval) {
      throw Error(ErrorKind::kNumeric, "attention coefficients violate row-stochastic mask");
    }
  }

  return ad::make_op<T>(
      "gat_attention", std::move(out), {projected, attn},
      [bs, n, f, slope, mask, src = std::move(src), dst = std::move(dst)](ad::Node<T>& self) {
        ad::Node<T>& pp = *self.parents[0];
        ad::Node<T>& pa = *self.parents[1];
        T* dp = ad::grad_target(pp);
        T* da = ad::grad_target(pa);
        const T* pv = pp.value.data().data();
        const T* av = pa.value.data().data();
        std::vector<T> ds1(n), ds2(n);
        for (std::size_t b = 0; b < bs; ++b) {
          std::fill(ds1.begin(), ds1.end(), T(0));
          std::fill(ds2.begin(), ds2.end(), T(0));
          for (std::size_t i = 0; i < n; ++i) {
            T inner = 0;
            for (std::size_t j = 0; j < n; ++j) {
              inner += self.value.at(b, i, j) * self.grad.at(b, i, j);
            }
            for (std::size_t j = 0; j < n; ++j) {
              if (!mask(i, j)) continue;
              const T alpha = self.value.at(b, i, j);
              const T de = alpha * (self.grad.at(b, i, j) - inner);
              const T z = src.at(b, i) + dst.at(b, j);
              const T dz = de * (z > T(0) ? T(1) : slope);
              ds1[i] += dz;
              ds2[j] += dz;
            }
          }
          for (std::size_t i = 0; i < n; ++i) {
            const T* row = pv + (b * n + i) * f;
            if (dp) {
              T* drow = dp + (b * n + i) * f;
              for (std::size_t k = 0; k < f; ++k) drow[k] += ds1[i] * av[k] + ds2[i] * av[f + k];
            }
            if (da) {
              for (std::size_t k = 0; k < f; ++k) {
                da[k] += ds1[i] * row[k];
                da[f + k] += ds2[i] * row[k];
              }
            }
          }
        }
      });
}

template <class T>
ad::Var<T> gat_forward(const ad::Var<T>& h, const GatWeights<T>& layer,
                       const graph::Adjacency& mask, T slope, ad::Var<T>* attention) {
  if (h.shape().size() != 3) throw_dimension("gat_forward", "features must be [B, N, F]");
  const std::size_t bs = h.shape()[0], n = h.shape()[1], f = h.shape()[2];
  if (layer.weight.shape().size() != 2 || layer.weight.shape()[0] != f) {
    throw_dimension("gat_forward", "weight " + shape_string(layer.weight.shape()) +
                                       " does not accept " + std::to_string(f) + " features");
  }
  const std::size_t fo = layer.weight.shape()[1];
  auto projected = ad::reshape(ad::matmul(ad::reshape(h, {bs * n, f}), layer.weight), {bs, n, fo});
  auto coeffs = attention_coefficients(projected, layer.attn, mask, slope);
  if (attention) *attention = coeffs;
  return ad::elu(ad::batched_matmul(coeffs, projected), T(1));
}

template <class T>
ad::Var<T> gat_stack(const ad::Var<T>& h, std::span<const GatWeights<T>> layers,
                     const graph::Adjacency& mask, ad::Mode mode, double dropout_p,
                     ad::Rng* rng, std::vector<ad::Var<T>>* outputs) {
  ad::Var<T> x = h;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = gat_forward(x, layers[l], mask);
    if (outputs) outputs->push_back(x);
    if (l + 1 < layers.size()) x = ad::dropout(x, dropout_p, mode, rng);
  }
  return x;
}

template <class T>
AttentionCheck<T> check_attention(const Tensor<T>& coefficients, const graph::Adjacency& mask) {
  AttentionCheck<T> c;
  const std::size_t n = mask.nodes();
  const std::size_t bs = coefficients.size() / (n * n);
  for (std::size_t b = 0; b < bs; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const T v = coefficients[(b * n + i) * n + j];
        if (!mask(i, j) && v != T(0)) c.mask_respected = false;
        if (!(v >= T(0) && v <= T(1))) c.in_unit_interval = false;
        row += double(v);
      }
      c.max_row_error = std::max(c.max_row_error, std::abs(row - 1.0));
    }
  }
  return c;
}

#define NSD_GAT_INSTANTIATE(T)                                                              \
  template ad::Var<T> attention_coefficients<T>(const ad::Var<T>&, const ad::Var<T>&,       \
                                                const graph::Adjacency&, T);                \
  template ad::Var<T> gat_forward<T>(const ad::Var<T>&, const GatWeights<T>&,               \
                                     const graph::Adjacency&, T, ad::Var<T>*);              \
  template ad::Var<T> gat_stack<T>(const ad::Var<T>&, std::span<const GatWeights<T>>,       \
                                   const graph::Adjacency&, ad::Mode, double, ad::Rng*,     \
                                   std::vector<ad::Var<T>>*);                               \
  template AttentionCheck<T> check_attention<T>(const Tensor<T>&, const graph::Adjacency&);

NSD_GAT_INSTANTIATE(float)
NSD_GAT_INSTANTIATE(double)

}  // namespace nsd::gat
