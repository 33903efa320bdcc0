#include "nsd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "json.hpp"
#include "nsd/graph_attention.hpp"
#include "nsd/montage_graph.hpp"
#include "nsd/train.hpp"

namespace nsd::gradcheck {

using V = ad::Var<double>;
using Td = Tensor<double>;

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

CheckResult check(const std::string& name, std::vector<V> leaves, const LossFn& loss,
                  double tolerance, std::size_t max_per_leaf, std::uint64_t seed) {
  CheckResult r{name, 0, 0.0, tolerance};
  for (auto& leaf : leaves) leaf.zero_grad();
  ad::backward(loss(leaves));
  std::vector<Td> analytic;
  for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

  ad::Rng rng(seed);
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    if (!leaves[l].requires_grad()) continue;
    Td& value = leaves[l].mutable_value();
    std::vector<std::size_t> picks(value.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    if (max_per_leaf && picks.size() > max_per_leaf) {
      std::shuffle(picks.begin(), picks.end(), rng);
      picks.resize(max_per_leaf);
    }
    for (std::size_t i : picks) {
      const double saved = value[i];
      value[i] = saved + kStep;
      const double up = loss(leaves).value()[0];
      value[i] = saved - kStep;
      const double down = loss(leaves).value()[0];
      value[i] = saved;
      const double numeric = (up - down) / (2 * kStep);
      r.max_rel_err = std::max(r.max_rel_err, relative_error(analytic[l][i], numeric));
      ++r.checked;
    }
  }
  return r;
}

namespace {

Td random(Shape shape, ad::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Td t(std::move(shape));
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

// Values kept at least `gap` away from zero so kinks sit outside the stencil.
Td away_from_zero(Shape shape, ad::Rng& rng, double gap = 1e-2) {
  Td t = random(std::move(shape), rng);
  for (auto& v : t.data()) v += v >= 0 ? gap : -gap;
  return t;
}

// Random linear functional: every output element gets its own weight.
V project(const V& y, const Td& weights) {
  return ad::sum(ad::mul(y, V::constant(weights)));
}

}  // namespace

std::vector<CheckResult> primitive_suite(std::uint64_t seed) {
  ad::Rng rng(seed);
  std::vector<CheckResult> out;
  auto leaf = [](Td t) { return V::leaf(std::move(t)); };
  auto unary = [&](const std::string& name, auto op, Td input) {
    const Td w = random(op(V::constant(input)).shape(), rng);
    out.push_back(check(name, {leaf(std::move(input))},
                        [&](const std::vector<V>& v) { return project(op(v[0]), w); }));
  };

  unary("relu", [](const V& x) { return ad::relu(x); }, away_from_zero({3, 7}, rng));
  unary("leaky_relu", [](const V& x) { return ad::leaky_relu(x, 0.2); }, away_from_zero({3, 7}, rng));
  unary("elu", [](const V& x) { return ad::elu(x, 1.0); }, away_from_zero({3, 7}, rng));
  unary("sigmoid", [](const V& x) { return ad::sigmoid(x); }, random({3, 7}, rng, 3.0));
  unary("scale", [](const V& x) { return ad::scale(x, -1.7); }, random({4, 5}, rng));
  unary("mean_last_axis", [](const V& x) { return ad::mean_last_axis(x); }, random({2, 3, 5}, rng));
  unary("reshape", [](const V& x) { return ad::reshape(x, {6, 5}); }, random({2, 3, 5}, rng));
  unary("avg_pool1d", [](const V& x) { return ad::avg_pool1d(x); }, random({2, 3, 8}, rng));

  out.push_back(check("sum", {leaf(random({4, 3}, rng))},
                      [](const std::vector<V>& v) { return ad::scale(ad::sum(v[0]), 0.3); }));
  out.push_back(check("mean", {leaf(random({4, 3}, rng))},
                      [](const std::vector<V>& v) { return ad::mean(v[0]); }));
  {
    const Td w = random({3, 4}, rng);
    out.push_back(check("add", {leaf(random({3, 4}, rng)), leaf(random({3, 4}, rng))},
                        [&](const std::vector<V>& v) { return project(ad::add(v[0], v[1]), w); }));
    out.push_back(check("mul", {leaf(random({3, 4}, rng)), leaf(random({3, 4}, rng))},
                        [&](const std::vector<V>& v) { return project(ad::mul(v[0], v[1]), w); }));
  }
  {
    const Td w = random({2, 4, 9}, rng);
    out.push_back(check("conv1d", {leaf(random({2, 3, 9}, rng)), leaf(random({4, 3, 5}, rng)),
                                   leaf(random({4}, rng))},
                        [&](const std::vector<V>& v) {
                          return project(ad::conv1d(v[0], v[1], v[2]), w);
                        }));
    const Td w1 = random({2, 4, 9}, rng);
    out.push_back(check("conv1d_k1_nobias", {leaf(random({2, 3, 9}, rng)), leaf(random({4, 3, 1}, rng))},
                        [&](const std::vector<V>& v) {
                          return project(ad::conv1d(v[0], v[1], V()), w1);
                        }));
  }
  {
    const Td w = random({3, 2, 6}, rng);
    ad::BatchNormState<double> state;
    state.running_mean = random({2}, rng);
    state.running_var = Td(Shape{2}, 1.5);
    for (ad::Mode mode : {ad::Mode::kTrain, ad::Mode::kEval}) {
      out.push_back(check(mode == ad::Mode::kTrain ? "batch_norm_train" : "batch_norm_eval",
                          {leaf(random({3, 2, 6}, rng)), leaf(random({2}, rng)), leaf(random({2}, rng))},
                          [&, mode](const std::vector<V>& v) {
                            return project(ad::batch_norm(v[0], v[1], v[2], state, mode), w);
                          }));
    }
  }
  {
    const Td w = random({3, 5}, rng);
    out.push_back(check("matmul", {leaf(random({3, 4}, rng)), leaf(random({4, 5}, rng))},
                        [&](const std::vector<V>& v) { return project(ad::matmul(v[0], v[1]), w); }));
    out.push_back(check("dense", {leaf(random({3, 4}, rng)), leaf(random({4, 5}, rng)), leaf(random({5}, rng))},
                        [&](const std::vector<V>& v) {
                          return project(ad::dense(v[0], v[1], v[2]), w);
                        }));
    const Td wb = random({2, 3, 5}, rng);
    out.push_back(check("batched_matmul", {leaf(random({2, 3, 4}, rng)), leaf(random({2, 4, 5}, rng))},
                        [&](const std::vector<V>& v) {
                          return project(ad::batched_matmul(v[0], v[1]), wb);
                        }));
  }
  {
    const Td w = random({4, 6}, rng);
    const std::uint64_t mask_seed = rng();
    out.push_back(check("dropout", {leaf(random({4, 6}, rng))}, [&](const std::vector<V>& v) {
      ad::Rng r(mask_seed);
      return project(ad::dropout(v[0], 0.3, ad::Mode::kTrain, &r), w);
    }));
  }
  {
    const auto graph = graph::build_graph();
    const Td w = random({2, 12, 12}, rng);
    out.push_back(check("attention_coefficients", {leaf(random({2, 12, 3}, rng)), leaf(random({6}, rng))},
                        [&](const std::vector<V>& v) {
                          return project(gat::attention_coefficients(v[0], v[1], graph.adjacency), w);
                        }));
    const Td wg = random({2, 12, 4}, rng);
    out.push_back(check("gat_layer", {leaf(random({2, 12, 5}, rng)), leaf(random({5, 4}, rng, 0.5)),
                                      leaf(random({8}, rng, 0.5))},
                        [&](const std::vector<V>& v) {
                          return project(gat::gat_forward(v[0], gat::GatWeights<double>{v[1], v[2]},
                                                          graph.adjacency),
                                         wg);
                        }));
  }
  {
    std::uniform_real_distribution<double> unit(0.02, 0.98);
    Td p(Shape{20});
    std::vector<int> labels(20);
    for (std::size_t i = 0; i < 20; ++i) {
      p[i] = unit(rng);
      labels[i] = int(i % 2);
    }
    out.push_back(check("focal_bce", {leaf(std::move(p))}, [labels](const std::vector<V>& v) {
      return train::focal_bce(v[0], labels);
    }));
  }
  return out;
}

CheckResult model_check(const model::ModelConfig& config, const ModelCheckOptions& options) {
  model::Model<double> net(config);
  ad::Rng rng(options.seed);
  const auto input = V::constant(random({options.batch, config.channels, config.samples}, rng));
  std::vector<int> labels(options.batch);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = int(i % 2);
  // Random non-trivial batch-norm affine parameters and running stats.
  for (auto& [name, e] : net.params().entries()) {
    if (name.ends_with(".gamma") || name.ends_with(".beta")) {
      for (auto& v : e.var.mutable_value().data()) v += 0.1 * std::normal_distribution<double>()(rng);
    }
  }
  const std::uint64_t dropout_seed = rng();

  std::vector<V> leaves;
  std::vector<std::string> names;
  for (auto& [name, e] : net.params().entries()) {
    leaves.push_back(e.var);
    names.push_back(name);
  }
  auto loss = [&](const std::vector<V>&) {
    ad::Rng masks(dropout_seed);
    model::ForwardOptions fo;
    fo.mode = ad::Mode::kTrain;
    fo.rng = &masks;
    fo.update_stats = false;
    return train::focal_bce(net.forward(input, fo).probability, labels);
  };
  CheckResult r = check("model", leaves, loss, kModelTolerance, options.per_tensor, options.seed);
  r.name = "model (" + std::to_string(r.checked) + " parameters)";
  return r;
}

std::string to_json(const std::vector<CheckResult>& results) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results) {
    j.push_back({{"name", r.name},
                 {"checked", r.checked},
                 {"max_rel_err", r.max_rel_err},
                 {"tolerance", r.tolerance},
                 {"passed", r.passed()}});
  }
  return j.dump(2);
}

}  // namespace nsd::gradcheck
