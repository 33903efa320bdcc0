#include "nsd/bench.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "json.hpp"
#include "nsd/error.hpp"
#include "nsd/metrics.hpp"

namespace nsd::bench {

using Clock = std::chrono::steady_clock;

double percentile(std::vector<double> values, double q) { return metrics::quantile(std::move(values), q); }

namespace {

StageStats stats_of(const std::vector<double>& v) {
  return {percentile(v, 0.5), percentile(v, 0.95)};
}

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

}  // namespace

LatencyReport bench_latency(const model::Model<float>& model, std::size_t iterations,
                            std::size_t warmup, std::uint64_t seed) {
  if (iterations == 0) throw Error(ErrorKind::kConfig, "bench needs at least one iteration");
  const auto& cfg = model.config();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  Tensor<float> epoch(Shape{1, cfg.channels, cfg.samples});
  for (auto& v : epoch.data()) v = nd(rng);

  model::ForwardOptions options;
  options.frozen = true;
  std::vector<double> total, enc, att, head;
  volatile float sink = 0;
  for (std::size_t i = 0; i < warmup + iterations; ++i) {
    const auto t0 = Clock::now();
    const auto x = ad::Var<float>::constant(epoch);
    const auto e = model.encode(x, options, nullptr, nullptr);
    const double t_enc = ms_since(t0);
    const auto t1 = Clock::now();
    const auto g = model.attend(e, options, nullptr);
    const double t_att = ms_since(t1);
    const auto t2 = Clock::now();
    const auto out = model.head(g, options, nullptr);
    const double t_head = ms_since(t2);
    const double t_total = ms_since(t0);
    sink = sink + out.probability.value()[0];
    if (i < warmup) continue;
    total.push_back(t_total);
    enc.push_back(t_enc);
    att.push_back(t_att);
    head.push_back(t_head);
  }
  (void)sink;

  LatencyReport r;
  r.warmup = warmup;
  r.iterations = iterations;
  r.total = stats_of(total);
  r.mean_ms = std::accumulate(total.begin(), total.end(), 0.0) / double(total.size());
  r.min_ms = *std::min_element(total.begin(), total.end());
  r.max_ms = *std::max_element(total.begin(), total.end());
  r.stages["encoder"] = stats_of(enc);
  r.stages["graph_attention"] = stats_of(att);
  r.stages["head"] = stats_of(head);
  return r;
}

std::string LatencyReport::to_json() const {
  nlohmann::json j;
  j["warmup"] = warmup;
  j["iterations"] = iterations;
  j["threads"] = 1;
  j["median_ms"] = total.median_ms;
  j["p95_ms"] = total.p95_ms;
  j["mean_ms"] = mean_ms;
  j["min_ms"] = min_ms;
  j["max_ms"] = max_ms;
  for (const auto& [name, s] : stages) {
    j["stages"][name] = {{"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}};
  }
  j["reference_cpu_ms"] = kReferenceCpuMs;
  j["ratio_to_reference"] = total.median_ms / kReferenceCpuMs;
  return j.dump(2);
}

}  // namespace nsd::bench
