#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nsd/model.hpp"

namespace nsd::bench {

inline constexpr double kReferenceCpuMs = 62.0;  // published CPU figure, context only

struct StageStats {
  double median_ms = 0;
  double p95_ms = 0;
};

struct LatencyReport {
  std::size_t warmup = 10;
  std::size_t iterations = 100;
  StageStats total;
  double mean_ms = 0, min_ms = 0, max_ms = 0;
  std::map<std::string, StageStats> stages;  // encoder, graph_attention, head

  std::string to_json() const;
};

/// Nearest-rank style quantile with linear interpolation.
double percentile(std::vector<double> values, double q);

/// Single-epoch eval-mode forward latency on one thread.
LatencyReport bench_latency(const model::Model<float>& model, std::size_t iterations = 100,
                            std::size_t warmup = 10, std::uint64_t seed = 0);

}  // namespace nsd::bench
