#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nsd/dsp.hpp"

namespace nsd::graph {

/// Square binary matrix; also serves as the attention mask.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t nodes) : n_(nodes), bits_(nodes * nodes, 0) {}

  static Adjacency identity(std::size_t nodes);

  std::size_t nodes() const noexcept { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool on = true) { bits_[i * n_ + j] = on ? 1 : 0; }
  void set_symmetric(std::size_t i, std::size_t j, bool on = true) {
    set(i, j, on);
    set(j, i, on);
  }

  bool symmetric() const;
  std::size_t trace() const;
  /// Neighbourhood of i including i itself when the diagonal is set.
  std::vector<std::size_t> neighbours(std::size_t i) const;
  bool operator==(const Adjacency&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct MontageGraph {
  std::vector<std::string_view> nodes;  // channel names, montage order
  Adjacency adjacency;                  // self-loops included
};

/// Channels are adjacent iff their bipolar pairs share an electrode.
MontageGraph build_graph();

/// Hop distances from `source`; unreachable nodes get -1. Self-loops ignored.
std::vector<int> hop_distances(const Adjacency& adj, std::size_t source);

bool connected(const Adjacency& adj);
int diameter(const Adjacency& adj);

/// Fraction of ordered pairs (i, j), i != j, within k hops.
double k_hop_reach(const Adjacency& adj, int k);

/// One "a b" line per undirected edge (self-loops omitted), channel names.
std::string edge_list(const MontageGraph& graph);

}  // namespace nsd::graph
