#include "nsd/montage_graph.hpp"

#include <algorithm>
#include <queue>
#include <sstream>

#include "nsd/error.hpp"

namespace nsd::graph {

Adjacency Adjacency::identity(std::size_t nodes) {
  Adjacency a(nodes);
  for (std::size_t i = 0; i < nodes; ++i) a.set(i, i);
  return a;
}

bool Adjacency::symmetric() const {
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if ((*this)(i, j) != (*this)(j, i)) return false;
  return true;
}

std::size_t Adjacency::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i) ? 1 : 0;
  return t;
}

std::vector<std::size_t> Adjacency::neighbours(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n_; ++j)
    if ((*this)(i, j)) out.push_back(j);
  return out;
}

MontageGraph build_graph() {
  MontageGraph g;
  g.adjacency = Adjacency(dsp::kChannelCount);
  for (std::size_t i = 0; i < dsp::kChannelCount; ++i) {
    g.nodes.push_back(dsp::kMontage[i].name);
    for (std::size_t j = 0; j < dsp::kChannelCount; ++j) {
      const auto& a = dsp::kMontage[i];
      const auto& b = dsp::kMontage[j];
      const bool shared = a.anode == b.anode || a.anode == b.cathode || a.cathode == b.anode ||
                          a.cathode == b.cathode;
      if (shared) g.adjacency.set(i, j);
    }
  }
  return g;
}

std::vector<int> hop_distances(const Adjacency& adj, std::size_t source) {
  std::vector<int> dist(adj.nodes(), -1);
  std::queue<std::size_t> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v = 0; v < adj.nodes(); ++v) {
      if (v != u && adj(u, v) && dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist;
}

bool connected(const Adjacency& adj) {
  if (adj.nodes() == 0) return true;
  const auto d = hop_distances(adj, 0);
  return std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
}

int diameter(const Adjacency& adj) {
  int diam = 0;
  for (std::size_t s = 0; s < adj.nodes(); ++s) {
    for (int d : hop_distances(adj, s)) {
      if (d < 0) throw Error(ErrorKind::kData, "diameter of a disconnected graph is undefined");
      diam = std::max(diam, d);
    }
  }
  return diam;
}

double k_hop_reach(const Adjacency& adj, int k) {
  if (k < 1) throw Error(ErrorKind::kConfig, "k_hop_reach needs k >= 1");
  const std::size_t n = adj.nodes();
  if (n < 2) return 1.0;
  std::size_t reached = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto d = hop_distances(adj, s);
    for (std::size_t t = 0; t < n; ++t) {
      if (t != s && d[t] >= 0 && d[t] <= k) ++reached;
    }
  }
  return double(reached) / double(n * (n - 1));
}

std::string edge_list(const MontageGraph& graph) {
  std::ostringstream out;
  const auto& a = graph.adjacency;
  for (std::size_t i = 0; i < a.nodes(); ++i)
    for (std::size_t j = i + 1; j < a.nodes(); ++j)
      if (a(i, j)) out << graph.nodes[i] << ' ' << graph.nodes[j] << '\n';
  return out.str();
}

}  // namespace nsd::graph
