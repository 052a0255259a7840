#include "sthmm/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "sthmm/rng.hpp"

namespace sthmm {

NeighborhoodSystem::NeighborhoodSystem(int n_sites, std::vector<Edge> edges)
    : n_sites_(n_sites), adjacency_(static_cast<std::size_t>(std::max(n_sites, 0))) {
  if (n_sites < 1) throw GraphError("graph needs at least one site");
  for (auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n_sites || j >= n_sites)
      throw GraphError("edge endpoint out of range");
    if (i == j) throw GraphError("self-loop at site " + std::to_string(i + 1));
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  if (auto dup = std::adjacent_find(edges.begin(), edges.end()); dup != edges.end())
    throw GraphError("duplicate edge " + std::to_string(dup->first + 1) + " " +
                     std::to_string(dup->second + 1));
  for (const auto& [i, j] : edges) {
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
  edges_ = std::move(edges);
}

bool NeighborhoodSystem::adjacent(int i, int j) const {
  const auto& nb = adjacency_.at(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

NeighborhoodSystem build_grid(int z) {
  if (z < 1) throw GraphError("grid dimension must be positive");
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(2 * z * (z - 1)));
  for (int r = 0; r < z; ++r) {
    for (int c = 0; c < z; ++c) {
      const int s = r * z + c;
      if (c + 1 < z) edges.emplace_back(s, s + 1);
      if (r + 1 < z) edges.emplace_back(s, s + z);
    }
  }
  return NeighborhoodSystem(z * z, std::move(edges));
}

namespace {

// Inverse of the row-major enumeration of pairs (i, j), i < j.
Edge pair_from_index(std::int64_t k, int n) {
  int i = 0;
  std::int64_t row = n - 1;
  while (k >= row) {
    k -= row;
    ++i;
    --row;
  }
  return {i, i + 1 + static_cast<int>(k)};
}

}  // namespace

NeighborhoodSystem build_erdos_renyi(int n, std::int64_t m, std::uint64_t seed) {
  if (n < 1) throw GraphError("graph needs at least one site");
  const std::int64_t max_edges = static_cast<std::int64_t>(n) * (n - 1) / 2;
  if (m < 0 || m > max_edges)
    throw GraphError("edge count " + std::to_string(m) + " outside [0, " +
                     std::to_string(max_edges) + "]");

  // Floyd's sampling of m distinct pair indices out of max_edges.
  Rng rng(seed);
  std::unordered_set<std::int64_t> chosen;
  std::vector<std::int64_t> order;
  order.reserve(static_cast<std::size_t>(m));
  for (std::int64_t j = max_edges - m; j < max_edges; ++j) {
    std::uniform_int_distribution<std::int64_t> pick(0, j);
    std::int64_t t = pick(rng);
    if (!chosen.insert(t).second) {
      chosen.insert(j);
      t = j;
    }
    order.push_back(t);
  }
  std::vector<Edge> edges;
  edges.reserve(order.size());
  for (auto k : order) edges.push_back(pair_from_index(k, n));
  return NeighborhoodSystem(n, std::move(edges));
}

NeighborhoodSystem load_edge_list(std::istream& in) {
  std::string line;
  int line_no = 0;
  int n = -1;
  std::vector<Edge> edges;
  std::unordered_set<std::int64_t> seen;
  auto fail = [&](const std::string& what) {
    throw GraphError("edge list line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (n < 0) {
      std::string tag;
      if (!(ls >> tag >> n) || tag != "N" || n < 1) fail("expected header 'N <n>'");
      continue;
    }
    long long a = 0, b = 0;
    std::string rest;
    if (!(ls >> a >> b) || (ls >> rest)) fail("expected 'i j'");
    if (a < 1 || b < 1 || a > n || b > n) fail("site index out of range 1.." + std::to_string(n));
    if (a == b) fail("self-loop at site " + std::to_string(a));
    int i = static_cast<int>(std::min(a, b)) - 1;
    int j = static_cast<int>(std::max(a, b)) - 1;
    if (!seen.insert(static_cast<std::int64_t>(i) * n + j).second)
      fail("duplicate edge " + std::to_string(i + 1) + " " + std::to_string(j + 1));
    edges.emplace_back(i, j);
  }
  if (n < 0) throw GraphError("edge list is missing the 'N <n>' header");
  return NeighborhoodSystem(n, std::move(edges));
}

void save_edge_list(const NeighborhoodSystem& g, std::ostream& out) {
  out << "N " << g.n_sites() << '\n';
  for (const auto& [i, j] : g.ordered_pairs()) out << i + 1 << ' ' << j + 1 << '\n';
}

NeighborhoodSystem load_edge_list_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open edge list '" + path + "'");
  return load_edge_list(in);
}

void save_edge_list_file(const NeighborhoodSystem& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw GraphError("cannot write edge list '" + path + "'");
  save_edge_list(g, out);
}

}  // namespace sthmm
