#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sthmm {

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Edge as a pair of 0-based site indices with first < second.
using Edge = std::pair<int, int>;

/// Undirected spatial neighborhood system shared by every time point.
///
/// Sites are stored 0-based; the text format and all user-facing output use
/// 1-based indices. The edge list is kept sorted lexicographically with the
/// smaller endpoint first, which is the enumeration the latent potential sums
/// over ("j > i, j a neighbor of i").
class NeighborhoodSystem {
 public:
  NeighborhoodSystem() = default;

  /// Throws GraphError on self-loops, duplicates or out-of-range endpoints.
  NeighborhoodSystem(int n_sites, std::vector<Edge> edges);

  int n_sites() const noexcept { return n_sites_; }
  std::size_t n_edges() const noexcept { return edges_.size(); }

  /// Sorted 0-based neighbor list of `site`.
  const std::vector<int>& neighbors(int site) const { return adjacency_.at(site); }

  /// Each edge once as (i, j) with i < j, sorted lexicographically.
  const std::vector<Edge>& ordered_pairs() const noexcept { return edges_; }

  bool adjacent(int i, int j) const;

  friend bool operator==(const NeighborhoodSystem& a, const NeighborhoodSystem& b) {
    return a.n_sites_ == b.n_sites_ && a.edges_ == b.edges_;
  }

 private:
  int n_sites_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
};

/// z-by-z rook lattice, row-major site numbering.
NeighborhoodSystem build_grid(int z);

/// Uniform draw from all simple graphs on n nodes with exactly m edges.
NeighborhoodSystem build_erdos_renyi(int n, std::int64_t m, std::uint64_t seed);

/// Reads "N <n>" followed by one "i j" line per edge (1-based). Blank lines
/// and lines starting with '#' are ignored.
NeighborhoodSystem load_edge_list(std::istream& in);
void save_edge_list(const NeighborhoodSystem& g, std::ostream& out);

NeighborhoodSystem load_edge_list_file(const std::string& path);
void save_edge_list_file(const NeighborhoodSystem& g, const std::string& path);

}  // namespace sthmm
