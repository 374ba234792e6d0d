#pragma once

#include <Eigen/Sparse>
#include <algorithm>
#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvfh/errors.hpp"

namespace mvfh {

// Areal lattice: neighbor lists, binary symmetric adjacency matrix W and the
// neighbor counts w_{i+} (diagonal of D). Immutable after construction; no
// area may be an island (CAR conditionals are undefined for degree-0 areas).
struct Adjacency {
  int n = 0;
  std::vector<std::string> ids;                       // index -> identifier
  std::unordered_map<std::string, int> index_of;      // identifier -> index
  std::vector<std::vector<int>> neighbors;            // sorted per area
  std::vector<int> degrees;                           // w_{i+}
  Eigen::SparseMatrix<double> W;                      // n x n, binary, zero diagonal

  int num_edges() const {
    int total = 0;
    for (int d : degrees) total += d;
    return total / 2;
  }

  int index_of_id(const std::string& id) const {
    auto it = index_of.find(id);
    if (it == index_of.end()) {
      throw ValidationError("unknown area identifier '" + id + "' for this lattice");
    }
    return it->second;
  }

  Eigen::VectorXd degree_vector() const {
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d[i] = static_cast<double>(degrees[i]);
    return d;
  }

  // Build from an undirected edge list; areas indexed in first-appearance
  // order, symmetric closure and duplicate edges collapsed.
  static Adjacency from_edges(const std::vector<std::pair<std::string, std::string>>& edges) {
    Adjacency adj;
    std::vector<std::set<int>> nb;
    auto intern = [&](const std::string& id) {
      auto it = adj.index_of.find(id);
      if (it != adj.index_of.end()) return it->second;
      int idx = static_cast<int>(adj.ids.size());
      adj.index_of.emplace(id, idx);
      adj.ids.push_back(id);
      nb.emplace_back();
      return idx;
    };
    for (const auto& [a, b] : edges) {
      if (a == b) throw ValidationError("self-edge on area '" + a + "'");
      int ia = intern(a);
      int ib = intern(b);
      nb[ia].insert(ib);
      nb[ib].insert(ia);
    }
    adj.n = static_cast<int>(adj.ids.size());
    if (adj.n < 2) throw ValidationError("lattice needs at least two areas");
    adj.neighbors.resize(adj.n);
    adj.degrees.resize(adj.n);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < adj.n; ++i) {
      adj.neighbors[i].assign(nb[i].begin(), nb[i].end());
      adj.degrees[i] = static_cast<int>(adj.neighbors[i].size());
      if (adj.degrees[i] == 0) {
        throw ValidationError("area '" + adj.ids[i] + "' has no neighbors (island)");
      }
      for (int j : adj.neighbors[i]) trips.emplace_back(i, j, 1.0);
    }
    adj.W.resize(adj.n, adj.n);
    adj.W.setFromTriplets(trips.begin(), trips.end());
    adj.W.makeCompressed();
    return adj;
  }

  // Sub-lattice with one area removed (leave-one-out refits). Throws if the
  // removal leaves any remaining area with no neighbors.
  Adjacency without_area(int drop) const {
    if (drop < 0 || drop >= n) throw ValidationError("area index out of range");
    std::vector<std::pair<std::string, std::string>> edges;
    for (int i = 0; i < n; ++i) {
      if (i == drop) continue;
      for (int j : neighbors[i]) {
        if (j == drop || j < i) continue;
        edges.emplace_back(ids[i], ids[j]);
      }
    }
    std::set<std::string> connected;
    for (const auto& [a, b] : edges) {
      connected.insert(a);
      connected.insert(b);
    }
    for (int i = 0; i < n; ++i) {
      if (i == drop) continue;
      if (!connected.count(ids[i])) {
        throw ValidationError("removing area '" + ids[drop] + "' leaves area '" +
                              ids[i] + "' with no neighbors (island)");
      }
    }
    return from_edges(edges);
  }
};

// Parse a neighbor-list: one edge per line, two whitespace-separated
// identifiers, '#' starts a comment, blank lines ignored.
inline Adjacency parse_neighbor_list(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;  // blank or comment-only line
    if (!(ls >> b) || (ls >> extra)) {
      throw ValidationError("neighbor list line " + std::to_string(lineno) +
                            ": expected exactly two identifiers");
    }
    edges.emplace_back(std::move(a), std::move(b));
  }
  if (edges.empty()) throw ValidationError("neighbor list contains no edges");
  return Adjacency::from_edges(edges);
}

inline Adjacency load_neighbor_list(const std::string& text) {
  std::istringstream in(text);
  return parse_neighbor_list(in);
}

// Write each undirected edge once; (load ∘ serialize) preserves the edge set.
inline void write_neighbor_list(const Adjacency& adj, std::ostream& out) {
  for (int i = 0; i < adj.n; ++i) {
    for (int j : adj.neighbors[i]) {
      if (j > i) out << adj.ids[i] << ' ' << adj.ids[j] << '\n';
    }
  }
}

inline std::string serialize_neighbor_list(const Adjacency& adj) {
  std::ostringstream out;
  write_neighbor_list(adj, out);
  return out.str();
}

// Rook adjacency on a rows x cols grid; area ids are "r<i>c<j>", 1-based.
inline Adjacency grid_lattice(int rows, int cols) {
  if (rows < 1 || cols < 1) throw ValidationError("grid dimensions must be positive");
  if (rows * cols < 2) throw ValidationError("1x1 grid has an isolated area");
  auto id = [](int r, int c) {
    return "r" + std::to_string(r + 1) + "c" + std::to_string(c + 1);
  };
  std::vector<std::pair<std::string, std::string>> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) edges.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < rows) edges.emplace_back(id(r, c), id(r + 1, c));
    }
  }
  return Adjacency::from_edges(edges);
}

}  // namespace mvfh
