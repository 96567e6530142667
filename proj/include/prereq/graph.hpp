#pragma once

// Heterogeneous concept-resource graph: typed nodes, three typed edge
// lists, cosine-similarity edge construction, labeled concept edges, and
// per-relation normalized adjacency.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "prereq/corpus.hpp"
#include "prereq/error.hpp"
#include "prereq/io.hpp"
#include "prereq/random.hpp"
#include "prereq/tensor.hpp"

namespace prereq {

enum class NodeKind { Concept, Resource };

struct NodeRef {
  NodeKind kind;
  int local_id;
  int global_id;

  static NodeRef concept_node(int id) { return {NodeKind::Concept, id, id}; }
  static NodeRef resource_node(int id, int num_concepts) { return {NodeKind::Resource, id, num_concepts + id}; }
};

enum class EdgeType : int { ConceptConcept = 0, ConceptResource = 1, ResourceResource = 2 };

inline constexpr std::array<EdgeType, 3> kAllEdgeTypes{EdgeType::ConceptConcept, EdgeType::ConceptResource,
                                                      EdgeType::ResourceResource};

inline std::string_view edge_tag(EdgeType t) {
  switch (t) {
    case EdgeType::ConceptConcept: return "cc";
    case EdgeType::ConceptResource: return "cr";
    case EdgeType::ResourceResource: return "rr";
  }
  return "?";
}

inline std::optional<EdgeType> parse_edge_tag(std::string_view s) {
  for (auto t : kAllEdgeTypes)
    if (edge_tag(t) == s) return t;
  return std::nullopt;
}

struct Edge {
  int src;
  int dst;
  double weight;

  friend bool operator==(const Edge&, const Edge&) = default;
};

class HeteroGraph {
 public:
  HeteroGraph() = default;
  HeteroGraph(int num_concepts, int num_resources) : num_concepts_(num_concepts), num_resources_(num_resources) {
    if (num_concepts < 0 || num_resources < 0) throw ValidationError("HeteroGraph: negative node count");
  }

  int num_concepts() const noexcept { return num_concepts_; }
  int num_resources() const noexcept { return num_resources_; }
  int num_nodes() const noexcept { return num_concepts_ + num_resources_; }

  NodeRef node(int global_id) const {
    if (global_id < 0 || global_id >= num_nodes()) throw ValidationError("node id out of range");
    return global_id < num_concepts_ ? NodeRef::concept_node(global_id)
                                     : NodeRef::resource_node(global_id - num_concepts_, num_concepts_);
  }
  bool is_concept(int global_id) const noexcept { return global_id < num_concepts_; }

  /// Validates endpoint kinds, weight range, and rejects self-loops.
  /// ConceptResource edges are stored as (concept, resource).
  void add_edge(EdgeType type, int src, int dst, double weight) {
    if (src < 0 || dst < 0 || src >= num_nodes() || dst >= num_nodes())
      throw ValidationError("edge endpoint out of range: " + std::to_string(src) + "->" + std::to_string(dst));
    if (src == dst) throw ValidationError("self-loop edges are not stored");
    if (!std::isfinite(weight) || weight < 0.0 || weight > 1.0)
      throw ValidationError("edge weight must lie in [0,1], got " + io::format_double(weight));
    const bool cs = is_concept(src);
    const bool cd = is_concept(dst);
    switch (type) {
      case EdgeType::ConceptConcept:
        if (!cs || !cd) throw ValidationError("ConceptConcept edge must join two concepts");
        break;
      case EdgeType::ConceptResource:
        if (cs == cd) throw ValidationError("ConceptResource edge must join a concept and a resource");
        if (!cs) std::swap(src, dst);
        break;
      case EdgeType::ResourceResource:
        if (cs || cd) throw ValidationError("ResourceResource edge must join two resources");
        break;
    }
    edges_[static_cast<std::size_t>(type)].push_back({src, dst, weight});
  }

  const std::vector<Edge>& edges(EdgeType type) const { return edges_[static_cast<std::size_t>(type)]; }
  std::size_t edge_count(EdgeType type) const { return edges(type).size(); }
  std::size_t edge_count() const {
    return edges_[0].size() + edges_[1].size() + edges_[2].size();
  }

  /// Copy of the graph with one edge list removed.
  HeteroGraph without(EdgeType type) const {
    HeteroGraph g = *this;
    g.edges_[static_cast<std::size_t>(type)].clear();
    return g;
  }

  friend bool operator==(const HeteroGraph&, const HeteroGraph&) = default;

 private:
  int num_concepts_ = 0;
  int num_resources_ = 0;
  std::array<std::vector<Edge>, 3> edges_;
};

// ---------------------------------------------------------------------------
// Similarity edges

inline bool edge_type_eligible(EdgeType type, bool src_concept, bool dst_concept) {
  switch (type) {
    case EdgeType::ConceptConcept: return false;  // never derived from similarity
    case EdgeType::ConceptResource: return src_concept != dst_concept;
    case EdgeType::ResourceResource: return !src_concept && !dst_concept;
  }
  return false;
}

/// Emits cosine-weighted edges for every eligible unordered node pair whose
/// similarity strictly exceeds the threshold. Rows are the enriched
/// features of all C + Nr nodes.
inline HeteroGraph build_similarity_edges(const SparseFeatureMatrix& enriched, int num_concepts,
                                          const std::set<EdgeType>& types, double threshold) {
  if (!(threshold >= 0.0) || threshold >= 1.0)
    throw ValidationError("similarity threshold must lie in [0,1), got " + io::format_double(threshold));
  const auto n = static_cast<int>(enriched.rows());
  if (num_concepts < 0 || num_concepts > n) throw ValidationError("build_similarity_edges: bad concept count");
  HeteroGraph g(num_concepts, n - num_concepts);

  SparseRowMatrix x = enriched.values;
  std::vector<double> norm(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) norm[static_cast<std::size_t>(i)] = x.row(i).norm();
  const Eigen::SparseMatrix<double, Eigen::RowMajor> gram = (x * x.transpose()).pruned();

  // Collect per type so output order is grouped by type, then (src, dst).
  for (auto type : kAllEdgeTypes) {
    if (!types.count(type) || type == EdgeType::ConceptConcept) continue;
    for (int i = 0; i < n; ++i) {
      for (SparseRowMatrix::InnerIterator it(gram, i); it; ++it) {
        const int j = static_cast<int>(it.col());
        if (j <= i) continue;
        if (!edge_type_eligible(type, i < num_concepts, j < num_concepts)) continue;
        const double denom = norm[static_cast<std::size_t>(i)] * norm[static_cast<std::size_t>(j)];
        if (denom == 0.0) continue;
        const double cos = std::clamp(it.value() / denom, 0.0, 1.0);
        if (cos > threshold) g.add_edge(type, i, j, cos);
      }
    }
  }
  return g;
}

inline HeteroGraph build_similarity_edges(const FeatureMatrix& enriched, int num_concepts,
                                          const std::set<EdgeType>& types, double threshold) {
  SparseFeatureMatrix s;
  s.values = enriched.values.sparseView();
  return build_similarity_edges(s, num_concepts, types, threshold);
}

// ---------------------------------------------------------------------------
// Labeled concept-concept edges

/// Adds weight-1 ConceptConcept edges for a seeded random subset of the
/// given positives, of size floor(fraction * |positives|).
inline HeteroGraph add_label_edges(const HeteroGraph& graph, const AnnotationSet& positives, double fraction,
                                   std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw ValidationError("label edge fraction must lie in [0,1], got " + io::format_double(fraction));
  positives.validate(graph.num_concepts());
  std::vector<ConceptPair> pool(positives.positives.begin(), positives.positives.end());
  Rng rng(derive_seed(seed, stream::kLabelEdges));
  std::shuffle(pool.begin(), pool.end(), rng);
  const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pool.size()) + 1e-9));
  pool.resize(std::min(take, pool.size()));
  std::sort(pool.begin(), pool.end());
  HeteroGraph out = graph;
  for (const auto& [p, q] : pool) out.add_edge(EdgeType::ConceptConcept, p, q, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Normalized adjacency

struct NormalizeOptions {
  /// When false the raw symmetrized weights are used as-is (no self-loops,
  /// no degree scaling), matching the literal layer rule.
  bool symmetric_normalize = true;
};

/// Symmetric dense adjacency of the listed edge types (directed labeled
/// edges are symmetrized; parallel entries keep the larger weight).
inline Matrix raw_adjacency(const HeteroGraph& graph, std::initializer_list<EdgeType> types) {
  const int n = graph.num_nodes();
  Matrix a = Matrix::Zero(n, n);
  for (auto t : types)
    for (const auto& e : graph.edges(t)) {
      a(e.src, e.dst) = std::max(a(e.src, e.dst), e.weight);
      a(e.dst, e.src) = std::max(a(e.dst, e.src), e.weight);
    }
  return a;
}

/// D^{-1/2} (A + I) D^{-1/2}, D the weighted degree matrix of A + I.
inline Matrix normalize_adjacency(Matrix a, const NormalizeOptions& opt = {}) {
  if (!opt.symmetric_normalize) return a;
  a.diagonal().array() += 1.0;
  const Eigen::VectorXd inv_sqrt = a.rowwise().sum().array().rsqrt();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

struct NormalizedAdjacency {
  std::array<Matrix, 3> by_type;

  const Matrix& operator[](EdgeType t) const { return by_type[static_cast<std::size_t>(t)]; }
};

inline NormalizedAdjacency normalize(const HeteroGraph& graph, const NormalizeOptions& opt = {}) {
  NormalizedAdjacency out;
  for (auto t : kAllEdgeTypes) out.by_type[static_cast<std::size_t>(t)] = normalize_adjacency(raw_adjacency(graph, {t}), opt);
  return out;
}

/// Single adjacency over the union of the given edge types (plain GCN).
inline Matrix normalize_merged(const HeteroGraph& graph, const std::vector<EdgeType>& types,
                               const NormalizeOptions& opt = {}) {
  const int n = graph.num_nodes();
  Matrix a = Matrix::Zero(n, n);
  for (auto t : types) a = a.cwiseMax(raw_adjacency(graph, {t}));
  return normalize_adjacency(std::move(a), opt);
}

// ---------------------------------------------------------------------------
// Edge-list file
//
//   # prereq-graph concepts=<C> resources=<Nr>
//   <cc|cr|rr>\t<src>\t<dst>\t<weight>

inline std::string serialize_graph(const HeteroGraph& g) {
  std::string out = "# prereq-graph concepts=" + std::to_string(g.num_concepts()) +
                    " resources=" + std::to_string(g.num_resources()) + "\n";
  for (auto t : kAllEdgeTypes)
    for (const auto& e : g.edges(t)) {
      out += edge_tag(t);
      out += '\t' + std::to_string(e.src) + '\t' + std::to_string(e.dst) + '\t' + io::format_double(e.weight) + '\n';
    }
  return out;
}

inline HeteroGraph parse_graph(const std::string& text, const std::string& source = "<graph>") {
  const auto lines = io::split(text, '\n');
  const auto head = lines.empty() ? std::string_view{} : io::trim(lines[0]);
  const std::string_view prefix = "# prereq-graph concepts=";
  if (head.substr(0, prefix.size()) != prefix) throw ParseError(source, 1, "missing graph header");
  const auto fields = io::split_ws(head.substr(2));
  long long c = -1, r = -1;
  if (fields.size() != 3 || fields[1].substr(0, 9) != "concepts=" || fields[2].substr(0, 10) != "resources=" ||
      !io::parse_long(fields[1].substr(9), c) || !io::parse_long(fields[2].substr(10), r))
    throw ParseError(source, 1, "malformed graph header");
  HeteroGraph g(static_cast<int>(c), static_cast<int>(r));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty()) continue;
    const auto f = io::split(line, '\t');
    long long s = 0, d = 0;
    double w = 0;
    const auto type = f.size() == 4 ? parse_edge_tag(f[0]) : std::nullopt;
    if (!type || !io::parse_long(f[1], s) || !io::parse_long(f[2], d) || !io::parse_double(f[3], w))
      throw ParseError(source, i + 1, "expected 'edge_type<TAB>src<TAB>dst<TAB>weight'");
    try {
      g.add_edge(*type, static_cast<int>(s), static_cast<int>(d), w);
    } catch (const ValidationError& e) {
      throw ParseError(source, i + 1, e.what());
    }
  }
  return g;
}

inline void save_graph(const std::filesystem::path& path, const HeteroGraph& g) {
  io::write_file(path, serialize_graph(g));
}

inline HeteroGraph load_graph(const std::filesystem::path& path) {
  return parse_graph(io::read_file(path), path.string());
}

}  // namespace prereq
