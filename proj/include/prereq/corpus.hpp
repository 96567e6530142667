#pragma once

// Corpus ingestion and node featurization.
//
// Node layout everywhere in the library: concept nodes first (ids 0..C-1),
// then resource nodes (ids C..C+Nr-1).

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prereq/error.hpp"
#include "prereq/io.hpp"
#include "prereq/tensor.hpp"

namespace prereq {

// ---------------------------------------------------------------------------
// Tokenization

/// Lowercases ASCII and splits on anything that is not alphanumeric.
/// Bytes >= 0x80 are kept inside tokens so UTF-8 words survive intact.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// Lowercase plus whitespace collapse; the identity used for uniqueness.
inline std::string normalize_concept(std::string_view raw) {
  std::string out;
  bool pending_space = false;
  for (unsigned char c : io::trim(raw)) {
    if (std::isspace(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Domain types

class ConceptList {
 public:
  ConceptList() = default;

  explicit ConceptList(std::vector<std::string> raw) {
    for (auto& r : raw) {
      auto name = normalize_concept(r);
      if (name.empty()) throw ValidationError("concept list: empty concept string");
      auto toks = tokenize(name);
      if (toks.empty()) throw ValidationError("concept list: '" + name + "' has no alphanumeric tokens");
      if (!index_.emplace(name, static_cast<int>(names_.size())).second)
        throw ValidationError("concept list: duplicate concept '" + name + "'");
      names_.push_back(std::move(name));
      tokens_.push_back(std::move(toks));
    }
  }

  int size() const noexcept { return static_cast<int>(names_.size()); }
  bool empty() const noexcept { return names_.empty(); }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<std::string>& tokens(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  std::optional<int> find(std::string_view concept_name) const {
    auto it = index_.find(normalize_concept(concept_name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<std::string>> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct ResourceDoc {
  int resource_id = 0;
  std::string source_path;
  std::vector<std::string> tokens;
};

/// Ordered concept pair: `first` is a prerequisite of `second`.
using ConceptPair = std::pair<int, int>;

struct AnnotationSet {
  std::set<ConceptPair> positives;

  std::size_t size() const noexcept { return positives.size(); }
  bool contains(int p, int q) const { return positives.count({p, q}) > 0; }

  /// Validates ids against a concept count and rejects self pairs.
  void validate(int num_concepts) const {
    std::vector<std::string> bad;
    for (const auto& [p, q] : positives) {
      if (p == q) bad.push_back("self pair (" + std::to_string(p) + "," + std::to_string(q) + ")");
      else if (p < 0 || q < 0 || p >= num_concepts || q >= num_concepts)
        bad.push_back("(" + std::to_string(p) + "," + std::to_string(q) + ")");
    }
    if (!bad.empty()) throw ValidationError("annotation set: invalid pairs " + join(bad, ", "));
  }
};

struct FeatureMatrix {
  Matrix values;
  std::vector<std::string> vocabulary;  // optional; aligned to columns when present

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }
};

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Same role as FeatureMatrix for very wide vocabularies (enriched TFIDF).
struct SparseFeatureMatrix {
  SparseRowMatrix values;
  std::vector<std::string> vocabulary;

  Eigen::Index rows() const noexcept { return values.rows(); }
  Eigen::Index cols() const noexcept { return values.cols(); }
  Matrix dense() const { return Matrix(values); }
};

struct Corpus {
  ConceptList concepts;
  AnnotationSet annotations;
  std::vector<ResourceDoc> resources;
};

// ---------------------------------------------------------------------------
// Loading

inline ConceptList load_concepts(const std::filesystem::path& path) {
  const auto lines = io::read_lines(path);
  std::vector<std::pair<long long, std::string>> entries;
  bool with_ids = false;
  bool first = true;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = io::split(line, '\t');
    if (fields.size() > 2) throw ParseError(path.string(), i + 1, "expected 'concept' or 'id<TAB>concept'");
    const bool has_id = fields.size() == 2;
    if (first) with_ids = has_id;
    first = false;
    if (has_id != with_ids) throw ParseError(path.string(), i + 1, "mixed id and plain concept lines");
    if (has_id) {
      long long id = 0;
      if (!io::parse_long(io::trim(fields[0]), id)) throw ParseError(path.string(), i + 1, "bad concept id");
      if (io::trim(fields[1]).empty()) throw ParseError(path.string(), i + 1, "empty concept");
      entries.emplace_back(id, std::string(io::trim(fields[1])));
    } else {
      entries.emplace_back(static_cast<long long>(entries.size()), std::string(line));
    }
  }
  if (with_ids) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < entries.size(); ++k)
      if (entries[k].first != static_cast<long long>(k))
        throw ValidationError(path.string() + ": concept ids must be contiguous 0..C-1");
  }
  std::vector<std::string> names;
  names.reserve(entries.size());
  for (auto& e : entries) names.push_back(std::move(e.second));
  if (names.empty()) throw ValidationError(path.string() + ": no concepts");
  try {
    return ConceptList(std::move(names));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline AnnotationSet load_annotations(const std::filesystem::path& path, const ConceptList& concepts) {
  const auto lines = io::read_lines(path);
  AnnotationSet set;
  std::vector<std::string> unknown;
  std::vector<std::string> self_pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty()) continue;
    const auto fields = io::split(line, '\t');
    if (fields.size() != 2 || io::trim(fields[0]).empty() || io::trim(fields[1]).empty())
      throw ParseError(path.string(), i + 1, "expected 'source_concept<TAB>target_concept'");
    const auto p = concepts.find(fields[0]);
    const auto q = concepts.find(fields[1]);
    if (!p) unknown.push_back(std::string(io::trim(fields[0])) + " (line " + std::to_string(i + 1) + ")");
    if (!q) unknown.push_back(std::string(io::trim(fields[1])) + " (line " + std::to_string(i + 1) + ")");
    if (!p || !q) continue;
    if (*p == *q) {
      self_pairs.push_back(concepts.name(*p) + " (line " + std::to_string(i + 1) + ")");
      continue;
    }
    set.positives.insert({*p, *q});
  }
  if (!unknown.empty())
    throw ValidationError(path.string() + ": unknown concepts in annotations: " + join(unknown, "; "));
  if (!self_pairs.empty())
    throw ValidationError(path.string() + ": self pairs in annotations: " + join(self_pairs, "; "));
  return set;
}

/// Every *.txt file in the directory, in filename order. Files with no
/// tokens are skipped.
inline std::vector<ResourceDoc> load_resources(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw ValidationError("resource directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<ResourceDoc> docs;
  for (const auto& f : files) {
    auto tokens = tokenize(io::read_file(f));
    if (tokens.empty()) continue;
    ResourceDoc doc;
    doc.resource_id = static_cast<int>(docs.size());
    doc.source_path = f.stem().string();
    doc.tokens = std::move(tokens);
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw ValidationError("no resources with text found in " + dir.string());
  return docs;
}

inline Corpus load_corpus(const std::filesystem::path& concept_file, const std::filesystem::path& annotation_file,
                          const std::filesystem::path& resource_dir) {
  Corpus c;
  c.concepts = load_concepts(concept_file);
  c.annotations = load_annotations(annotation_file, c.concepts);
  c.resources = load_resources(resource_dir);
  return c;
}

// ---------------------------------------------------------------------------
// Phrase matching

/// Greedy longest-match of concept token sequences over a token stream.
class PhraseMatcher {
 public:
  explicit PhraseMatcher(const ConceptList& concepts) {
    for (int id = 0; id < concepts.size(); ++id) {
      const auto& toks = concepts.tokens(id);
      by_key_[join(toks, " ")].push_back(id);
      max_len_ = std::max(max_len_, toks.size());
    }
  }

  /// Calls fn(concept_ids, length) for each match, scanning left to right
  /// and consuming the matched tokens.
  template <typename Fn>
  void scan(const std::vector<std::string>& tokens, Fn&& fn) const {
    std::size_t i = 0;
    std::string key;
    while (i < tokens.size()) {
      std::size_t matched = 0;
      const std::vector<int>* ids = nullptr;
      const auto longest = std::min(max_len_, tokens.size() - i);
      for (std::size_t len = longest; len >= 1; --len) {
        key.clear();
        for (std::size_t k = 0; k < len; ++k) {
          if (k) key += ' ';
          key += tokens[i + k];
        }
        auto it = by_key_.find(key);
        if (it != by_key_.end()) {
          matched = len;
          ids = &it->second;
          break;
        }
      }
      if (ids) {
        fn(*ids, matched);
        i += matched;
      } else {
        ++i;
      }
    }
  }

 private:
  std::unordered_map<std::string, std::vector<int>> by_key_;
  std::size_t max_len_ = 0;
};

// ---------------------------------------------------------------------------
// TFIDF

/// Smoothed inverse document frequency.
inline double smoothed_idf(std::size_t num_docs, std::size_t doc_freq) {
  return std::log((1.0 + static_cast<double>(num_docs)) / (1.0 + static_cast<double>(doc_freq))) + 1.0;
}

namespace detail {

using SparseCounts = std::map<int, double>;  // column -> count

inline void normalize_or_fallback(std::vector<SparseCounts>& rows, std::vector<bool>& fallback) {
  fallback.assign(rows.size(), false);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double sq = 0.0;
    for (const auto& [c, v] : rows[r]) sq += v * v;
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (auto& [c, v] : rows[r]) v *= inv;
    } else {
      fallback[r] = true;
    }
  }
}

inline void apply_idf(std::vector<SparseCounts>& rows, const std::vector<double>& idf) {
  for (auto& row : rows)
    for (auto& [c, v] : row) v *= idf[static_cast<std::size_t>(c)];
}

inline std::vector<double> resource_idf(const std::vector<SparseCounts>& rows, std::size_t first_resource, int dim) {
  std::vector<std::size_t> df(static_cast<std::size_t>(dim), 0);
  for (std::size_t r = first_resource; r < rows.size(); ++r)
    for (const auto& [c, v] : rows[r])
      if (v > 0) ++df[static_cast<std::size_t>(c)];
  std::vector<double> idf(static_cast<std::size_t>(dim));
  const auto n_docs = rows.size() - first_resource;
  for (std::size_t c = 0; c < idf.size(); ++c) idf[c] = smoothed_idf(n_docs, df[c]);
  return idf;
}

}  // namespace detail

/// Node features over the concept vocabulary only: (C + Nr) x C.
inline FeatureMatrix tfidf_sparse_features(const std::vector<ResourceDoc>& resources, const ConceptList& concepts) {
  if (concepts.empty()) throw ValidationError("tfidf_sparse_features: empty concept list");
  const int C = concepts.size();
  const PhraseMatcher matcher(concepts);
  std::vector<detail::SparseCounts> rows(static_cast<std::size_t>(C) + resources.size());
  auto count_into = [&](const std::vector<std::string>& toks, detail::SparseCounts& row) {
    matcher.scan(toks, [&](const std::vector<int>& ids, std::size_t) {
      for (int id : ids) row[id] += 1.0;
    });
  };
  for (int c = 0; c < C; ++c) count_into(concepts.tokens(c), rows[static_cast<std::size_t>(c)]);
  for (std::size_t r = 0; r < resources.size(); ++r) count_into(resources[r].tokens, rows[C + r]);

  detail::apply_idf(rows, detail::resource_idf(rows, static_cast<std::size_t>(C), C));
  std::vector<bool> fallback;
  detail::normalize_or_fallback(rows, fallback);

  FeatureMatrix fm;
  fm.values = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), C);
  const double uniform = 1.0 / std::sqrt(static_cast<double>(C));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto ri = static_cast<Eigen::Index>(r);
    if (fallback[r]) fm.values.row(ri).setConstant(uniform);
    for (const auto& [c, v] : rows[r]) fm.values(ri, c) = v;
  }
  fm.vocabulary = concepts.names();
  return fm;
}

/// Node features over the full corpus token vocabulary plus every concept
/// term. Columns: concept terms in concept order (a single-word concept's
/// column is that word's unigram column), then the remaining resource
/// unigrams in lexicographic order. Unigram counts include tokens that are
/// part of a matched phrase. Used for edge weights only.
inline SparseFeatureMatrix tfidf_enriched_features(const std::vector<ResourceDoc>& resources,
                                                   const ConceptList& concepts) {
  if (resources.empty()) throw ValidationError("tfidf_enriched_features: no resources");
  const int C = concepts.size();
  std::unordered_map<std::string, int> column;
  std::vector<std::string> vocab;
  auto intern = [&](const std::string& key) {
    auto [it, inserted] = column.emplace(key, static_cast<int>(vocab.size()));
    if (inserted) vocab.push_back(key);
    return it->second;
  };
  for (int c = 0; c < C; ++c) intern(join(concepts.tokens(c), " "));
  std::set<std::string> unigrams;
  for (const auto& doc : resources) unigrams.insert(doc.tokens.begin(), doc.tokens.end());
  for (const auto& u : unigrams) intern(u);
  const int dim = static_cast<int>(vocab.size());

  const PhraseMatcher matcher(concepts);
  std::vector<detail::SparseCounts> rows(static_cast<std::size_t>(C) + resources.size());
  auto count_into = [&](const std::vector<std::string>& toks, detail::SparseCounts& row) {
    for (const auto& t : toks) {
      auto it = column.find(t);
      if (it != column.end()) row[it->second] += 1.0;
    }
    matcher.scan(toks, [&](const std::vector<int>& ids, std::size_t len) {
      if (len < 2) return;
      row[column.at(join(concepts.tokens(ids.front()), " "))] += 1.0;
    });
  };
  for (int c = 0; c < C; ++c) count_into(concepts.tokens(c), rows[static_cast<std::size_t>(c)]);
  for (std::size_t r = 0; r < resources.size(); ++r) count_into(resources[r].tokens, rows[C + r]);

  detail::apply_idf(rows, detail::resource_idf(rows, static_cast<std::size_t>(C), dim));
  std::vector<bool> fallback;
  detail::normalize_or_fallback(rows, fallback);

  std::vector<Eigen::Triplet<double>> trips;
  const double uniform = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int ri = static_cast<int>(r);
    if (fallback[r]) {
      for (int c = 0; c < dim; ++c) trips.emplace_back(ri, c, uniform);
    } else {
      for (const auto& [c, v] : rows[r]) trips.emplace_back(ri, c, v);
    }
  }
  SparseFeatureMatrix fm;
  fm.values.resize(static_cast<Eigen::Index>(rows.size()), dim);
  fm.values.setFromTriplets(trips.begin(), trips.end());
  fm.vocabulary = std::move(vocab);
  return fm;
}

// ---------------------------------------------------------------------------
// Dense embeddings

/// Token/phrase vectors ingested from a text file. Phrases use underscores.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dim) : dim_(dim) {}

  int dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return index_.size(); }

  void add(std::string key, const Eigen::RowVectorXd& v) {
    if (v.size() != dim_) throw DimensionError("embedding '" + key + "' has wrong dimension");
    if (index_.count(key)) return;  // first definition wins
    index_.emplace(std::move(key), static_cast<Eigen::Index>(rows_.size()));
    rows_.push_back(v);
  }

  const Eigen::RowVectorXd* find(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &rows_[static_cast<std::size_t>(it->second)];
  }

 private:
  int dim_ = 0;
  std::unordered_map<std::string, Eigen::Index> index_;
  std::vector<Eigen::RowVectorXd> rows_;
};

inline EmbeddingTable parse_embeddings(const std::string& text, const std::string& source) {
  const auto lines = io::split(text, '\n');
  EmbeddingTable table;
  int dim = -1;
  bool seen_first = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = io::split_ws(lines[i]);
    if (fields.empty()) continue;
    if (!seen_first) {
      seen_first = true;
      long long a = 0, b = 0;
      if (fields.size() == 2 && io::parse_long(fields[0], a) && io::parse_long(fields[1], b)) {
        if (b <= 0) throw ParseError(source, i + 1, "header dimension must be positive");
        dim = static_cast<int>(b);
        table = EmbeddingTable(dim);
        continue;
      }
    }
    if (fields.size() < 2) throw ParseError(source, i + 1, "expected token followed by vector values");
    const int d = static_cast<int>(fields.size()) - 1;
    if (dim < 0) {
      dim = d;
      table = EmbeddingTable(dim);
    }
    if (d != dim)
      throw ParseError(source, i + 1,
                       "inconsistent vector dimension " + std::to_string(d) + " (expected " + std::to_string(dim) + ")");
    Eigen::RowVectorXd v(dim);
    for (int k = 0; k < dim; ++k) {
      if (!io::parse_double(fields[static_cast<std::size_t>(k) + 1], v(k)) || !std::isfinite(v(k)))
        throw ParseError(source, i + 1, "bad vector component");
    }
    std::string key(fields[0]);
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(c < 0x80 ? std::tolower(c) : c); });
    table.add(std::move(key), v);
  }
  if (dim <= 0 || table.size() == 0) throw ValidationError(source + ": no embeddings");
  return table;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(io::read_file(path), path.string());
}

/// Element-wise averages of ingested vectors. Concept node: its tokens plus
/// its full-phrase vector when multi-word. Resource node: all its tokens
/// plus every matched multi-word concept phrase. Out-of-vocabulary items are
/// skipped; a node with none in vocabulary gets the mean of the other nodes.
inline FeatureMatrix dense_features(const EmbeddingTable& table, const std::vector<ResourceDoc>& resources,
                                    const ConceptList& concepts) {
  const int C = concepts.size();
  const auto n = static_cast<Eigen::Index>(C + resources.size());
  FeatureMatrix fm;
  fm.values = Matrix::Zero(n, table.dim());
  std::vector<bool> covered(static_cast<std::size_t>(n), false);
  const PhraseMatcher matcher(concepts);

  auto average_into = [&](Eigen::Index row, const std::vector<std::string>& tokens, bool include_self_phrase) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(table.dim());
    int count = 0;
    auto take = [&](const std::string& key) {
      if (const auto* v = table.find(key)) {
        acc += *v;
        ++count;
      }
    };
    for (const auto& t : tokens) take(t);
    if (include_self_phrase) {
      if (tokens.size() > 1) take(join(tokens, "_"));
    } else {
      matcher.scan(tokens, [&](const std::vector<int>& ids, std::size_t len) {
        if (len > 1) take(join(concepts.tokens(ids.front()), "_"));
      });
    }
    if (count > 0) {
      fm.values.row(row) = acc / static_cast<double>(count);
      covered[static_cast<std::size_t>(row)] = true;
    }
  };
  for (int c = 0; c < C; ++c) average_into(c, concepts.tokens(c), true);
  for (std::size_t r = 0; r < resources.size(); ++r)
    average_into(static_cast<Eigen::Index>(C + r), resources[r].tokens, false);

  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(table.dim());
  int n_cov = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (covered[static_cast<std::size_t>(i)]) {
      mean += fm.values.row(i);
      ++n_cov;
    }
  if (n_cov == 0) throw ValidationError("dense_features: embedding vocabulary shares no token with the corpus");
  mean /= static_cast<double>(n_cov);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!covered[static_cast<std::size_t>(i)]) fm.values.row(i) = mean;
  return fm;
}

inline FeatureMatrix dense_features(const std::filesystem::path& embedding_file,
                                    const std::vector<ResourceDoc>& resources, const ConceptList& concepts) {
  return dense_features(load_embeddings(embedding_file), resources, concepts);
}

// ---------------------------------------------------------------------------
// Feature matrix file: "rows cols" header then one row per line.

inline std::string serialize_features(const FeatureMatrix& fm) {
  std::string out = std::to_string(fm.rows()) + " " + std::to_string(fm.cols()) + "\n";
  for (Eigen::Index i = 0; i < fm.rows(); ++i) {
    for (Eigen::Index j = 0; j < fm.cols(); ++j) {
      if (j) out += ' ';
      out += io::format_double(fm.values(i, j));
    }
    out += '\n';
  }
  return out;
}

inline FeatureMatrix parse_features(const std::string& text, const std::string& source) {
  const auto lines = io::split(text, '\n');
  if (lines.empty()) throw ParseError(source, 1, "empty feature file");
  const auto head = io::split_ws(lines[0]);
  long long r = 0, c = 0;
  if (head.size() != 2 || !io::parse_long(head[0], r) || !io::parse_long(head[1], c) || r <= 0 || c <= 0)
    throw ParseError(source, 1, "expected 'rows cols' header");
  FeatureMatrix fm;
  fm.values.resize(r, c);
  for (long long i = 0; i < r; ++i) {
    const auto ln = static_cast<std::size_t>(i) + 1;
    if (ln >= lines.size()) throw ParseError(source, ln + 1, "truncated feature file");
    const auto vals = io::split_ws(lines[ln]);
    if (static_cast<long long>(vals.size()) != c) throw ParseError(source, ln + 1, "wrong column count");
    for (long long j = 0; j < c; ++j)
      if (!io::parse_double(vals[static_cast<std::size_t>(j)], fm.values(i, j)))
        throw ParseError(source, ln + 1, "bad number");
  }
  return fm;
}

}  // namespace prereq
