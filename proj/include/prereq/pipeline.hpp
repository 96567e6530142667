#pragma once

// The four pipeline commands as library calls. Layout under `output`:
//   build/graph.tsv, build/features.txt, build/manifest.txt
//   runs/seed_<k>/{config.txt, split.tsv, loss.tsv, checkpoint.txt, scores.tsv, metrics.tsv}
//   runs/metrics.tsv (from eval), runs/seed_<k>/analysis.tsv (from analyze)

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prereq/checkpoint.hpp"
#include "prereq/config.hpp"
#include "prereq/corpus.hpp"
#include "prereq/error.hpp"
#include "prereq/eval.hpp"
#include "prereq/graph.hpp"
#include "prereq/io.hpp"
#include "prereq/train.hpp"

namespace prereq {

namespace fs = std::filesystem;

struct BuildManifest {
  std::map<std::string, std::string> entries;

  const std::string& at(const std::string& key) const {
    auto it = entries.find(key);
    if (it == entries.end()) throw ValidationError("build manifest lacks '" + key + "'");
    return it->second;
  }
};

inline std::string serialize_manifest(const BuildManifest& m) {
  std::string out;
  for (const auto& [k, v] : m.entries) out += k + "\t" + v + "\n";
  return out;
}

inline BuildManifest parse_manifest(const std::string& text, const std::string& source) {
  BuildManifest m;
  const auto lines = io::split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty()) continue;
    const auto f = io::split(line, '\t');
    if (f.size() != 2) throw ParseError(source, i + 1, "expected 'key<TAB>value'");
    m.entries[std::string(f[0])] = std::string(f[1]);
  }
  return m;
}

namespace detail {

/// Hash over the concept list, the annotations, and every resource file
/// (name and content, in load order).
inline std::uint64_t input_hash(const RunConfig& cfg) {
  std::string blob = io::read_file(cfg.concepts);
  blob += '\0';
  blob += io::read_file(cfg.annotations);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(cfg.resources))
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    blob += '\0';
    blob += f.filename().string();
    blob += '\0';
    blob += io::read_file(f);
  }
  return io::fnv1a(blob);
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ValidationError(what + " not found: " + p.string());
}

}  // namespace detail

/// Ingests the corpus, builds the similarity graph and node features, and
/// writes them with a manifest of counts and content hashes.
inline BuildManifest cmd_build(const RunConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.concepts, cfg.annotations, cfg.resources);
  const int C = corpus.concepts.size();
  const HeteroGraph graph =
      build_similarity_edges(tfidf_enriched_features(corpus.resources, corpus.concepts), C,
                             {EdgeType::ConceptResource, EdgeType::ResourceResource}, cfg.edge_threshold);
  const FeatureMatrix features = cfg.features == FeatureKind::Dense
                                     ? dense_features(cfg.embeddings, corpus.resources, corpus.concepts)
                                     : tfidf_sparse_features(corpus.resources, corpus.concepts);

  const std::string graph_text = serialize_graph(graph);
  const std::string feature_text = serialize_features(features);
  const fs::path dir = cfg.build_dir();
  io::write_file(dir / "graph.tsv", graph_text);
  io::write_file(dir / "features.txt", feature_text);

  BuildManifest m;
  m.entries["concepts"] = std::to_string(C);
  m.entries["resources"] = std::to_string(corpus.resources.size());
  m.entries["annotations"] = std::to_string(corpus.annotations.size());
  m.entries["edges_cr"] = std::to_string(graph.edge_count(EdgeType::ConceptResource));
  m.entries["edges_rr"] = std::to_string(graph.edge_count(EdgeType::ResourceResource));
  m.entries["feature_kind"] = to_string(cfg.features);
  m.entries["feature_dim"] = std::to_string(features.cols());
  m.entries["threshold"] = io::format_double(cfg.edge_threshold);
  m.entries["input_hash"] = io::hex64(detail::input_hash(cfg));
  m.entries["graph_hash"] = io::hex64(io::fnv1a(graph_text));
  m.entries["features_hash"] = io::hex64(io::fnv1a(feature_text));
  io::write_file(dir / "manifest.txt", serialize_manifest(m));
  return m;
}

inline fs::path seed_dir(const RunConfig& cfg, std::uint64_t seed) {
  return cfg.runs_dir() / ("seed_" + std::to_string(seed));
}

inline std::string serialize_seed_metrics(std::uint64_t seed, const MetricSet& m) {
  std::string out;
  for (std::size_t k = 0; k < kMetricNames.size(); ++k)
    out += std::string(kMetricNames[k]) + "\t" + std::to_string(seed) + "\t" + io::format_double(metric_value(m, k)) + "\n";
  return out;
}

/// Trains every configured seed on the build artifacts and writes one run
/// directory per seed. Failed seeds leave an error.txt instead of results.
inline std::vector<SeedResult> cmd_train(const RunConfig& cfg, int jobs = 1) {
  cfg.validate();
  const fs::path dir = cfg.build_dir();
  for (const char* f : {"manifest.txt", "graph.tsv", "features.txt"})
    detail::require_file(dir / f, std::string("build artifact ") + f + " (run 'build' first)");
  const BuildManifest manifest = parse_manifest(io::read_file(dir / "manifest.txt"), (dir / "manifest.txt").string());
  if (manifest.at("input_hash") != io::hex64(detail::input_hash(cfg)))
    throw ValidationError("build artifacts are stale: inputs changed since 'build'");
  if (manifest.at("feature_kind") != to_string(cfg.features))
    throw ValidationError("build artifacts hold " + manifest.at("feature_kind") + " features but the config asks for " +
                          to_string(cfg.features));

  const ConceptList concepts = load_concepts(cfg.concepts);
  Experiment ex;
  ex.graph = load_graph(dir / "graph.tsv");
  ex.features = parse_features(io::read_file(dir / "features.txt"), (dir / "features.txt").string());
  ex.annotations = load_annotations(cfg.annotations, concepts);
  ex.config = cfg.train_config();
  ex.mode = cfg.mode;
  if (ex.graph.num_concepts() != concepts.size())
    throw ValidationError("graph concept count does not match the concept list");

  auto results = run_seeds(ex, cfg.seeds, jobs);
  const std::string snapshot = serialize_run_config(cfg);
  for (const auto& r : results) {
    const fs::path out = seed_dir(cfg, r.seed);
    fs::remove_all(out);
    io::write_file(out / "config.txt", snapshot);
    if (!r.ok) {
      io::write_file(out / "error.txt", r.error + "\n");
      continue;
    }
    io::write_file(out / "split.tsv", serialize_split(r.split));
    io::write_file(out / "loss.tsv", serialize_loss_curve(r.run.loss_curve));
    save_checkpoint(out / "checkpoint.txt", r.run.checkpoint());
    io::write_file(out / "scores.tsv", serialize_scored_pairs(r.test));
    io::write_file(out / "metrics.tsv", serialize_seed_metrics(r.seed, r.metrics));
  }
  return results;
}

/// A directory holding seed_* subdirectories expands to those runs.
inline std::vector<fs::path> expand_run_dirs(const std::vector<fs::path>& dirs) {
  std::vector<fs::path> out;
  for (const auto& d : dirs) {
    if (!fs::is_directory(d)) throw ValidationError("run directory not found: " + d.string());
    if (fs::exists(d / "config.txt")) {
      out.push_back(d);
      continue;
    }
    std::vector<fs::path> sub;
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_directory() && e.path().filename().string().rfind("seed_", 0) == 0) sub.push_back(e.path());
    if (sub.empty()) throw ValidationError("not a run directory: " + d.string());
    std::sort(sub.begin(), sub.end());
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

inline std::uint64_t run_seed_of(const fs::path& run) {
  const Checkpoint ck = load_checkpoint(run / "checkpoint.txt");
  long long s = 0;
  if (!io::parse_long(ck.meta_value("seed"), s) || s < 0)
    throw ValidationError(run.string() + ": checkpoint has no valid seed");
  return static_cast<std::uint64_t>(s);
}

/// Recomputes metrics from each run's scored test pairs, writes the report
/// (default: metrics.tsv next to the first run directory) and returns it.
inline EvalReport cmd_eval(const std::vector<fs::path>& run_dirs, std::optional<fs::path> out_path = std::nullopt) {
  const auto runs = expand_run_dirs(run_dirs);
  std::vector<std::pair<std::uint64_t, MetricSet>> per_seed;
  for (const auto& run : runs) {
    if (fs::exists(run / "error.txt"))
      throw RuntimeFailure(run.string() + ": run failed: " + std::string(io::trim(io::read_file(run / "error.txt"))));
    for (const char* f : {"scores.tsv", "checkpoint.txt"})
      detail::require_file(run / f, run.string() + ": incomplete run, " + f);
    const ScoredPairs sp = parse_scored_pairs(io::read_file(run / "scores.tsv"), (run / "scores.tsv").string());
    per_seed.emplace_back(run_seed_of(run), evaluate(sp));
  }
  const EvalReport report = make_report(std::move(per_seed));
  const fs::path dest = out_path ? *out_path : fs::absolute(runs.front()).parent_path() / "metrics.tsv";
  io::write_file(dest, serialize_report(report));
  return report;
}

/// Scores every ordered concept pair of a run, thresholds them, and writes
/// analysis.tsv into the run directory. Returns the analysis text.
inline std::string cmd_analyze(const fs::path& run, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("analyze: threshold must lie in (0,1)");
  detail::require_file(run / "config.txt", run.string() + ": incomplete run, config.txt");
  detail::require_file(run / "checkpoint.txt", run.string() + ": incomplete run, checkpoint.txt");
  const RunConfig cfg = parse_run_config(io::read_file(run / "config.txt"), (run / "config.txt").string(), run);
  const ConceptList concepts = load_concepts(cfg.concepts);
  const AnnotationSet gold = load_annotations(cfg.annotations, concepts);
  const ConceptGraphAnalysis a = analyze_concept_graph(load_checkpoint(run / "checkpoint.txt"), concepts, threshold);
  const std::vector<ConceptPair> gold_edges(gold.positives.begin(), gold.positives.end());
  const std::string text = serialize_analysis(a, concepts, average_degree(gold_edges, concepts.size()));
  io::write_file(run / "analysis.tsv", text);
  return text;
}

}  // namespace prereq
