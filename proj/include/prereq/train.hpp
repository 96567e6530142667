#pragma once

// Splitting, negative sampling, the full-batch training loop, and
// multi-seed orchestration.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "prereq/checkpoint.hpp"
#include "prereq/corpus.hpp"
#include "prereq/error.hpp"
#include "prereq/eval.hpp"
#include "prereq/graph.hpp"
#include "prereq/io.hpp"
#include "prereq/model.hpp"
#include "prereq/random.hpp"
#include "prereq/tensor.hpp"

namespace prereq {

enum class TrainMode { Unsupervised, SemiSupervised };

inline std::string to_string(TrainMode m) { return m == TrainMode::Unsupervised ? "unsupervised" : "semisupervised"; }

// ---------------------------------------------------------------------------
// Split

struct SplitSpec {
  std::vector<ConceptPair> train_pos;
  std::vector<ConceptPair> test_pos;
  std::vector<ConceptPair> test_neg;
  std::uint64_t seed = 0;
  double train_fraction = 0.9;
};

/// Seeded shuffle of the positives into floor(fraction * n) train pairs and
/// the rest as test pairs, plus an equal number of test negatives drawn
/// uniformly from ordered non-self concept pairs that are not positives.
inline SplitSpec split(const AnnotationSet& annotations, int num_concepts, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train fraction must lie in (0,1), got " + io::format_double(train_fraction));
  annotations.validate(num_concepts);
  SplitSpec s;
  s.seed = seed;
  s.train_fraction = train_fraction;
  std::vector<ConceptPair> pos(annotations.positives.begin(), annotations.positives.end());
  Rng rng(derive_seed(seed, stream::kSplit));
  std::shuffle(pos.begin(), pos.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(pos.size()) + 1e-9));
  s.train_pos.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test_pos.assign(pos.begin() + static_cast<std::ptrdiff_t>(n_train), pos.end());

  const auto c = static_cast<long long>(num_concepts);
  const long long available = c * (c - 1) - static_cast<long long>(annotations.size());
  if (available < static_cast<long long>(s.test_pos.size()))
    throw ValidationError("split: not enough non-positive concept pairs for a balanced test set");
  std::set<ConceptPair> chosen;
  std::uniform_int_distribution<int> pick(0, num_concepts - 1);
  while (s.test_neg.size() < s.test_pos.size()) {
    const int p = pick(rng);
    const int q = pick(rng);
    if (p == q || annotations.contains(p, q) || !chosen.insert({p, q}).second) continue;
    s.test_neg.emplace_back(p, q);
  }
  return s;
}

inline std::string serialize_split(const SplitSpec& s) {
  std::string out = "#seed\t" + std::to_string(s.seed) + "\n#train_fraction\t" + io::format_double(s.train_fraction) + "\n";
  auto dump = [&](const char* kind, const std::vector<ConceptPair>& v) {
    for (auto [p, q] : v) out += std::string(kind) + "\t" + std::to_string(p) + "\t" + std::to_string(q) + "\n";
  };
  dump("train_pos", s.train_pos);
  dump("test_pos", s.test_pos);
  dump("test_neg", s.test_neg);
  return out;
}

// ---------------------------------------------------------------------------
// Configuration and run record

struct TrainConfig {
  ModelConfig model;
  int epochs = 200;
  AdamOptions adam;
  double train_fraction = 0.9;
  /// Share of train positives inserted as labeled edges and used as targets
  /// (semi-supervised only).
  double supervision_fraction = 1.0;
  /// Per-epoch cap on similarity-edge reconstruction targets; 0 = no cap.
  std::size_t max_similarity_targets = 20000;
  /// Draw fresh negatives every epoch; otherwise they are drawn once.
  bool resample_negatives = true;
  NormalizeOptions normalize;
};

struct TrainRun {
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Unsupervised;
  std::vector<double> loss_curve;
  Model model;
  Matrix latent;  // posterior mean (or z) of every node after training
  int num_concepts = 0;

  Checkpoint checkpoint() const {
    Checkpoint ck = model_checkpoint(model);
    ck.meta["num_concepts"] = std::to_string(num_concepts);
    ck.meta["seed"] = std::to_string(seed);
    ck.meta["mode"] = to_string(mode);
    ck.matrices.emplace_back("latent", latent);
    return ck;
  }
};

inline std::string serialize_loss_curve(const std::vector<double>& curve) {
  std::string out;
  for (std::size_t e = 0; e < curve.size(); ++e) out += std::to_string(e) + "\t" + io::format_double(curve[e]) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Training problem

/// The structural inputs of an unsupervised run. It has no concept-concept
/// field, so nothing derived from annotations can reach the loop.
struct SimilarityView {
  int num_concepts = 0;
  int num_resources = 0;
  std::vector<Edge> concept_resource;
  std::vector<Edge> resource_resource;

  static SimilarityView of(const HeteroGraph& g) {
    if (g.edge_count(EdgeType::ConceptConcept) != 0)
      throw PreconditionError("unsupervised training requires a graph without concept-concept edges");
    return {g.num_concepts(), g.num_resources(), g.edges(EdgeType::ConceptResource),
            g.edges(EdgeType::ResourceResource)};
  }

  HeteroGraph graph() const {
    HeteroGraph g(num_concepts, num_resources);
    for (const auto& e : concept_resource) g.add_edge(EdgeType::ConceptResource, e.src, e.dst, e.weight);
    for (const auto& e : resource_resource) g.add_edge(EdgeType::ResourceResource, e.src, e.dst, e.weight);
    return g;
  }
};

namespace detail {

inline std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

struct Problem {
  int num_concepts = 0;
  int num_nodes = 0;
  std::vector<Tensor> adjacency;
  Tensor features;
  std::vector<ConceptPair> similarity_targets;  // both orientations
  std::vector<ConceptPair> concept_targets;
  std::unordered_set<std::uint64_t> positive_set;    // never sampled as negatives
  std::unordered_set<std::uint64_t> forbidden_concept_pairs;
};

inline std::vector<Tensor> adjacency_tensors(const HeteroGraph& g, const std::vector<EdgeType>& types,
                                             EncoderVariant variant, const NormalizeOptions& opt) {
  std::vector<Tensor> out;
  if (variant == EncoderVariant::Gcn) {
    out.push_back(Tensor::constant(normalize_merged(g, types, opt)));
  } else {
    for (auto t : types) out.push_back(Tensor::constant(normalize_adjacency(raw_adjacency(g, {t}), opt)));
  }
  return out;
}

inline void add_similarity_targets(Problem& p, const std::vector<Edge>& edges) {
  for (const auto& e : edges) {
    p.similarity_targets.emplace_back(e.src, e.dst);
    p.similarity_targets.emplace_back(e.dst, e.src);
    p.positive_set.insert(pair_key(e.src, e.dst));
    p.positive_set.insert(pair_key(e.dst, e.src));
  }
}

inline void check_features(const FeatureMatrix& f, int num_nodes) {
  if (f.rows() != num_nodes)
    throw DimensionError("features have " + std::to_string(f.rows()) + " rows for " + std::to_string(num_nodes) +
                         " nodes");
  if (!f.values.allFinite()) throw ValidationError("features contain non-finite values");
}

/// Corrupts either endpoint of each positive (chosen by a fair coin) with a
/// node of the same kind, rejecting known positives, self pairs and
/// forbidden concept pairs. A positive whose corruption keeps failing is
/// skipped.
inline std::vector<ConceptPair> sample_negatives(const Problem& p, std::span<const ConceptPair> positives, Rng& rng) {
  std::vector<ConceptPair> neg;
  neg.reserve(positives.size());
  const int c = p.num_concepts;
  const int r = p.num_nodes - c;
  std::uniform_int_distribution<int> pick_concept(0, std::max(c - 1, 0));
  std::uniform_int_distribution<int> pick_resource(c, std::max(p.num_nodes - 1, c));
  std::bernoulli_distribution coin(0.5);
  constexpr int kTries = 32;
  for (const auto& [src, dst] : positives) {
    const bool corrupt_src = coin(rng);
    const int keep = corrupt_src ? dst : src;
    const bool replace_concept = (corrupt_src ? src : dst) < c;
    if ((replace_concept && c < 2) || (!replace_concept && r < 1)) continue;
    for (int t = 0; t < kTries; ++t) {
      const int cand = replace_concept ? pick_concept(rng) : pick_resource(rng);
      if (cand == keep) continue;
      const int a = corrupt_src ? cand : keep;
      const int b = corrupt_src ? keep : cand;
      if (p.positive_set.count(pair_key(a, b))) continue;
      if (a < c && b < c && p.forbidden_concept_pairs.count(pair_key(a, b))) continue;
      neg.emplace_back(a, b);
      break;
    }
  }
  return neg;
}

inline std::string parameter_norms(const Model& m) {
  std::ostringstream ss;
  for (const auto& [name, t] : m.named_parameters()) ss << ' ' << name << '=' << t.value().norm();
  return ss.str();
}

inline TrainRun run_loop(Problem& problem, const TrainConfig& config, TrainMode mode, std::uint64_t seed) {
  TrainRun run;
  run.seed = seed;
  run.mode = mode;
  run.num_concepts = problem.num_concepts;
  ModelConfig mc = config.model;
  mc.encoder.num_relations = mc.encoder.variant == EncoderVariant::Gcn ? 1 : static_cast<int>(problem.adjacency.size());
  run.model = init_model(mc, static_cast<int>(problem.features.cols()), seed);
  Adam adam(run.model.parameters(), config.adam);

  if (problem.similarity_targets.empty() && problem.concept_targets.empty())
    throw ValidationError("training: graph has no reconstruction targets");

  Rng neg_rng(derive_seed(seed, stream::kNegatives));
  Rng target_rng(derive_seed(seed, stream::kTargets));
  const std::uint64_t noise_base = derive_seed(seed, stream::kNoise);
  std::vector<ConceptPair> sim_pool = problem.similarity_targets;
  std::vector<ConceptPair> sim_pos, sim_neg, concept_neg;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const std::size_t cap = config.max_similarity_targets;
    if (cap > 0 && sim_pool.size() > cap) {
      // partial Fisher-Yates: the first `cap` entries become a fresh sample
      for (std::size_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, sim_pool.size() - 1);
        std::swap(sim_pool[i], sim_pool[d(target_rng)]);
      }
      sim_pos.assign(sim_pool.begin(), sim_pool.begin() + static_cast<std::ptrdiff_t>(cap));
    } else {
      sim_pos = sim_pool;
    }
    if (epoch == 0 || config.resample_negatives) {
      sim_neg = sample_negatives(problem, sim_pos, neg_rng);
      concept_neg = sample_negatives(problem, problem.concept_targets, neg_rng);
    }
    std::vector<TargetBlock> blocks;
    if (!sim_pos.empty() && !sim_neg.empty()) blocks.push_back({sim_pos, sim_neg});
    if (!problem.concept_targets.empty() && !concept_neg.empty())
      blocks.push_back({problem.concept_targets, concept_neg});
    if (blocks.empty()) throw RuntimeFailure("training: could not sample any negative pair");

    EncodeOptions opt;
    opt.noise_seed = derive_seed(noise_base, static_cast<std::uint64_t>(epoch));
    const LatentState latent = encode(run.model, problem.adjacency, problem.features, opt);
    const LossTerms loss = total_loss(run.model, latent, blocks);
    const double value = loss.total.item();
    if (!std::isfinite(value))
      throw RuntimeFailure("training diverged at epoch " + std::to_string(epoch) +
                           "; parameter norms:" + parameter_norms(run.model));
    run.loss_curve.push_back(value);
    loss.total.backward();
    adam.step();
  }
  EncodeOptions eval_opt;
  eval_opt.sample = false;
  run.latent = encode(run.model, problem.adjacency, problem.features, eval_opt).z.value();
  return run;
}

}  // namespace detail

/// Unsupervised run: reconstruction targets are the similarity edges only.
inline TrainRun train_unsupervised(const SimilarityView& view, const FeatureMatrix& features,
                                   const TrainConfig& config, std::uint64_t seed) {
  detail::Problem p;
  p.num_concepts = view.num_concepts;
  p.num_nodes = view.num_concepts + view.num_resources;
  detail::check_features(features, p.num_nodes);
  const HeteroGraph g = view.graph();
  p.adjacency = detail::adjacency_tensors(g, {EdgeType::ConceptResource, EdgeType::ResourceResource},
                                          config.model.encoder.variant, config.normalize);
  p.features = Tensor::constant(features.values);
  detail::add_similarity_targets(p, view.concept_resource);
  detail::add_similarity_targets(p, view.resource_resource);
  return detail::run_loop(p, config, TrainMode::Unsupervised, seed);
}

/// Semi-supervised run: the graph's concept-concept edges are message
/// passing edges and positive targets, next to the similarity edges. Test
/// pairs of the split are never sampled as training negatives.
inline TrainRun train_semisupervised(const HeteroGraph& graph, const FeatureMatrix& features,
                                     const TrainConfig& config, const SplitSpec& split, std::uint64_t seed) {
  detail::Problem p;
  p.num_concepts = graph.num_concepts();
  p.num_nodes = graph.num_nodes();
  detail::check_features(features, p.num_nodes);
  p.adjacency = detail::adjacency_tensors(
      graph, {EdgeType::ConceptConcept, EdgeType::ConceptResource, EdgeType::ResourceResource},
      config.model.encoder.variant, config.normalize);
  p.features = Tensor::constant(features.values);
  detail::add_similarity_targets(p, graph.edges(EdgeType::ConceptResource));
  detail::add_similarity_targets(p, graph.edges(EdgeType::ResourceResource));
  std::set<ConceptPair> test;
  test.insert(split.test_pos.begin(), split.test_pos.end());
  test.insert(split.test_neg.begin(), split.test_neg.end());
  for (const auto& e : graph.edges(EdgeType::ConceptConcept)) {
    if (test.count({e.src, e.dst})) throw PreconditionError("semi-supervised graph contains a test pair as an edge");
    p.concept_targets.emplace_back(e.src, e.dst);
    p.positive_set.insert(detail::pair_key(e.src, e.dst));
  }
  for (auto [a, b] : split.train_pos) p.forbidden_concept_pairs.insert(detail::pair_key(a, b));
  for (auto [a, b] : test) p.forbidden_concept_pairs.insert(detail::pair_key(a, b));
  return detail::run_loop(p, config, TrainMode::SemiSupervised, seed);
}

inline TrainRun train(const HeteroGraph& graph, const FeatureMatrix& features, const TrainConfig& config,
                      const SplitSpec& split, TrainMode mode, std::uint64_t seed) {
  if (mode == TrainMode::Unsupervised) return train_unsupervised(SimilarityView::of(graph), features, config, seed);
  return train_semisupervised(graph, features, config, split, seed);
}

// ---------------------------------------------------------------------------
// Scoring with a trained run

/// Scores(p, q) for all concept pairs from a latent matrix and decoder.
inline Matrix concept_score_matrix(const Model& model, const Matrix& latent, int num_concepts) {
  const Tensor z = Tensor::constant(latent.topRows(num_concepts));
  return decode(model, z).value();
}

inline ScoredPairs score_pairs(const Model& model, const Matrix& latent, const SplitSpec& split) {
  ScoredPairs sp;
  sp.pairs = split.test_pos;
  sp.pairs.insert(sp.pairs.end(), split.test_neg.begin(), split.test_neg.end());
  sp.labels.assign(split.test_pos.size(), 1);
  sp.labels.resize(sp.pairs.size(), 0);
  const Tensor z = Tensor::constant(latent);
  const Matrix s = decode_pairs(model, z, sp.pairs).value();
  sp.scores.assign(s.data(), s.data() + s.size());
  return sp;
}

/// Degree statistics and per-concept prerequisite lists from a run
/// checkpoint holding the model and its latent matrix.
inline ConceptGraphAnalysis analyze_concept_graph(const Checkpoint& ck, const ConceptList& concepts,
                                                  double threshold) {
  const Model model = model_from_checkpoint(ck);
  const Matrix& latent = ck.matrix("latent");
  if (latent.rows() < concepts.size())
    throw ValidationError("checkpoint latent matrix covers fewer nodes than the concept list");
  return analyze_scores(concept_score_matrix(model, latent, concepts.size()), threshold);
}

// ---------------------------------------------------------------------------
// Multi-seed orchestration

/// Everything a seed needs: the similarity graph (no labeled edges), model
/// input features, the full annotation set, and the configuration.
struct Experiment {
  HeteroGraph graph;
  FeatureMatrix features;
  AnnotationSet annotations;
  TrainConfig config;
  TrainMode mode = TrainMode::Unsupervised;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  SplitSpec split;
  TrainRun run;
  ScoredPairs test;
  MetricSet metrics;
};

inline SeedResult run_seed(const Experiment& ex, std::uint64_t seed) {
  SeedResult r;
  r.seed = seed;
  r.split = split(ex.annotations, ex.graph.num_concepts(), ex.config.train_fraction, seed);
  if (ex.mode == TrainMode::Unsupervised) {
    r.run = train_unsupervised(SimilarityView::of(ex.graph), ex.features, ex.config, seed);
  } else {
    AnnotationSet train_set;
    train_set.positives.insert(r.split.train_pos.begin(), r.split.train_pos.end());
    const HeteroGraph g = add_label_edges(ex.graph, train_set, ex.config.supervision_fraction, seed);
    r.run = train_semisupervised(g, ex.features, ex.config, r.split, seed);
  }
  r.test = score_pairs(r.run.model, r.run.latent, r.split);
  r.metrics = evaluate(r.test);
  r.ok = true;
  return r;
}

/// Independent runs per seed, `jobs` at a time. A failing seed records its
/// error and does not stop the others.
inline std::vector<SeedResult> run_seeds(const Experiment& ex, std::span<const std::uint64_t> seeds, int jobs = 1) {
  if (seeds.empty()) throw ValidationError("run_seeds: no seeds");
  std::vector<SeedResult> results(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        results[i] = run_seed(ex, seeds[i]);
      } catch (const std::exception& e) {
        results[i] = SeedResult{};
        results[i].seed = seeds[i];
        results[i].error = e.what();
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::clamp(jobs, 1, static_cast<int>(seeds.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return results;
}

}  // namespace prereq
