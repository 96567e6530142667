#pragma once

// Similarity graph + model features built from a synthetic corpus, and the
// training-edge AUC used by the overfit checks.

#include "prereq/corpus.hpp"
#include "prereq/eval.hpp"
#include "prereq/graph.hpp"
#include "prereq/train.hpp"
#include "support/synthetic.hpp"

namespace prereq::testing {

struct Fixture {
  SyntheticCorpus source;
  HeteroGraph graph;  // similarity edges only
  FeatureMatrix features;
};

inline Fixture build_fixture(const SyntheticSpec& spec, double threshold = 0.0) {
  Fixture f;
  f.source = make_synthetic_corpus(spec);
  const auto& c = f.source.corpus;
  f.graph = build_similarity_edges(tfidf_enriched_features(c.resources, c.concepts), c.concepts.size(),
                                   {EdgeType::ConceptResource, EdgeType::ResourceResource}, threshold);
  f.features = tfidf_sparse_features(c.resources, c.concepts);
  return f;
}

inline Experiment make_experiment(const Fixture& f, TrainMode mode, const TrainConfig& config) {
  return {f.graph, f.features, f.source.corpus.annotations, config, mode};
}

/// Semi-supervised run with every gold pair as a labeled edge and target.
inline TrainRun overfit_run(const Fixture& f, const TrainConfig& config, std::uint64_t seed) {
  SplitSpec s;
  s.train_pos = f.source.planted;
  const HeteroGraph g = add_label_edges(f.graph, f.source.corpus.annotations, 1.0, seed);
  return train_semisupervised(g, f.features, config, s, seed);
}

/// AUC over all ordered concept pairs, gold pairs labeled 1.
inline double training_auc(const TrainRun& run, const AnnotationSet& gold) {
  const Matrix s = concept_score_matrix(run.model, run.latent, run.num_concepts);
  ScoredPairs sp;
  for (int p = 0; p < run.num_concepts; ++p)
    for (int q = 0; q < run.num_concepts; ++q) {
      if (p == q) continue;
      sp.scores.push_back(s(p, q));
      sp.labels.push_back(gold.contains(p, q) ? 1 : 0);
    }
  return auc(sp);
}

}  // namespace prereq::testing
