#pragma once

// Encoders (GCN, R-GCN, variational heads), decoders (inner product and
// bilinear), and the reconstruction / KL loss terms.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prereq/checkpoint.hpp"
#include "prereq/corpus.hpp"
#include "prereq/error.hpp"
#include "prereq/random.hpp"
#include "prereq/tensor.hpp"

namespace prereq {

enum class EncoderVariant { Gcn, Rgcn };
enum class DecoderKind { InnerProduct, Bilinear, Diagonal };

inline std::string to_string(EncoderVariant v) { return v == EncoderVariant::Gcn ? "gcn" : "rgcn"; }
inline std::string to_string(DecoderKind d) {
  switch (d) {
    case DecoderKind::InnerProduct: return "inner";
    case DecoderKind::Bilinear: return "bilinear";
    case DecoderKind::Diagonal: return "diagonal";
  }
  return "?";
}
inline std::optional<EncoderVariant> parse_encoder_variant(std::string_view s) {
  if (s == "gcn") return EncoderVariant::Gcn;
  if (s == "rgcn") return EncoderVariant::Rgcn;
  return std::nullopt;
}
inline std::optional<DecoderKind> parse_decoder_kind(std::string_view s) {
  if (s == "inner") return DecoderKind::InnerProduct;
  if (s == "bilinear") return DecoderKind::Bilinear;
  if (s == "diagonal") return DecoderKind::Diagonal;
  return std::nullopt;
}

struct EncoderConfig {
  EncoderVariant variant = EncoderVariant::Rgcn;
  bool variational = true;
  int hidden_dim = 32;
  int latent_dim = 16;
  int num_relations = 2;

  void validate() const {
    if (hidden_dim < 1 || latent_dim < 1) throw ConfigError("encoder dims must be >= 1");
    if (num_relations < 1 || num_relations > 3) throw ConfigError("num_relations must lie in [1,3]");
    if (variant == EncoderVariant::Gcn && num_relations != 1)
      throw ConfigError("GCN encoder takes a single merged relation");
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  DecoderKind decoder = DecoderKind::Bilinear;
};

/// Weights of one graph layer: one matrix per relation, plus the shared
/// self-connection matrix (R-GCN only).
struct LayerWeights {
  std::vector<Tensor> relation;
  Tensor self;
};

struct LatentState {
  Tensor z;
  Tensor mu;         // variational only
  Tensor log_sigma;  // variational only
};

struct Model {
  ModelConfig config;
  int input_dim = 0;
  LayerWeights layer1;
  LayerWeights mu_head;         // second layer; the deterministic output head
  LayerWeights log_sigma_head;  // variational only
  Tensor decoder;               // latent x latent (bilinear) or 1 x latent (diagonal)

  std::vector<std::pair<std::string, Tensor>> named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto layer = [&](const std::string& prefix, const LayerWeights& w) {
      for (std::size_t r = 0; r < w.relation.size(); ++r) out.emplace_back(prefix + ".rel" + std::to_string(r), w.relation[r]);
      if (w.self.defined()) out.emplace_back(prefix + ".self", w.self);
    };
    layer("layer1", layer1);
    layer("mu", mu_head);
    if (config.encoder.variational) layer("log_sigma", log_sigma_head);
    if (decoder.defined()) out.emplace_back("decoder", decoder);
    return out;
  }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }
};

/// Glorot/Xavier uniform initialization.
inline Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = dist(rng);
  return m;
}

inline Model init_model(const ModelConfig& config, int input_dim, std::uint64_t seed) {
  config.encoder.validate();
  if (input_dim < 1) throw ConfigError("input feature dimension must be >= 1");
  Rng rng(derive_seed(seed, stream::kInit));
  Model m;
  m.config = config;
  m.input_dim = input_dim;
  const auto& enc = config.encoder;
  const bool rgcn = enc.variant == EncoderVariant::Rgcn;
  auto make_layer = [&](int in, int out) {
    LayerWeights w;
    for (int r = 0; r < enc.num_relations; ++r) w.relation.push_back(Tensor::parameter(glorot_uniform(in, out, rng)));
    if (rgcn) w.self = Tensor::parameter(glorot_uniform(in, out, rng));
    return w;
  };
  m.layer1 = make_layer(input_dim, enc.hidden_dim);
  m.mu_head = make_layer(enc.hidden_dim, enc.latent_dim);
  if (enc.variational) m.log_sigma_head = make_layer(enc.hidden_dim, enc.latent_dim);
  switch (config.decoder) {
    case DecoderKind::InnerProduct: break;
    case DecoderKind::Bilinear:
      m.decoder = Tensor::parameter(glorot_uniform(enc.latent_dim, enc.latent_dim, rng));
      break;
    case DecoderKind::Diagonal: {
      Matrix d = glorot_uniform(1, enc.latent_dim, rng);
      m.decoder = Tensor::parameter(std::move(d));
      break;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Layers

/// activate ? relu(adj h w) : adj h w
inline Tensor gcn_layer(const Tensor& adj, const Tensor& h, const Tensor& w, bool activate) {
  Tensor out = matmul(adj, matmul(h, w));
  return activate ? relu(out) : out;
}

/// (1/M) sum_rel (adj_rel h W_rel + h W_0), M = number of weight matrices
/// in the layer (relations + 1); relu when activate.
inline Tensor rgcn_layer(std::span<const Tensor> adjs, const Tensor& h, std::span<const Tensor> w_rel,
                         const Tensor& w_self, bool activate) {
  if (adjs.empty()) throw ConfigError("rgcn_layer: no relations");
  if (w_rel.size() != adjs.size())
    throw ConfigError("rgcn_layer: " + std::to_string(adjs.size()) + " relations but " +
                      std::to_string(w_rel.size()) + " relation weights");
  if (!w_self.defined()) throw ConfigError("rgcn_layer: missing self-connection weight");
  const Tensor self_term = matmul(h, w_self);
  Tensor acc;
  for (std::size_t r = 0; r < adjs.size(); ++r) {
    Tensor term = add(matmul(adjs[r], matmul(h, w_rel[r])), self_term);
    acc = acc.defined() ? add(acc, term) : term;
  }
  const double m = static_cast<double>(w_rel.size() + 1);
  Tensor out = scale(acc, 1.0 / m);
  return activate ? relu(out) : out;
}

inline Tensor apply_layer(const Model& model, std::span<const Tensor> adjs, const Tensor& h, const LayerWeights& w,
                          bool activate) {
  if (model.config.encoder.variant == EncoderVariant::Gcn) {
    if (adjs.size() != 1 || w.relation.size() != 1) throw ConfigError("GCN layer expects one adjacency");
    return gcn_layer(adjs[0], h, w.relation[0], activate);
  }
  return rgcn_layer(adjs, h, w.relation, w.self, activate);
}

struct EncodeOptions {
  /// Draw z from the posterior; otherwise z = mu.
  bool sample = true;
  std::uint64_t noise_seed = 0;
  /// Replaces the log-sigma head output by this constant (zero-noise checks).
  std::optional<double> force_log_sigma;
};

/// Two-layer encoder. Variational models share the first layer and run two
/// parallel second layers for mu and log sigma.
inline LatentState encode(const Model& model, std::span<const Tensor> adjs, const Tensor& features,
                          const EncodeOptions& opt = {}) {
  if (features.cols() != model.input_dim)
    throw DimensionError("encode: features " + shape_str(features.rows(), features.cols()) + " but model expects " +
                         std::to_string(model.input_dim) + " columns");
  for (const auto& a : adjs)
    if (a.rows() != features.rows() || a.cols() != features.rows())
      throw DimensionError("encode: adjacency " + shape_str(a.rows(), a.cols()) + " does not cover " +
                           std::to_string(features.rows()) + " nodes");
  const Tensor h1 = apply_layer(model, adjs, features, model.layer1, true);
  LatentState out;
  const Tensor mu = apply_layer(model, adjs, h1, model.mu_head, false);
  if (!model.config.encoder.variational) {
    out.z = mu;
    return out;
  }
  out.mu = mu;
  out.log_sigma = opt.force_log_sigma
                      ? Tensor::constant(Matrix::Constant(mu.rows(), mu.cols(), *opt.force_log_sigma))
                      : apply_layer(model, adjs, h1, model.log_sigma_head, false);
  out.z = opt.sample ? gaussian_sample(out.mu, out.log_sigma, opt.noise_seed) : out.mu;
  return out;
}

// ---------------------------------------------------------------------------
// Decoders

/// sigmoid(z z^T); symmetric.
inline Tensor decode_inner_product(const Tensor& z) { return sigmoid(matmul(z, transpose(z))); }

/// score(i, j) = sigmoid(z_i . (R z_j)). A 1 x d decoder tensor is read as
/// diag(R).
inline Tensor decode_bilinear(const Tensor& z, const Tensor& r) {
  const auto d = z.cols();
  if (r.rows() == 1 && r.cols() == d) {
    Tensor ones = Tensor::constant(Matrix::Ones(z.rows(), 1));
    return sigmoid(matmul(mul(z, matmul(ones, r)), transpose(z)));
  }
  if (r.rows() != d || r.cols() != d)
    throw DimensionError("decode_bilinear: R is " + shape_str(r.rows(), r.cols()) + " for latent dim " +
                         std::to_string(d));
  return sigmoid(matmul(matmul(z, r), transpose(z)));
}

inline Tensor decode(const Model& model, const Tensor& z) {
  return model.config.decoder == DecoderKind::InnerProduct ? decode_inner_product(z) : decode_bilinear(z, model.decoder);
}

/// Scores only the listed (src, dst) pairs, as a column vector; same values
/// as the corresponding entries of decode().
inline Tensor decode_pairs(const Model& model, const Tensor& z, std::span<const ConceptPair> pairs) {
  std::vector<int> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    src.push_back(i);
    dst.push_back(j);
  }
  const Tensor zs = gather_rows(z, src);
  Tensor zd = gather_rows(z, dst);
  switch (model.config.decoder) {
    case DecoderKind::InnerProduct: break;
    case DecoderKind::Bilinear: zd = matmul(zd, transpose(model.decoder)); break;
    case DecoderKind::Diagonal: {
      Tensor ones = Tensor::constant(Matrix::Ones(zd.rows(), 1));
      zd = mul(zd, matmul(ones, model.decoder));
      break;
    }
  }
  return sigmoid(row_sum(mul(zs, zd)));
}

// ---------------------------------------------------------------------------
// Losses

/// KL(N(mu, diag sigma^2) || N(0, I)) summed over nodes and latent dims,
/// divided by N^2 (the per-node mean, scaled by 1/N once more). With a
/// single 1/N the KL outweighs the mean-BCE reconstruction term and the
/// posterior collapses onto the prior.
inline Tensor kl_loss(const Tensor& mu, const Tensor& log_sigma) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols())
    throw DimensionError("kl_loss: " + shape_str(mu.rows(), mu.cols()) + " vs " +
                         shape_str(log_sigma.rows(), log_sigma.cols()));
  const Tensor var = exp(scale(log_sigma, 2.0));
  const Tensor inner = sub(add(var, mul(mu, mu)), add_scalar(scale(log_sigma, 2.0), 1.0));
  const auto n = static_cast<double>(mu.rows());
  return scale(sum(inner), 0.5 / (n * n));
}

inline constexpr double kProbClamp = 1e-7;

/// Mean BCE with label 1 on positive scores and 0 on negative scores.
inline Tensor bce_pos_neg(const Tensor& pos_scores, const Tensor& neg_scores) {
  if (pos_scores.rows() == 0 || neg_scores.rows() == 0)
    throw ValidationError("reconstruction_loss: positive and negative pair lists must be non-empty");
  const std::vector<Tensor> parts{pos_scores, neg_scores};
  Matrix labels(pos_scores.rows() + neg_scores.rows(), 1);
  labels.topRows(pos_scores.rows()).setOnes();
  labels.bottomRows(neg_scores.rows()).setZero();
  return binary_cross_entropy(concat_rows(parts), labels, kProbClamp);
}

/// Reconstruction loss read off a full score matrix.
inline Tensor reconstruction_loss(const Tensor& scores, std::span<const ConceptPair> pos,
                                  std::span<const ConceptPair> neg) {
  if (pos.empty() || neg.empty())
    throw ValidationError("reconstruction_loss: positive and negative pair lists must be non-empty");
  return bce_pos_neg(gather_entries(scores, pos), gather_entries(scores, neg));
}

/// Same loss, scoring only the listed pairs.
inline Tensor pair_reconstruction_loss(const Model& model, const Tensor& z, std::span<const ConceptPair> pos,
                                       std::span<const ConceptPair> neg) {
  if (pos.empty() || neg.empty())
    throw ValidationError("reconstruction_loss: positive and negative pair lists must be non-empty");
  return bce_pos_neg(decode_pairs(model, z, pos), decode_pairs(model, z, neg));
}

struct LossTerms {
  Tensor total;
  Tensor reconstruction;
  Tensor kl;  // undefined for deterministic encoders
};

/// One group of reconstruction targets; each group contributes its own mean BCE.
struct TargetBlock {
  std::span<const ConceptPair> pos;
  std::span<const ConceptPair> neg;
};

/// Sum of per-block reconstruction losses + KL (when variational).
inline LossTerms total_loss(const Model& model, const LatentState& latent, std::span<const TargetBlock> blocks) {
  if (blocks.empty()) throw ValidationError("total_loss: no target blocks");
  LossTerms out;
  for (const auto& b : blocks) {
    Tensor term = pair_reconstruction_loss(model, latent.z, b.pos, b.neg);
    out.reconstruction = out.reconstruction.defined() ? add(out.reconstruction, term) : term;
  }
  if (model.config.encoder.variational) {
    out.kl = kl_loss(latent.mu, latent.log_sigma);
    out.total = add(out.reconstruction, out.kl);
  } else {
    out.total = out.reconstruction;
  }
  return out;
}

inline LossTerms total_loss(const Model& model, const LatentState& latent, std::span<const ConceptPair> pos,
                            std::span<const ConceptPair> neg) {
  const TargetBlock block{pos, neg};
  return total_loss(model, latent, std::span<const TargetBlock>(&block, 1));
}

// ---------------------------------------------------------------------------
// Checkpoint conversion

inline Checkpoint model_checkpoint(const Model& model) {
  Checkpoint ck;
  const auto& enc = model.config.encoder;
  ck.meta["encoder"] = to_string(enc.variant);
  ck.meta["variational"] = enc.variational ? "true" : "false";
  ck.meta["hidden_dim"] = std::to_string(enc.hidden_dim);
  ck.meta["latent_dim"] = std::to_string(enc.latent_dim);
  ck.meta["num_relations"] = std::to_string(enc.num_relations);
  ck.meta["decoder"] = to_string(model.config.decoder);
  ck.meta["input_dim"] = std::to_string(model.input_dim);
  for (const auto& [name, t] : model.named_parameters()) ck.matrices.emplace_back(name, t.value());
  return ck;
}

inline Model model_from_checkpoint(const Checkpoint& ck) {
  auto as_int = [&](const std::string& key) {
    long long v = 0;
    if (!io::parse_long(ck.meta_value(key), v)) throw ValidationError("checkpoint: bad integer meta '" + key + "'");
    return static_cast<int>(v);
  };
  ModelConfig cfg;
  const auto variant = parse_encoder_variant(ck.meta_value("encoder"));
  const auto decoder = parse_decoder_kind(ck.meta_value("decoder"));
  if (!variant || !decoder) throw ValidationError("checkpoint: unknown encoder or decoder kind");
  cfg.encoder.variant = *variant;
  cfg.encoder.variational = ck.meta_value("variational") == "true";
  cfg.encoder.hidden_dim = as_int("hidden_dim");
  cfg.encoder.latent_dim = as_int("latent_dim");
  cfg.encoder.num_relations = as_int("num_relations");
  cfg.decoder = *decoder;
  Model m = init_model(cfg, as_int("input_dim"), 0);
  for (auto& [name, t] : m.named_parameters()) {
    const Matrix& stored = ck.matrix(name);
    if (stored.rows() != t.rows() || stored.cols() != t.cols())
      throw DimensionError("checkpoint: '" + name + "' has shape " + shape_str(stored.rows(), stored.cols()) +
                           ", expected " + shape_str(t.rows(), t.cols()));
    t.mutable_value() = stored;
  }
  return m;
}

}  // namespace prereq
