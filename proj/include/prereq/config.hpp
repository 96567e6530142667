#pragma once

// Run configuration: a "key = value" text file plus "key=value" overrides.
// Relative paths resolve against the directory of the config file.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prereq/error.hpp"
#include "prereq/io.hpp"
#include "prereq/model.hpp"
#include "prereq/train.hpp"

namespace prereq {

enum class FeatureKind { Tfidf, Dense };

inline std::string to_string(FeatureKind k) { return k == FeatureKind::Tfidf ? "tfidf" : "dense"; }

struct RunConfig {
  std::filesystem::path concepts;
  std::filesystem::path annotations;
  std::filesystem::path resources;
  std::filesystem::path embeddings;  // empty = none
  std::filesystem::path output = "out";
  FeatureKind features = FeatureKind::Tfidf;
  TrainMode mode = TrainMode::Unsupervised;
  /// Unset means 0 for unsupervised runs and 1 for semi-supervised runs.
  std::optional<double> supervision_fraction;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double edge_threshold = 0.0;
  TrainConfig train;

  double effective_supervision() const {
    if (supervision_fraction) return *supervision_fraction;
    return mode == TrainMode::Unsupervised ? 0.0 : 1.0;
  }

  std::filesystem::path build_dir() const { return output / "build"; }
  std::filesystem::path runs_dir() const { return output / "runs"; }

  void validate() const {
    if (concepts.empty()) throw ConfigError("config: 'concepts' is required");
    if (annotations.empty()) throw ConfigError("config: 'annotations' is required");
    if (resources.empty()) throw ConfigError("config: 'resources' is required");
    if (features == FeatureKind::Dense && embeddings.empty())
      throw ConfigError("config: dense features require an 'embeddings' path");
    const double s = effective_supervision();
    if (mode == TrainMode::Unsupervised && s > 0.0)
      throw ConfigError("config: unsupervised mode forbids supervision_fraction > 0 (got " + io::format_double(s) + ")");
    if (!(s >= 0.0 && s <= 1.0)) throw ConfigError("config: supervision_fraction must lie in [0,1]");
    if (seeds.empty()) throw ConfigError("config: 'seeds' must list at least one seed");
    if (train.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (!(train.adam.lr > 0.0)) throw ConfigError("config: learning_rate must be > 0");
    if (!(edge_threshold >= 0.0 && edge_threshold < 1.0)) throw ConfigError("config: threshold must lie in [0,1)");
    if (!(train.train_fraction > 0.0 && train.train_fraction < 1.0))
      throw ConfigError("config: train_fraction must lie in (0,1)");
    train.model.encoder.validate();
  }

  /// Training options with the resolved supervision fraction.
  TrainConfig train_config() const {
    TrainConfig t = train;
    t.supervision_fraction = effective_supervision();
    return t;
  }
};

namespace detail {

inline bool parse_bool(std::string_view v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " expects true/false, got '" + std::string(v) + "'");
}

inline double parse_real(std::string_view v, const std::string& key) {
  double d = 0;
  if (!io::parse_double(v, d)) throw ConfigError("config: " + key + " expects a number, got '" + std::string(v) + "'");
  return d;
}

inline long long parse_integer(std::string_view v, const std::string& key) {
  long long n = 0;
  if (!io::parse_long(v, n)) throw ConfigError("config: " + key + " expects an integer, got '" + std::string(v) + "'");
  return n;
}

inline std::filesystem::path resolve(const std::filesystem::path& base, std::string_view v) {
  std::filesystem::path p{std::string(v)};
  if (p.empty() || p.is_absolute()) return p;
  return base / p;
}

}  // namespace detail

/// Applies one key/value pair. Paths are resolved against `base`.
inline void apply_setting(RunConfig& c, const std::string& key, std::string_view value,
                          const std::filesystem::path& base) {
  using namespace detail;
  auto& enc = c.train.model.encoder;
  if (key == "concepts") c.concepts = resolve(base, value);
  else if (key == "annotations") c.annotations = resolve(base, value);
  else if (key == "resources") c.resources = resolve(base, value);
  else if (key == "embeddings") c.embeddings = resolve(base, value);
  else if (key == "output") c.output = resolve(base, value);
  else if (key == "features") {
    if (value == "tfidf") c.features = FeatureKind::Tfidf;
    else if (value == "dense") c.features = FeatureKind::Dense;
    else throw ConfigError("config: features must be tfidf or dense");
  } else if (key == "encoder") {
    const auto v = parse_encoder_variant(value);
    if (!v) throw ConfigError("config: encoder must be rgcn or gcn");
    enc.variant = *v;
  } else if (key == "variational") enc.variational = parse_bool(value, key);
  else if (key == "decoder") {
    const auto d = parse_decoder_kind(value);
    if (!d) throw ConfigError("config: decoder must be bilinear, diagonal or inner");
    c.train.model.decoder = *d;
  } else if (key == "mode") {
    if (value == "unsupervised") c.mode = TrainMode::Unsupervised;
    else if (value == "semisupervised") c.mode = TrainMode::SemiSupervised;
    else throw ConfigError("config: mode must be unsupervised or semisupervised");
  } else if (key == "supervision_fraction") c.supervision_fraction = parse_real(value, key);
  else if (key == "seeds") {
    c.seeds.clear();
    for (auto part : io::split(value, ',')) {
      const auto t = io::trim(part);
      const auto n = parse_integer(t, key);
      if (n < 0) throw ConfigError("config: seeds must be non-negative");
      c.seeds.push_back(static_cast<std::uint64_t>(n));
    }
  } else if (key == "epochs") c.train.epochs = static_cast<int>(parse_integer(value, key));
  else if (key == "learning_rate") c.train.adam.lr = parse_real(value, key);
  else if (key == "hidden_dim") enc.hidden_dim = static_cast<int>(parse_integer(value, key));
  else if (key == "latent_dim") enc.latent_dim = static_cast<int>(parse_integer(value, key));
  else if (key == "threshold") c.edge_threshold = parse_real(value, key);
  else if (key == "normalize") c.train.normalize.symmetric_normalize = parse_bool(value, key);
  else if (key == "resample_negatives") c.train.resample_negatives = parse_bool(value, key);
  else if (key == "train_fraction") c.train.train_fraction = parse_real(value, key);
  else if (key == "max_similarity_targets") {
    const auto n = parse_integer(value, key);
    if (n < 0) throw ConfigError("config: max_similarity_targets must be >= 0");
    c.train.max_similarity_targets = static_cast<std::size_t>(n);
  } else throw ConfigError("config: unknown key '" + key + "'");
}

/// Parses "key = value" lines; '#' starts a comment line.
inline RunConfig parse_run_config(const std::string& text, const std::string& source,
                                  const std::filesystem::path& base) {
  RunConfig c;
  const auto lines = io::split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = io::trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, i + 1, "expected 'key = value'");
    const std::string key(io::trim(line.substr(0, eq)));
    try {
      apply_setting(c, key, io::trim(line.substr(eq + 1)), base);
    } catch (const ConfigError& e) {
      throw ParseError(source, i + 1, e.what());
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  const auto base = path.parent_path();
  RunConfig c = parse_run_config(io::read_file(path), path.string(), base);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    apply_setting(c, std::string(io::trim(std::string_view(o).substr(0, eq))),
                  io::trim(std::string_view(o).substr(eq + 1)), std::filesystem::current_path());
  }
  c.validate();
  return c;
}

/// Fully resolved snapshot; parsing it back yields the same configuration.
inline std::string serialize_run_config(const RunConfig& c) {
  const auto& enc = c.train.model.encoder;
  std::string seeds;
  for (std::size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  std::string out;
  auto kv = [&](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  kv("concepts", std::filesystem::absolute(c.concepts).string());
  kv("annotations", std::filesystem::absolute(c.annotations).string());
  kv("resources", std::filesystem::absolute(c.resources).string());
  if (!c.embeddings.empty()) kv("embeddings", std::filesystem::absolute(c.embeddings).string());
  kv("output", std::filesystem::absolute(c.output).string());
  kv("features", to_string(c.features));
  kv("encoder", to_string(enc.variant));
  kv("variational", enc.variational ? "true" : "false");
  kv("decoder", to_string(c.train.model.decoder));
  kv("mode", to_string(c.mode));
  kv("supervision_fraction", io::format_double(c.effective_supervision()));
  kv("seeds", seeds);
  kv("epochs", std::to_string(c.train.epochs));
  kv("learning_rate", io::format_double(c.train.adam.lr));
  kv("hidden_dim", std::to_string(enc.hidden_dim));
  kv("latent_dim", std::to_string(enc.latent_dim));
  kv("threshold", io::format_double(c.edge_threshold));
  kv("normalize", c.train.normalize.symmetric_normalize ? "true" : "false");
  kv("train_fraction", io::format_double(c.train.train_fraction));
  kv("max_similarity_targets", std::to_string(c.train.max_similarity_targets));
  kv("resample_negatives", c.train.resample_negatives ? "true" : "false");
  return out;
}

}  // namespace prereq
