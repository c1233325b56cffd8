#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coupled/data.hpp"
#include "coupled/model.hpp"
#include "coupled/training.hpp"

namespace coupled {

struct SynthConfig {
  SynthTask task = SynthTask::cross_match;
  std::size_t size = 10000;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  SynthOptions options;
};

struct DataConfig {
  std::string train, dev, test;
  std::vector<std::string> labels = {"entailment", "contradiction", "neutral"};
  std::size_t negatives = 4;
  std::string embeddings;  // optional GloVe text file
  std::optional<SynthConfig> synth;
};

struct GradcheckConfig {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  std::vector<CellKind> cells = {CellKind::lc, CellKind::tc};
  std::vector<std::size_t> blocks = {1, 2};
  std::vector<HeadKind> heads = {HeadKind::ranking, HeadKind::classification};
  std::vector<std::size_t> hidden = {2, 5};
  std::size_t n = 3;
  std::size_t m = 4;
  std::size_t embed_dim = 2;
  bool baselines = true;
  double init_scale = 0.5;
  /// Perturbs every analytic gradient before comparison (harness self-test).
  bool corrupt = false;
};

struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model;
  OptimizerConfig optimizer;
  std::size_t epochs = 20;
  double init_scale = 0.1;
  /// Range of the random embedding rows; defaults to init_scale.
  std::optional<double> embed_init_scale;
  DataConfig data;
  GradcheckConfig gradcheck;
};

/// Fills unspecified fields with the defaults for the configured head:
/// classification lr 0.005, l2 1e-5, pool 1x1, 3 classes; ranking lr 0.05,
/// l2 5e-5, pool 2x1. Unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& config);

}  // namespace coupled
