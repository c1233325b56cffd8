#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "coupled/data.hpp"
#include "coupled/gradcheck.hpp"
#include "coupled/model.hpp"
#include "coupled/run_config.hpp"
#include "coupled/training.hpp"

namespace coupled {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Dataset described by the config's data section (synthetic or TSV).
PairDataset build_dataset(const RunConfig& config);

/// Model config adjusted to a dataset: vocabulary size, class count and
/// head follow the data.
ModelConfig fit_model_config(ModelConfig model, const PairDataset& dataset);

/// Re-encodes every sample against `target` by token string.
PairDataset remap_vocabulary(const PairDataset& dataset, const Vocab& target);

struct GradcheckCase {
  std::string label;
  GradCheckReport report;
};

/// Finite-difference sweep over the configured model grid plus baselines.
std::vector<GradcheckCase> run_gradcheck(const GradcheckConfig& config, std::uint64_t seed);

/// Trains per `config` and writes checkpoint.bin, metrics.jsonl,
/// timing.jsonl and config.json under `out_dir`.
TrainResult run_training(const RunConfig& config, const std::filesystem::path& out_dir,
                         std::ostream& progress);

/// n x m slice of neuron k of the final aggregated grid, as CSV with the Y
/// tokens as column headers and the X tokens as row headers.
std::string activations_csv(const Model& model, const Vocab& vocab, const std::string& x,
                            const std::string& y, std::size_t neuron);

/// Counts for `model` plus the reference configurations.
void write_count_report(const ModelConfig& model, std::ostream& os);

/// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace coupled
