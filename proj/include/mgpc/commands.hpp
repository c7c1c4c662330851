// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mgpc/metrics.hpp"
#include "mgpc/model/config.hpp"
#include "mgpc/sample.hpp"
#include "mgpc/train/trainer.hpp"

namespace mgpc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitIo = 2;

struct GenArgs {
  std::string out;
  std::string val_out;  // empty: validation meshes stay in `out`
  GenOptions options;
};

struct TrainArgs {
  std::string data;
  std::string val;
  std::string out;
  model::ModelConfig model;
  train::TrainConfig train;
  bool resume = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string config;  // empty: config.txt beside the checkpoint
  std::string data;
  std::string out;     // directory for metrics.csv and summary.csv
  std::string modalities = "all";
  bool mock_gt = false;
  std::size_t threads = 1;
};

enum class AblationMode { dropout, modality, decoder };
AblationMode parse_ablation_mode(std::string_view s);

struct AblateArgs {
  AblationMode mode = AblationMode::dropout;
  std::string data;
  std::string val;  // evaluation set; required
  std::string out;  // directory for ablation.csv and ablation.svg
  model::ModelConfig model;
  train::TrainConfig train;
  std::vector<double> grid{0.0, 0.25, 0.5, 0.75, 1.0};
};

struct GradcheckArgs {
  std::optional<std::string> corrupt;
  std::optional<std::string> corrupt_op;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  std::size_t max_elements = 0;
};

/// Each command prints its effective configuration and returns one of the
/// exit codes above. Errors propagate as exceptions; run_guarded maps them.
int cmd_gen(const GenArgs& args, std::ostream& out);
int cmd_train(const TrainArgs& args, std::ostream& out);
int cmd_eval(const EvalArgs& args, std::ostream& out);
int cmd_ablate(const AblateArgs& args, std::ostream& out);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out);

/// InvalidArgument and NumericError map to 1, IoError to 2.
int run_guarded(const std::function<int()>& fn, std::ostream& err);

/// Fills data-dependent model fields (n_s, image size) from a sample and
/// checks the decoder output count against the complete cloud.
model::ModelConfig fit_to_data(model::ModelConfig config, const Sample& sample);

struct AblationRow {
  std::string variant;
  model::ModelConfig config;
  metrics::Aggregate result;
};
std::vector<AblationRow> run_ablation(const AblateArgs& args, const std::vector<Sample>& train_set,
                                      const std::vector<Sample>& eval_set, std::ostream& out);
void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows);

/// Deterministic toy sample sized for `config` (used by gradient checks).
Sample toy_sample(const model::ModelConfig& config, std::uint64_t seed);

}  // namespace mgpc::cli
