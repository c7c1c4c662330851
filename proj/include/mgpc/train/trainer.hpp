// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mgpc/ad/param_store.hpp"
#include "mgpc/model/config.hpp"
#include "mgpc/model/model.hpp"
#include "mgpc/sample.hpp"
#include "mgpc/train/loss.hpp"

namespace mgpc::train {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-4;
  double lr_min = 1e-5;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double alpha = 1.0;
  /// Empty means one unit weight per decoder scale.
  std::vector<double> betas;
  /// Stop after this many optimizer steps in total; 0 runs every epoch.
  std::size_t max_steps = 0;
  /// Extra checkpoint cadence inside an epoch; 0 checkpoints at epoch ends only.
  std::size_t checkpoint_every = 0;

  std::map<std::string, std::string> to_key_values() const;
  static TrainConfig from_key_values(const std::map<std::string, std::string>& kv);
};

/// Cosine decay from lr to lr_min over `total` steps.
double cosine_lr(const TrainConfig& config, std::size_t step, std::size_t total);

/// Everything besides parameters needed to continue a run bit-exactly.
/// Per-step randomness derives from (seed, epoch) for shuffling and from
/// (seed, step, slot) for dropout, so the position suffices as a ledger.
struct TrainState {
  std::size_t epoch = 0;       // epoch in progress
  std::size_t next_batch = 0;  // first batch of `epoch` not yet applied
  std::uint64_t step = 0;      // optimizer steps taken
  double loss_ema = 0.0;
  double best_val_cd = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;

  /// Flat key = value text; reals use hexadecimal floating point.
  std::string to_text() const;
  static TrainState parse_text(const std::string& text);
  friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct LogRow {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double dropout_fraction = 0.0;
};

struct TrainResult {
  ad::ParamStore params;
  TrainState state;
  std::vector<LogRow> log;                // rows produced by this call
  std::vector<double> val_cd_per_epoch;   // empty without a validation set
};

struct TrainHooks {
  /// After every optimizer step.
  std::function<void(const LogRow&)> on_step;
  /// When a checkpoint is due: every epoch end, every `checkpoint_every`
  /// steps and when training stops.
  std::function<void(const ad::ParamStore&, const TrainState&)> on_checkpoint;
  /// After an epoch's validation pass improved the best CD-l2.
  std::function<void(const ad::ParamStore&, const TrainState&)> on_best;
  /// After each epoch's validation pass.
  std::function<void(std::size_t epoch, double val_cd)> on_validation;
};

/// Training data with ground truth prepared for every decoder scale.
struct PreparedSample {
  const Sample* sample = nullptr;
  std::vector<PointCloud> gts;
};
std::vector<PreparedSample> prepare(const std::vector<Sample>& samples, const model::ModelConfig& config);

/// In-memory training. Starts from `params`/`state` (fresh run: init_params
/// and a default state with seed set). Throws NumericError naming the sample
/// when a loss is not finite.
TrainResult train(const model::ModelConfig& model_config, const TrainConfig& config,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, ad::ParamStore params,
                  TrainState state, const TrainHooks& hooks = {});

/// One infer-mode forward per sample; returns the finest scale.
PointCloud predict(const model::ModelConfig& config, ad::ParamStore& params, const Sample& sample,
                   model::Availability availability = model::Availability::all());

/// Mean final-scale CD-l2 over `samples`.
double mean_cd_l2(const model::ModelConfig& config, ad::ParamStore& params, const std::vector<Sample>& samples,
                  model::Availability availability = model::Availability::all());

/// Directory layout: config.txt (model), train_config.txt, train_state.txt,
/// last.ckpt, best.ckpt, train_log.csv, val_log.csv.
struct RunPaths {
  std::string dir;
  std::string model_config() const { return dir + "/config.txt"; }
  std::string train_config() const { return dir + "/train_config.txt"; }
  std::string state() const { return dir + "/train_state.txt"; }
  std::string last() const { return dir + "/last.ckpt"; }
  std::string best() const { return dir + "/best.ckpt"; }
  std::string log() const { return dir + "/train_log.csv"; }
  std::string val_log() const { return dir + "/val_log.csv"; }
  std::string plot() const { return dir + "/loss.svg"; }
};

/// Trains with on-disk checkpoints. With `resume`, the directory's configs,
/// state and last checkpoint are loaded and the log is truncated to the
/// checkpointed step before continuing.
TrainResult train_to_directory(const model::ModelConfig& model_config, const TrainConfig& config,
                               const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                               const std::string& dir, bool resume = false);

std::vector<LogRow> read_log(const std::string& path);

}  // namespace mgpc::train
