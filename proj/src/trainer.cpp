// SPDX-License-Identifier: Apache-2.0
#include "mgpc/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "mgpc/error.hpp"
#include "mgpc/metrics.hpp"

namespace mgpc::train {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kDropoutStream = 0x44524f50ULL;
constexpr double kEmaDecay = 0.98;

std::string hex(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& s) {
  // strtod accepts both decimal and hexadecimal floating point.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw InvalidArgument("bad real value '" + s + "'");
  return v;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("expected 'key = value', got '" + line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  // Write-then-rename keeps the previous file intact if the process dies.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out << text;
    if (!out) throw IoError("write failed on '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

std::string format_row(const LogRow& r) {
  return std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + real(r.loss) + "," + real(r.lr) + "," +
         real(r.dropout_fraction) + "\n";
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = make_rng({seed, epoch, kShuffleStream});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace

std::map<std::string, std::string> TrainConfig::to_key_values() const {
  std::string b;
  for (std::size_t i = 0; i < betas.size(); ++i) b += (i ? "," : "") + real(betas[i]);
  return {{"epochs", std::to_string(epochs)},
          {"batch", std::to_string(batch)},
          {"lr", real(lr)},
          {"lr_min", real(lr_min)},
          {"weight_decay", real(weight_decay)},
          {"seed", std::to_string(seed)},
          {"alpha", real(alpha)},
          {"betas", b},
          {"max_steps", std::to_string(max_steps)},
          {"checkpoint_every", std::to_string(checkpoint_every)}};
}

TrainConfig TrainConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  const auto known = c.to_key_values();
  for (const auto& [k, v] : kv) {
    if (!known.contains(k)) throw InvalidArgument("train config: unknown key '" + k + "'");
  }
  auto get = [&](const char* k) -> const std::string* {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("epochs")) c.epochs = std::stoull(*v);
  if (auto* v = get("batch")) c.batch = std::stoull(*v);
  if (auto* v = get("lr")) c.lr = parse_real(*v);
  if (auto* v = get("lr_min")) c.lr_min = parse_real(*v);
  if (auto* v = get("weight_decay")) c.weight_decay = parse_real(*v);
  if (auto* v = get("seed")) c.seed = std::stoull(*v);
  if (auto* v = get("alpha")) c.alpha = parse_real(*v);
  if (auto* v = get("betas")) {
    std::stringstream ss(*v);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) c.betas.push_back(parse_real(item));
    }
  }
  if (auto* v = get("max_steps")) c.max_steps = std::stoull(*v);
  if (auto* v = get("checkpoint_every")) c.checkpoint_every = std::stoull(*v);
  return c;
}

double cosine_lr(const TrainConfig& c, std::size_t step, std::size_t total) {
  if (total <= 1) return c.lr;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
  return c.lr_min + 0.5 * (c.lr - c.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

std::string TrainState::to_text() const {
  return "epoch = " + std::to_string(epoch) + "\nnext_batch = " + std::to_string(next_batch) +
         "\nstep = " + std::to_string(step) + "\nloss_ema = " + hex(loss_ema) + "\nbest_val_cd = " +
         hex(best_val_cd) + "\nseed = " + std::to_string(seed) + "\n";
}

TrainState TrainState::parse_text(const std::string& text) {
  const auto kv = parse_key_values(text);
  auto need = [&](const char* k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw InvalidArgument(std::string("train state: missing key '") + k + "'");
    return it->second;
  };
  TrainState s;
  s.epoch = std::stoull(need("epoch"));
  s.next_batch = std::stoull(need("next_batch"));
  s.step = std::stoull(need("step"));
  s.loss_ema = parse_real(need("loss_ema"));
  s.best_val_cd = parse_real(need("best_val_cd"));
  s.seed = std::stoull(need("seed"));
  return s;
}

std::vector<PreparedSample> prepare(const std::vector<Sample>& samples, const model::ModelConfig& config) {
  const auto counts = config.output_counts();
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    if (s.complete.size() != counts.back()) {
      throw InvalidArgument("sample complete cloud has " + std::to_string(s.complete.size()) +
                            " points, model produces " + std::to_string(counts.back()));
    }
    out.push_back({&s, multiscale_gt(s.complete, counts)});
  }
  return out;
}

PointCloud predict(const model::ModelConfig& config, ad::ParamStore& params, const Sample& sample,
                   model::Availability availability) {
  ad::Tape tape;
  Rng unused(0);
  const auto result = model::forward(tape, params, config, sample, model::Mode::infer, availability, unused);
  return model::tensor_cloud(result.scales.back());
}

double mean_cd_l2(const model::ModelConfig& config, ad::ParamStore& params, const std::vector<Sample>& samples,
                  model::Availability availability) {
  if (samples.empty()) throw InvalidArgument("mean_cd_l2: no samples");
  double sum = 0.0;
  for (const Sample& s : samples) sum += metrics::chamfer_l2(predict(config, params, s, availability), s.complete);
  return sum / static_cast<double>(samples.size());
}

TrainResult train(const model::ModelConfig& mc, const TrainConfig& tc, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, ad::ParamStore params, TrainState state,
                  const TrainHooks& hooks) {
  mc.validate();
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  if (tc.batch == 0) throw InvalidArgument("train: batch size must be positive");
  if (!(tc.lr > 0.0) || !(tc.lr_min >= 0.0)) throw InvalidArgument("train: learning rates must be positive");
  const std::size_t n_scales = mc.output_counts().size();
  const LossConfig loss_cfg = tc.betas.empty() ? LossConfig::uniform(n_scales, tc.alpha) : LossConfig{tc.alpha, tc.betas};
  loss_cfg.validate(n_scales);

  const auto prepared = prepare(train_set, mc);
  const std::size_t per_epoch = batches_per_epoch(prepared.size(), tc.batch);
  std::size_t total = tc.epochs * per_epoch;
  if (tc.max_steps > 0) total = std::min(total, tc.max_steps);

  TrainResult result;
  ad::AdamWConfig opt;
  opt.weight_decay = tc.weight_decay;

  auto checkpoint = [&] {
    if (hooks.on_checkpoint) hooks.on_checkpoint(params, state);
  };

  while (state.epoch < tc.epochs && state.step < total) {
    const auto order = epoch_order(prepared.size(), tc.seed, state.epoch);
    while (state.next_batch < per_epoch && state.step < total) {
      const std::size_t begin = state.next_batch * tc.batch;
      const std::size_t end = std::min(begin + tc.batch, prepared.size());
      const double inv = 1.0 / static_cast<double>(end - begin);
      params.zero_grad();
      double batch_loss = 0.0;
      std::size_t dropped = 0;
      for (std::size_t slot = begin; slot < end; ++slot) {
        const PreparedSample& ps = prepared[order[slot]];
        Rng rng = make_rng({tc.seed, state.step, slot - begin, kDropoutStream});
        ad::Tape tape;
        const auto fwd = model::forward(tape, params, mc, *ps.sample, model::Mode::train,
                                        model::Availability::all(), rng);
        const ad::Tensor loss = total_loss(fwd.scales, ps.gts, loss_cfg);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss on sample " + std::to_string(order[slot]) + " at step " +
                             std::to_string(state.step));
        }
        ad::scale(loss, inv).backward();
        batch_loss += value * inv;
        dropped += fwd.dropout_applied ? 1 : 0;
      }
      opt.lr = cosine_lr(tc, state.step, total);
      ad::adamw_step(params, opt);

      const LogRow row{state.step, state.epoch, batch_loss, opt.lr,
                       static_cast<double>(dropped) / static_cast<double>(end - begin)};
      state.loss_ema = state.step == 0 ? batch_loss : kEmaDecay * state.loss_ema + (1.0 - kEmaDecay) * batch_loss;
      ++state.step;
      ++state.next_batch;
      result.log.push_back(row);
      if (hooks.on_step) hooks.on_step(row);
      const bool epoch_done = state.next_batch == per_epoch;
      if (!epoch_done && tc.checkpoint_every > 0 && state.step % tc.checkpoint_every == 0 && state.step < total) {
        checkpoint();
      }
    }
    if (state.next_batch < per_epoch) break;  // stopped by max_steps mid-epoch
    const std::size_t finished = state.epoch;
    ++state.epoch;
    state.next_batch = 0;
    if (!val_set.empty()) {
      const double val = mean_cd_l2(mc, params, val_set);
      result.val_cd_per_epoch.push_back(val);
      if (hooks.on_validation) hooks.on_validation(finished, val);
      if (val < state.best_val_cd) {
        state.best_val_cd = val;
        if (hooks.on_best) hooks.on_best(params, state);
      }
    }
    checkpoint();
  }
  if (state.next_batch != 0) checkpoint();
  result.params = std::move(params);
  result.state = state;
  return result;
}

std::vector<LogRow> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<LogRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f) std::getline(ss, x, ',');
    rows.push_back({std::stoull(f[0]), std::stoull(f[1]), parse_real(f[2]), parse_real(f[3]), parse_real(f[4])});
  }
  return rows;
}

TrainResult train_to_directory(const model::ModelConfig& model_config, const TrainConfig& config,
                               const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                               const std::string& dir, bool resume) {
  const RunPaths paths{dir};
  std::filesystem::create_directories(dir);
  model::ModelConfig mc = model_config;
  TrainConfig tc = config;
  ad::ParamStore params;
  TrainState state;
  static const char* kHeader = "step,epoch,loss,lr,dropout_fraction\n";
  static const char* kValHeader = "epoch,val_cd_l2\n";
  if (resume) {
    mc = model::ModelConfig::read(paths.model_config());
    tc = TrainConfig::from_key_values(parse_key_values(read_text(paths.train_config())));
    state = TrainState::parse_text(read_text(paths.state()));
    params = ad::read_checkpoint(paths.last());
    std::string kept = kHeader;
    for (const LogRow& r : read_log(paths.log())) {
      if (r.step < state.step) kept += format_row(r);
    }
    write_text(paths.log(), kept);
    std::string val_kept = kValHeader;
    if (std::filesystem::exists(paths.val_log())) {
      std::istringstream in(read_text(paths.val_log()));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (!line.empty() && std::stoull(line.substr(0, line.find(','))) < state.epoch) val_kept += line + "\n";
      }
    }
    write_text(paths.val_log(), val_kept);
  } else {
    mc.validate();
    params = model::init_params(mc);
    state.seed = tc.seed;
    mc.write(paths.model_config());
    std::string text;
    for (const auto& [k, v] : tc.to_key_values()) text += k + " = " + v + "\n";
    write_text(paths.train_config(), text);
    write_text(paths.log(), kHeader);
    write_text(paths.val_log(), kValHeader);
  }

  std::ofstream log(paths.log(), std::ios::app);
  std::ofstream val_log(paths.val_log(), std::ios::app);
  if (!log || !val_log) throw IoError("cannot append to logs in '" + dir + "'");
  TrainHooks hooks;
  hooks.on_step = [&](const LogRow& r) { log << format_row(r) << std::flush; };
  hooks.on_validation = [&](std::size_t epoch, double v) {
    val_log << epoch << "," << real(v) << "\n" << std::flush;
  };
  hooks.on_checkpoint = [&](const ad::ParamStore& p, const TrainState& s) {
    ad::write_checkpoint(paths.last() + ".tmp", p);
    std::filesystem::rename(paths.last() + ".tmp", paths.last());
    write_text(paths.state(), s.to_text());
  };
  hooks.on_best = [&](const ad::ParamStore& p, const TrainState&) {
    ad::write_checkpoint(paths.best() + ".tmp", p);
    std::filesystem::rename(paths.best() + ".tmp", paths.best());
  };
  return train(mc, tc, train_set, val_set, std::move(params), state, hooks);
}

}  // namespace mgpc::train
