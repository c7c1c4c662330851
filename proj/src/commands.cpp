// SPDX-License-Identifier: Apache-2.0
#include "mgpc/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <thread>

#include "mgpc/ad/grad_check.hpp"
#include "mgpc/dataset.hpp"
#include "mgpc/error.hpp"
#include "mgpc/metrics.hpp"
#include "mgpc/plot.hpp"

namespace mgpc::cli {

namespace {

std::string real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_section(std::ostream& out, const std::string& title, const std::map<std::string, std::string>& kv) {
  out << "[" << title << "]\n";
  for (const auto& [k, v] : kv) out << "  " << k << " = " << v << "\n";
}

std::map<std::string, std::string> gen_key_values(const GenArgs& a) {
  const GenOptions& o = a.options;
  std::string families;
  for (std::size_t i = 0; i < o.families.size(); ++i) {
    families += (i ? "," : "") + std::string(category_label(o.families[i]));
  }
  return {{"out", a.out},
          {"val_out", a.val_out},
          {"meshes", std::to_string(o.meshes)},
          {"views", std::to_string(o.views)},
          {"seed", std::to_string(o.seed)},
          {"families", families},
          {"pole_view_only", o.pole_view_only ? "1" : "0"},
          {"threads", std::to_string(o.threads)},
          {"ns", std::to_string(o.config.n_s)},
          {"nc", std::to_string(o.config.n_c)},
          {"image", std::to_string(o.config.image_width) + "x" + std::to_string(o.config.image_height)},
          {"noise_sigma_rel", real(o.config.noise_sigma_rel)}};
}

std::vector<Sample> load(const std::string& path, const char* what) {
  auto samples = read_dataset(path);
  if (samples.empty()) throw InvalidArgument(std::string(what) + " dataset '" + path + "' holds no samples");
  return samples;
}

metrics::MetricsReport evaluate_set(const model::ModelConfig& mc, ad::ParamStore& params,
                                    const std::vector<Sample>& samples, model::Availability availability,
                                    bool mock_gt, std::size_t threads) {
  std::vector<metrics::MetricsRow> rows(samples.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < samples.size(); i += stride) {
      const Sample& s = samples[i];
      const PointCloud pred = mock_gt ? s.complete : train::predict(mc, params, s, availability);
      rows[i] = {i, s.category_id, metrics::evaluate_pair(pred, s.complete)};
    }
  };
  const std::size_t t = std::max<std::size_t>(1, std::min(threads, samples.size()));
  if (t == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < t; ++k) pool.emplace_back(work, k, t);
  }
  return metrics::build_report(std::move(rows));
}

void print_aggregate(std::ostream& out, const std::string& scope, const metrics::Aggregate& a) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-14s n=%-5zu CD-l1x1000=%.4f  CD-l2x1000=%.4f  F@1%%=%.4f\n", scope.c_str(),
                a.count, a.mean.cd_l1 * metrics::kReportCdScale, a.mean.cd_l2 * metrics::kReportCdScale,
                a.mean.f_score);
  out << buf;
}

}  // namespace

AblationMode parse_ablation_mode(std::string_view s) {
  if (s == "dropout") return AblationMode::dropout;
  if (s == "modality") return AblationMode::modality;
  if (s == "decoder") return AblationMode::decoder;
  throw InvalidArgument("unknown ablation mode '" + std::string(s) + "' (expected dropout, modality or decoder)");
}

int run_guarded(const std::function<int()>& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
}

model::ModelConfig fit_to_data(model::ModelConfig c, const Sample& s) {
  c.n_s = s.partial.size();
  c.image_width = s.image.width;
  c.image_height = s.image.height;
  c.validate();
  if (c.n_c() != s.complete.size()) {
    throw InvalidArgument("model produces n_p*2^m_units = " + std::to_string(c.n_c()) +
                          " points but the dataset's complete clouds hold " + std::to_string(s.complete.size()));
  }
  return c;
}

int cmd_gen(const GenArgs& args, std::ostream& out) {
  if (args.out.empty()) throw InvalidArgument("gen: --out is required");
  if (args.options.meshes == 0 || args.options.views == 0) throw InvalidArgument("gen: meshes and views must be positive");
  print_section(out, "gen", gen_key_values(args));
  const GenOutput result = generate_samples(args.options);
  std::vector<Sample> main_set;
  std::vector<Sample> val_set;
  for (const GeneratedSample& g : result.samples) {
    if (!args.val_out.empty() && is_validation_mesh(g.mesh_index)) {
      val_set.push_back(g.sample);
    } else {
      main_set.push_back(g.sample);
    }
  }
  write_dataset(args.out, main_set);
  if (!args.val_out.empty()) write_dataset(args.val_out, val_set);

  const GenStats& st = result.stats;
  out << "attempted " << st.attempted << ", accepted " << st.accepted << ", rejected " << (st.attempted - st.accepted)
      << "\n";
  out << "rejections:\n";
  for (const auto& [reason, count] : st.rejections) out << "  " << reject_reason_text(reason) << ": " << count << "\n";
  out << "wrote " << main_set.size() << " samples to " << args.out << "\n";
  if (!args.val_out.empty()) out << "wrote " << val_set.size() << " validation samples to " << args.val_out << "\n";
  return kExitOk;
}

int cmd_train(const TrainArgs& args, std::ostream& out) {
  if (args.out.empty()) throw InvalidArgument("train: --out is required");
  if (args.data.empty()) throw InvalidArgument("train: --data is required");
  const auto train_set = load(args.data, "training");
  const std::vector<Sample> val_set = args.val.empty() ? std::vector<Sample>{} : load(args.val, "validation");
  model::ModelConfig mc = args.model;
  train::TrainConfig tc = args.train;
  const train::RunPaths paths{args.out};
  if (args.resume) {
    mc = model::ModelConfig::read(paths.model_config());
    out << "resuming from " << paths.state() << "\n";
  } else {
    mc = fit_to_data(mc, train_set.front());
  }
  print_section(out, "model", mc.to_key_values());
  print_section(out, "train", tc.to_key_values());
  out << "data = " << args.data << " (" << train_set.size() << " samples), val = "
      << (args.val.empty() ? "-" : args.val) << " (" << val_set.size() << " samples)\n";
  const auto result = train::train_to_directory(mc, tc, train_set, val_set, args.out, args.resume);
  const auto log = train::read_log(paths.log());
  Series loss{"loss", {}, {}};
  for (const auto& r : log) {
    loss.x.push_back(static_cast<double>(r.step));
    loss.y.push_back(r.loss);
  }
  write_line_plot(paths.plot(), "training loss", "step", "multiscale HyperCD", {loss});
  out << "steps " << result.state.step << ", final loss " << (log.empty() ? 0.0 : log.back().loss) << ", loss ema "
      << result.state.loss_ema << "\n";
  if (!val_set.empty()) out << "best validation CD-l2 " << result.state.best_val_cd << "\n";
  out << "wrote " << paths.last() << "\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  if (args.data.empty() || args.out.empty()) throw InvalidArgument("eval: --data and --out are required");
  const auto samples = load(args.data, "evaluation");
  const model::Availability availability = model::Availability::parse(args.modalities);
  model::ModelConfig mc;
  ad::ParamStore params;
  if (!args.mock_gt) {
    if (args.checkpoint.empty()) throw InvalidArgument("eval: --checkpoint is required unless --mock-gt is set");
    const std::string beside = (std::filesystem::path(args.checkpoint).parent_path() / "config.txt").string();
    const std::string config_path = args.config.empty() ? beside : args.config;
    mc = model::ModelConfig::read(config_path);
    if (!args.config.empty() && std::filesystem::exists(beside)) {
      const auto stored = model::ModelConfig::read(beside);
      const auto diff = model::differing_keys(stored, mc);
      if (!diff.empty()) {
        std::string keys;
        for (const auto& k : diff) keys += (keys.empty() ? "" : ", ") + k;
        throw InvalidArgument("eval: config does not match the checkpoint's (differing keys: " + keys + ")");
      }
    }
    params = ad::read_checkpoint(args.checkpoint);
    const ad::ParamStore expected = model::init_params(mc);
    std::string mismatched;
    for (const auto& [name, p] : expected) {
      if (!params.contains(name) || params.at(name).shape != p.shape) mismatched += (mismatched.empty() ? "" : ", ") + name;
    }
    for (const auto& [name, p] : params) {
      if (!expected.contains(name)) mismatched += (mismatched.empty() ? "" : ", ") + name;
    }
    if (!mismatched.empty()) {
      throw InvalidArgument("eval: checkpoint parameters do not match the config: " + mismatched);
    }
    print_section(out, "model", mc.to_key_values());
  }
  print_section(out, "eval", {{"checkpoint", args.mock_gt ? "-" : args.checkpoint},
                              {"data", args.data},
                              {"out", args.out},
                              {"modalities", args.modalities},
                              {"mock_gt", args.mock_gt ? "1" : "0"},
                              {"threads", std::to_string(args.threads)}});
  const auto report = evaluate_set(mc, params, samples, availability, args.mock_gt, args.threads);
  std::filesystem::create_directories(args.out);
  metrics::write_rows_csv(args.out + "/metrics.csv", report);
  metrics::write_summary_csv(args.out + "/summary.csv", report);
  for (const auto& [cat, agg] : report.per_category) {
    print_aggregate(out, std::string(category_label(static_cast<ShapeCategory>(cat))), agg);
  }
  print_aggregate(out, "overall", report.overall);
  return kExitOk;
}

std::vector<AblationRow> run_ablation(const AblateArgs& args, const std::vector<Sample>& train_set,
                                      const std::vector<Sample>& eval_set, std::ostream& out) {
  struct Variant {
    std::string name;
    model::ModelConfig config;
  };
  std::vector<Variant> variants;
  const model::ModelConfig base = fit_to_data(args.model, train_set.front());
  switch (args.mode) {
    case AblationMode::dropout:
      for (double p : args.grid) {
        model::ModelConfig c = base;
        c.p_drop = p;
        c.validate();
        variants.push_back({"p=" + real(p), c});
      }
      break;
    case AblationMode::modality: {
      // Order: without image and text, without image, without text, full.
      const std::pair<const char*, model::ModalitySet> order[] = {{"none", model::ModalitySet::none},
                                                                  {"text_only", model::ModalitySet::text},
                                                                  {"image_only", model::ModalitySet::image},
                                                                  {"all", model::ModalitySet::all}};
      for (const auto& [name, set] : order) {
        model::ModelConfig c = base;
        c.modalities = set;
        variants.push_back({name, c});
      }
      break;
    }
    case AblationMode::decoder:
      for (auto kind : {model::DecoderKind::folding, model::DecoderKind::mlp, model::DecoderKind::progressive}) {
        model::ModelConfig c = base;
        c.decoder = kind;
        variants.push_back({std::string(model::to_string(kind)), c});
      }
      break;
  }
  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    out << "training variant " << v.name << "\n" << std::flush;
    auto params = model::init_params(v.config);
    train::TrainState state;
    state.seed = args.train.seed;
    auto result = train::train(v.config, args.train, train_set, {}, std::move(params), state);
    const auto report = evaluate_set(v.config, result.params, eval_set, model::Availability::all(), false, 1);
    rows.push_back({v.name, v.config, report.overall});
    print_aggregate(out, v.name, report.overall);
  }
  return rows;
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "variant,p_drop,decoder,modalities,cd_l1_x1000,cd_l2_x1000,f_score\n";
  for (const auto& r : rows) {
    f << r.variant << "," << real(r.config.p_drop) << "," << model::to_string(r.config.decoder) << ","
      << model::to_string(r.config.modalities) << "," << real(r.result.mean.cd_l1 * metrics::kReportCdScale) << ","
      << real(r.result.mean.cd_l2 * metrics::kReportCdScale) << "," << real(r.result.mean.f_score) << "\n";
  }
  if (!f) throw IoError("write failed on '" + path + "'");
}

int cmd_ablate(const AblateArgs& args, std::ostream& out) {
  if (args.data.empty() || args.val.empty() || args.out.empty()) {
    throw InvalidArgument("ablate: --data, --val and --out are required");
  }
  const auto train_set = load(args.data, "training");
  const auto eval_set = load(args.val, "evaluation");
  std::string grid;
  for (double p : args.grid) grid += (grid.empty() ? "" : ",") + real(p);
  print_section(out, "ablate", {{"mode", args.mode == AblationMode::dropout    ? "dropout"
                                         : args.mode == AblationMode::modality ? "modality"
                                                                               : "decoder"},
                                {"data", args.data},
                                {"val", args.val},
                                {"out", args.out},
                                {"grid", grid}});
  print_section(out, "model", fit_to_data(args.model, train_set.front()).to_key_values());
  print_section(out, "train", args.train.to_key_values());
  const auto rows = run_ablation(args, train_set, eval_set, out);
  std::filesystem::create_directories(args.out);
  write_ablation_csv(args.out + "/ablation.csv", rows);
  Series cd{"CD-l2 x1000", {}, {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cd.x.push_back(args.mode == AblationMode::dropout ? rows[i].config.p_drop : static_cast<double>(i));
    cd.y.push_back(rows[i].result.mean.cd_l2 * metrics::kReportCdScale);
  }
  std::string x_label = args.mode == AblationMode::dropout ? "dropout probability p" : "variant index (";
  if (args.mode != AblationMode::dropout) {
    for (std::size_t i = 0; i < rows.size(); ++i) x_label += (i ? ", " : "") + std::to_string(i) + "=" + rows[i].variant;
    x_label += ")";
  }
  write_line_plot(args.out + "/ablation.svg", "ablation", x_label, "CD-l2 x1000", {cd});
  out << "wrote " << args.out << "/ablation.csv\n";
  return kExitOk;
}

Sample toy_sample(const model::ModelConfig& c, std::uint64_t seed) {
  Rng rng = make_rng({seed, 0x544f59ULL});
  Sample s;
  const auto sphere = fibonacci_sphere(c.n_c());
  for (const Vec3& p : sphere) s.complete.points.push_back(p);
  std::vector<Vec3> upper;
  for (const Vec3& p : fibonacci_sphere(2 * c.n_s)) {
    if (p.z() >= 0.0) upper.push_back(p + Vec3(normal(rng, 0, 0.01), normal(rng, 0, 0.01), normal(rng, 0, 0.01)));
  }
  upper.resize(c.n_s);
  PointCloud partial;
  partial.points = upper;
  NormalizedPair pair = normalize_input_centric(partial, s.complete);
  s.partial = std::move(pair.partial);
  s.complete = std::move(pair.complete);
  s.norm = pair.params;
  s.image.width = static_cast<std::uint32_t>(c.image_width);
  s.image.height = static_cast<std::uint32_t>(c.image_height);
  s.image.rgb.resize(c.image_width * c.image_height * 3);
  for (auto& px : s.image.rgb) px = static_cast<std::uint8_t>(rng() & 0xff);
  s.text_label = c.vocab.front();
  return s;
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out) {
  model::ModelConfig mc = model::gradcheck_config();
  mc.p_drop = 0.0;
  mc.init_seed = args.seed;
  print_section(out, "gradcheck", {{"tolerance", real(args.tolerance)},
                                   {"seed", std::to_string(args.seed)},
                                   {"corrupt", args.corrupt.value_or("-")},
                                   {"corrupt_op", args.corrupt_op.value_or("-")},
                                   {"max_elements", std::to_string(args.max_elements)}});
  print_section(out, "model", mc.to_key_values());
  ad::ParamStore params = model::init_params(mc);
  if (args.corrupt && !params.contains(*args.corrupt)) {
    throw InvalidArgument("gradcheck: unknown parameter '" + *args.corrupt + "'");
  }
  const Sample sample = toy_sample(mc, args.seed);
  const auto gts = train::multiscale_gt(sample.complete, mc.output_counts());
  const auto loss_cfg = train::LossConfig::uniform(gts.size());
  ad::LossBuilder builder = [&](ad::Tape& tape, ad::ParamStore& store) {
    Rng rng = make_rng({args.seed});
    const auto fwd = model::forward(tape, store, mc, sample, model::Mode::train, model::Availability::all(), rng);
    return train::total_loss(fwd.scales, gts, loss_cfg);
  };
  ad::GradCheckOptions opt;
  opt.tolerance = args.tolerance;
  opt.max_elements_per_param = args.max_elements;
  opt.corrupt_param = args.corrupt;
  opt.corrupt_op = args.corrupt_op;
  const auto report = ad::grad_check(builder, params, opt);
  out << report.to_string();
  out << (report.passed() ? "gradcheck PASSED" : "gradcheck FAILED") << "\n";
  return report.passed() ? kExitOk : kExitInvalid;
}

}  // namespace mgpc::cli
