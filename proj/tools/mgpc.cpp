// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mgpc/commands.hpp"
#include "mgpc/error.hpp"
#include "mgpc/mesh.hpp"

namespace {

using namespace mgpc;

std::vector<ShapeCategory> parse_families(const std::string& list) {
  std::vector<ShapeCategory> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    const auto c = parse_category(item);
    if (!c) throw InvalidArgument("unknown shape family '" + item + "'");
    out.push_back(*c);
  }
  if (out.empty()) throw InvalidArgument("no shape families given");
  return out;
}

struct ModelFlags {
  std::string decoder = "progressive";
  std::string combine = "sum";
  std::string arch = "all";
  bool no_anchor_residual = false;
  bool freeze_encoders = false;
};

void add_model_options(CLI::App* app, model::ModelConfig& m, ModelFlags& f) {
  app->add_option("--np", m.n_p, "point tokens")->capture_default_str();
  app->add_option("--d", m.d, "token width")->capture_default_str();
  app->add_option("--heads", m.heads, "attention heads")->capture_default_str();
  app->add_option("--blocks", m.n_blocks, "fusion blocks")->capture_default_str();
  app->add_option("--units", m.m_units, "upsampling units")->capture_default_str();
  app->add_option("--knn", m.k_nn, "encoder neighborhood")->capture_default_str();
  app->add_option("--patch", m.patch, "image patch side")->capture_default_str();
  app->add_option("--p-drop", m.p_drop, "modality dropout probability")->capture_default_str();
  app->add_option("--init-seed", m.init_seed, "parameter initialization seed")->capture_default_str();
  app->add_option("--decoder", f.decoder, "progressive | folding | mlp")->capture_default_str();
  app->add_option("--combine", f.combine, "sum | concat_project")->capture_default_str();
  app->add_option("--arch-modalities", f.arch, "encoders present: all | image | text | none")->capture_default_str();
  app->add_flag("--no-anchor-residual", f.no_anchor_residual, "predict coarse points without the anchor base");
  app->add_flag("--freeze-encoders", f.freeze_encoders, "keep image and text encoders fixed");
}

void apply_model_flags(model::ModelConfig& m, const ModelFlags& f) {
  m.decoder = model::parse_decoder(f.decoder);
  m.branch_combine = model::parse_branch_combine(f.combine);
  m.modalities = model::parse_modality_set(f.arch);
  m.anchor_residual = !f.no_anchor_residual;
  m.freeze_encoders = f.freeze_encoders;
}

void add_train_options(CLI::App* app, train::TrainConfig& t) {
  app->add_option("--epochs", t.epochs, "epochs")->capture_default_str();
  app->add_option("--batch", t.batch, "batch size")->capture_default_str();
  app->add_option("--seed", t.seed, "shuffle and dropout seed")->capture_default_str();
  app->add_option("--lr", t.lr, "initial learning rate")->capture_default_str();
  app->add_option("--lr-min", t.lr_min, "final learning rate")->capture_default_str();
  app->add_option("--weight-decay", t.weight_decay, "AdamW weight decay")->capture_default_str();
  app->add_option("--alpha", t.alpha, "HyperCD alpha")->capture_default_str();
  app->add_option("--betas", t.betas, "per-scale loss weights, coarse to fine")->delimiter(',');
  app->add_option("--max-steps", t.max_steps, "stop after this many steps (0: no limit)")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal point-cloud completion: data generation, training and evaluation"};
  app.require_subcommand(1);

  cli::GenArgs gen;
  std::string families;
  std::size_t image_size = 64;
  auto* g = app.add_subcommand("gen", "generate a synthetic paired dataset");
  g->add_option("--out", gen.out, "output dataset file")->required();
  g->add_option("--val-out", gen.val_out, "separate file for held-out meshes (every tenth)");
  g->add_option("--meshes", gen.options.meshes, "meshes")->capture_default_str();
  g->add_option("--views", gen.options.views, "views per mesh")->capture_default_str();
  g->add_option("--seed", gen.options.seed, "master seed")->capture_default_str();
  g->add_option("--ns", gen.options.config.n_s, "partial points")->capture_default_str();
  g->add_option("--nc", gen.options.config.n_c, "complete points")->capture_default_str();
  g->add_option("--image", image_size, "square image side in pixels")->capture_default_str();
  g->add_option("--noise", gen.options.config.noise_sigma_rel, "relative depth noise")->capture_default_str();
  g->add_option("--families", families, "comma-separated shape families (default: all)");
  g->add_flag("--pole-view-only", gen.options.pole_view_only, "one view from +z per mesh");
  g->add_option("--threads", gen.options.threads, "worker threads")->capture_default_str();

  cli::TrainArgs tr;
  ModelFlags tr_flags;
  auto* t = app.add_subcommand("train", "train a completion model");
  t->add_option("--data", tr.data, "training dataset")->required();
  t->add_option("--val", tr.val, "validation dataset");
  t->add_option("--out", tr.out, "run directory")->required();
  t->add_flag("--resume", tr.resume, "continue the run stored in --out");
  t->add_option("--checkpoint-every", tr.train.checkpoint_every, "extra checkpoint cadence in steps")
      ->capture_default_str();
  add_train_options(t, tr.train);
  add_model_options(t, tr.model, tr_flags);

  cli::EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "checkpoint file");
  e->add_option("--config", ev.config, "model config (default: config.txt beside the checkpoint)");
  e->add_option("--data", ev.data, "evaluation dataset")->required();
  e->add_option("--out", ev.out, "output directory")->required();
  e->add_option("--modalities", ev.modalities, "available inputs: all | none | image | text")->capture_default_str();
  e->add_flag("--mock-gt", ev.mock_gt, "score ground truth against itself");
  e->add_option("--threads", ev.threads, "worker threads")->capture_default_str();

  cli::AblateArgs ab;
  ModelFlags ab_flags;
  std::string mode = "dropout";
  auto* a = app.add_subcommand("ablate", "retrain across a variant grid and compare");
  a->add_option("--mode", mode, "dropout | modality | decoder")->capture_default_str();
  a->add_option("--data", ab.data, "training dataset")->required();
  a->add_option("--val", ab.val, "evaluation dataset")->required();
  a->add_option("--out", ab.out, "output directory")->required();
  a->add_option("--grid", ab.grid, "dropout probabilities")->delimiter(',');
  add_train_options(a, ab.train);
  add_model_options(a, ab.model, ab_flags);

  cli::GradcheckArgs gc;
  std::string corrupt, corrupt_op;
  auto* c = app.add_subcommand("gradcheck", "finite-difference check of every model parameter");
  c->add_option("--corrupt", corrupt, "flip the gradient sign of this parameter");
  c->add_option("--corrupt-op", corrupt_op, "scale the backward rule of this op");
  c->add_option("--seed", gc.seed, "model and sample seed")->capture_default_str();
  c->add_option("--tolerance", gc.tolerance, "relative error tolerance")->capture_default_str();
  c->add_option("--max-elements", gc.max_elements, "elements checked per parameter (0: all)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? cli::kExitOk : cli::kExitInvalid;
  }

  return cli::run_guarded(
      [&]() -> int {
        if (*g) {
          if (!families.empty()) gen.options.families = parse_families(families);
          gen.options.config.image_width = gen.options.config.image_height = static_cast<std::uint32_t>(image_size);
          return cli::cmd_gen(gen, std::cout);
        }
        if (*t) {
          apply_model_flags(tr.model, tr_flags);
          return cli::cmd_train(tr, std::cout);
        }
        if (*e) return cli::cmd_eval(ev, std::cout);
        if (*a) {
          ab.mode = cli::parse_ablation_mode(mode);
          apply_model_flags(ab.model, ab_flags);
          return cli::cmd_ablate(ab, std::cout);
        }
        if (!corrupt.empty()) gc.corrupt = corrupt;
        if (!corrupt_op.empty()) gc.corrupt_op = corrupt_op;
        return cli::cmd_gradcheck(gc, std::cout);
      },
      std::cerr);
}
