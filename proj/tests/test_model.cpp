// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "mgpc/ad/grad_check.hpp"
#include "mgpc/commands.hpp"
#include "mgpc/error.hpp"
#include "mgpc/model/config.hpp"
#include "mgpc/model/model.hpp"
#include "mgpc/train/loss.hpp"
#include "mgpc/train/trainer.hpp"
#include "support.hpp"

using namespace mgpc;
using namespace mgpc::model;

namespace {

ModelConfig toy(double p_drop = 0.0) {
  ModelConfig c = gradcheck_config();
  c.p_drop = p_drop;
  return c;
}

std::vector<double> values(const Tensor& t) { return {t.value().begin(), t.value().end()}; }

double loss_of(Tape& tape, ParamStore& store, const ModelConfig& c, const Sample& s, Mode mode, Rng& rng) {
  const auto fwd = forward(tape, store, c, s, mode, Availability::all(), rng);
  const auto gts = train::multiscale_gt(s.complete, c.output_counts());
  const Tensor loss = train::total_loss(fwd.scales, gts, train::LossConfig::uniform(gts.size()));
  loss.backward();
  return loss.item();
}

bool any_nonzero(const std::vector<double>& v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
}

}  // namespace

TEST(ModelConfig, DerivedCounts) {
  ModelConfig c;
  EXPECT_EQ(c.n_c(), 2048u);
  EXPECT_EQ(c.n_i(), 16u);
  EXPECT_EQ(c.condition_rows(), 17u);
  EXPECT_EQ(c.output_counts(), (std::vector<std::size_t>{512, 1024, 2048}));
}

TEST(ModelConfig, ValidationErrors) {
  ModelConfig c;
  c.heads = 5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig();
  c.p_drop = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig();
  c.patch = 24;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig();
  c.n_p = 600;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_NO_THROW(ModelConfig().validate());
}

TEST(ModelConfig, TextRoundTripAndDiff) {
  ModelConfig c = toy(0.25);
  c.decoder = DecoderKind::folding;
  c.modalities = ModalitySet::text;
  const ModelConfig back = ModelConfig::parse_text(c.to_text());
  EXPECT_TRUE(differing_keys(c, back).empty());
  ModelConfig other = back;
  other.d = 32;
  other.heads = 4;
  EXPECT_EQ(differing_keys(c, other), (std::vector<std::string>{"d", "heads"}));
  EXPECT_THROW(ModelConfig::parse_text("bogus = 3\n"), InvalidArgument);
}

TEST(EncodePoints, OutputShape) {
  const ModelConfig c = toy();
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 1);
  Tape tape;
  const PointEncoding enc = encode_points(tape, store, c, s.partial);
  EXPECT_EQ(enc.tokens.shape(), (ad::Shape{c.n_p, c.d}));
  EXPECT_EQ(enc.anchors.size(), c.n_p);
}

TEST(EncodePoints, InvariantToPermutationsKeepingTheSeedPoint) {
  const ModelConfig c = toy();
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 2);
  std::vector<std::size_t> order(s.partial.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(3);
  for (int trial = 0; trial < 3; ++trial) {
    std::shuffle(order.begin() + 1, order.end(), rng);
    const PointCloud permuted = s.partial.select(order);
    Tape tape;
    const PointEncoding a = encode_points(tape, store, c, s.partial);
    const PointEncoding b = encode_points(tape, store, c, permuted);
    EXPECT_EQ(a.anchors, b.anchors);
    const auto va = values(a.tokens), vb = values(b.tokens);
    for (std::size_t i = 0; i < va.size(); ++i) EXPECT_NEAR(va[i], vb[i], 1e-12);
  }
}

TEST(EncodePoints, TooManyTokensIsAnError) {
  ModelConfig c = toy();
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 1);
  c.n_p = s.partial.size() + 1;
  Tape tape;
  EXPECT_THROW(encode_points(tape, store, c, s.partial), InvalidArgument);
}

TEST(EncodeImage, TokenCountFollowsPatchGrid) {
  ModelConfig c;
  c.d = 8;
  c.heads = 2;
  ParamStore store = init_params(c);
  Image img;
  img.width = img.height = 64;
  img.rgb.assign(64 * 64 * 3, 128);
  Tape tape;
  EXPECT_EQ(encode_image(tape, store, c, img).shape(), (ad::Shape{16, 8}));
  img.width = 32;
  img.rgb.resize(32 * 64 * 3);
  EXPECT_THROW(encode_image(tape, store, c, img), InvalidArgument);
}

TEST(EncodeImage, BlackImageGivesPositionPlusBias) {
  const ModelConfig c = toy();
  ParamStore store = init_params(c);
  Rng rng(4);
  for (double& b : store.at("image_encoder.proj.b").value) b = normal(rng, 0.0, 1.0);
  Image img;
  img.width = static_cast<std::uint32_t>(c.image_width);
  img.height = static_cast<std::uint32_t>(c.image_height);
  img.rgb.assign(img.width * img.height * 3, 0);
  Tape tape;
  const Tensor t = encode_image(tape, store, c, img);
  const auto& pos = store.at("image_encoder.pos").value;
  const auto& bias = store.at("image_encoder.proj.b").value;
  for (std::size_t r = 0; r < c.n_i(); ++r) {
    for (std::size_t k = 0; k < c.d; ++k) EXPECT_DOUBLE_EQ(t.at(r, k), pos[r * c.d + k] + bias[k]);
  }
}

TEST(EncodeText, LookupIsDeterministicAndChecked) {
  const ModelConfig c = toy();
  ParamStore store = init_params(c);
  Tape tape;
  const Tensor a = encode_text(tape, store, c, c.vocab[1]);
  const Tensor b = encode_text(tape, store, c, c.vocab[1]);
  EXPECT_EQ(a.shape(), (ad::Shape{1, c.d}));
  EXPECT_EQ(values(a), values(b));
  try {
    encode_text(tape, store, c, "teapot");
    FAIL() << "expected throw";
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("out-of-vocabulary label"), std::string::npos);
  }
}

TEST(EncodeText, DistinctLabelsStayDistinctAfterTraining) {
  ModelConfig c = toy(0.0);
  c.zero_init_offsets = true;
  std::vector<Sample> data{cli::toy_sample(c, 5), cli::toy_sample(c, 6)};
  data[1].text_label = c.vocab[3];
  train::TrainConfig tc;
  tc.epochs = 3;
  tc.batch = 2;
  tc.lr = 1e-3;
  ParamStore init = init_params(c);
  train::TrainState state;
  auto result = train::train(c, tc, data, {}, init, state);
  Tape tape;
  const auto a = values(encode_text(tape, result.params, c, data[0].text_label));
  const auto b = values(encode_text(tape, result.params, c, data[1].text_label));
  double dist = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dist += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_GT(std::sqrt(dist), 0.0);
  Tape init_tape;
  EXPECT_NE(a, values(encode_text(init_tape, init, c, data[0].text_label)));
}

TEST(ModalityDropout, BoundaryProbabilities) {
  for (double p : {0.0, 1.0}) {
    const ModelConfig c = toy(p);
    ParamStore store = init_params(c);
    Rng rng(7);
    std::size_t applied = 0;
    for (int i = 0; i < 10000; ++i) {
      Tape tape;
      const Tensor img = tape.constant({c.n_i(), c.d}, std::vector<double>(c.n_i() * c.d, 0.0));
      const Tensor txt = tape.constant({1, c.d}, std::vector<double>(c.d, 0.0));
      const auto cond = modality_dropout(tape, store, c, img, txt, Mode::train, Availability::all(), rng);
      applied += cond.dropout_applied ? 1 : 0;
      EXPECT_EQ(cond.tokens.rows(), c.condition_rows());
    }
    EXPECT_EQ(applied, p == 0.0 ? 0u : 10000u) << "p=" << p;
  }
}

TEST(ModalityDropout, HalfRateWithinBinomialBound) {
  const ModelConfig c = toy(0.5);
  ParamStore store = init_params(c);
  Rng rng = make_rng({2024});
  std::size_t applied = 0;
  for (int i = 0; i < 10000; ++i) {
    Tape tape;
    const Tensor img = tape.constant({c.n_i(), c.d}, std::vector<double>(c.n_i() * c.d, 0.0));
    const Tensor txt = tape.constant({1, c.d}, std::vector<double>(c.d, 0.0));
    applied += modality_dropout(tape, store, c, img, txt, Mode::train, Availability::all(), rng).dropout_applied;
  }
  EXPECT_NEAR(applied / 10000.0, 0.5, 0.015);
}

TEST(ModalityDropout, ConcatenatesOrSubstitutesPlaceholder) {
  const ModelConfig c = toy(0.0);
  ParamStore store = init_params(c);
  Rng rng(8);
  Tape tape;
  std::vector<double> iv(c.n_i() * c.d), tv(c.d);
  std::iota(iv.begin(), iv.end(), 1.0);
  std::iota(tv.begin(), tv.end(), -50.0);
  const Tensor img = tape.constant({c.n_i(), c.d}, iv);
  const Tensor txt = tape.constant({1, c.d}, tv);
  auto joined = iv;
  joined.insert(joined.end(), tv.begin(), tv.end());
  EXPECT_EQ(values(modality_dropout(tape, store, c, img, txt, Mode::infer, Availability::all(), rng).tokens),
            joined);
  const auto& learned = store.at("condition.learned").value;
  for (const char* missing : {"none", "image", "text"}) {
    const auto cond = modality_dropout(tape, store, c, img, txt, Mode::infer, Availability::parse(missing), rng);
    EXPECT_EQ(values(cond.tokens), learned) << missing;
    EXPECT_FALSE(cond.dropout_applied);
  }
}

TEST(Fusion, ZeroedBranchesDoubleTheInput) {
  const ModelConfig c = toy();
  ParamStore store = init_params(c);
  for (auto& [name, p] : store) {
    const bool out_proj = name.find("attn.o.") != std::string::npos;
    const bool ffn_out = name.find(".ffn2.") != std::string::npos;
    if (name.starts_with("fusion.") && (out_proj || ffn_out)) std::fill(p.value.begin(), p.value.end(), 0.0);
  }
  Rng rng(9);
  std::vector<double> pv(c.n_p * c.d), cv(c.condition_rows() * c.d);
  for (double& x : pv) x = normal(rng, 0.0, 1.0);
  for (double& x : cv) x = normal(rng, 0.0, 1.0);
  Tape tape;
  const Tensor fused =
      fusion_forward(tape, store, c, tape.constant({c.n_p, c.d}, pv), tape.constant({c.condition_rows(), c.d}, cv));
  ASSERT_EQ(fused.shape(), (ad::Shape{c.n_p, c.d}));
  for (std::size_t i = 0; i < pv.size(); ++i) EXPECT_EQ(fused.value()[i], 2.0 * pv[i]);
}

TEST(Fusion, SingleConditionTokenBroadcastsOneCrossAttentionRow) {
  ModelConfig c = toy();
  c.modalities = ModalitySet::text;
  c.n_blocks = 1;
  ParamStore store = init_params(c);
  for (auto& [name, p] : store) {
    if (name.starts_with("fusion.block0.self_attn.o.") || name.starts_with("fusion.block0.ffn2.")) {
      std::fill(p.value.begin(), p.value.end(), 0.0);
    }
  }
  Rng rng(10);
  std::vector<double> pv(c.n_p * c.d), cv(c.d);
  for (double& x : pv) x = normal(rng, 0.0, 1.0);
  for (double& x : cv) x = normal(rng, 0.0, 1.0);
  Tape tape;
  const Tensor fused = fusion_forward(tape, store, c, tape.constant({c.n_p, c.d}, pv), tape.constant({1, c.d}, cv));
  // fused = 2 * tokens + one shared cross-attention row.
  for (std::size_t k = 0; k < c.d; ++k) {
    const double shared = fused.at(0, k) - 2.0 * pv[k];
    for (std::size_t r = 1; r < c.n_p; ++r) EXPECT_NEAR(fused.at(r, k) - 2.0 * pv[r * c.d + k], shared, 1e-12);
  }
}

TEST(Fusion, GradientCheck) {
  ModelConfig c = toy();
  c.n_p = 8;
  ParamStore store = init_params(c);
  Rng rng(11);
  std::vector<double> pv(c.n_p * c.d), cv(c.condition_rows() * c.d), probe(c.n_p * c.d);
  for (double& x : pv) x = normal(rng, 0.0, 1.0);
  for (double& x : cv) x = normal(rng, 0.0, 1.0);
  for (double& x : probe) x = normal(rng, 0.0, 1.0);
  ParamStore fusion_only;
  for (const auto& [name, p] : store) {
    if (name.starts_with("fusion.")) fusion_only.add(name, p.shape, p.value);
  }
  const auto report = ad::grad_check(
      [&](Tape& t, ParamStore& s) {
        const Tensor f =
            fusion_forward(t, s, c, t.constant({c.n_p, c.d}, pv), t.constant({c.condition_rows(), c.d}, cv));
        return ad::sum_all(ad::mul(f, t.constant({c.n_p, c.d}, probe)));
      },
      fusion_only);
  EXPECT_TRUE(report.passed()) << report.to_string();
}

TEST(Decoder, ProgressiveCountsDouble) {
  ModelConfig c;
  EXPECT_EQ(c.output_counts(), (std::vector<std::size_t>{512, 1024, 2048}));
  const ModelConfig t = toy();
  ParamStore store = init_params(t);
  const Sample s = cli::toy_sample(t, 3);
  Rng rng(1);
  Tape tape;
  const auto fwd = forward(tape, store, t, s, Mode::infer, Availability::all(), rng);
  ASSERT_EQ(fwd.scales.size(), t.m_units + 1);
  for (std::size_t i = 0; i <= t.m_units; ++i) EXPECT_EQ(fwd.scales[i].rows(), t.n_p << i);
}

TEST(Decoder, ZeroOffsetsDuplicateEveryPoint) {
  ModelConfig c = toy();
  c.zero_init_offsets = true;
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 4);
  Rng rng(1);
  Tape tape;
  const auto scales = forward(tape, store, c, s, Mode::infer, Availability::all(), rng).scales;
  for (std::size_t i = 0; i + 1 < scales.size(); ++i) {
    const auto coarse = values(scales[i]);
    const auto fine = values(scales[i + 1]);
    ASSERT_EQ(fine.size(), 2 * coarse.size());
    for (std::size_t p = 0; p < coarse.size() / 3; ++p) {
      for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(fine[(2 * p) * 3 + k], coarse[p * 3 + k]);
        EXPECT_EQ(fine[(2 * p + 1) * 3 + k], coarse[p * 3 + k]);
      }
    }
  }
}

TEST(Decoder, AllHeadsEndAtTheSameCount) {
  for (DecoderKind kind : {DecoderKind::progressive, DecoderKind::folding, DecoderKind::mlp}) {
    ModelConfig c = toy();
    c.decoder = kind;
    ParamStore store = init_params(c);
    const Sample s = cli::toy_sample(c, 5);
    Rng rng(1);
    Tape tape;
    const auto scales = forward(tape, store, c, s, Mode::infer, Availability::all(), rng).scales;
    EXPECT_EQ(scales.back().rows(), c.n_c()) << to_string(kind);
    EXPECT_EQ(scales.size(), c.output_counts().size()) << to_string(kind);
  }
}

TEST(Decoder, ConcatProjectCombineRuns) {
  ModelConfig c = toy();
  c.branch_combine = BranchCombine::concat_project;
  ParamStore store = init_params(c);
  EXPECT_TRUE(store.contains("decoder.unit0.combine.w"));
  const Sample s = cli::toy_sample(c, 5);
  Rng rng(1);
  Tape tape;
  EXPECT_EQ(forward(tape, store, c, s, Mode::infer, Availability::all(), rng).scales.back().rows(), c.n_c());
}

TEST(FoldingGrid, CoversTheSquare) {
  const auto g = folding_grid(4);
  EXPECT_EQ(g, (std::vector<double>{-0.05, -0.05, -0.05, 0.05, 0.05, -0.05, 0.05, 0.05}));
  EXPECT_EQ(folding_grid(8).size(), 16u);
}

TEST(Forward, DeterministicAndFinite) {
  const ModelConfig c = toy(0.5);
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 6);
  Rng r1(12), r2(12);
  Tape t1, t2;
  const auto a = forward(t1, store, c, s, Mode::train, Availability::all(), r1);
  const auto b = forward(t2, store, c, s, Mode::train, Availability::all(), r2);
  EXPECT_EQ(a.dropout_applied, b.dropout_applied);
  EXPECT_EQ(values(a.scales.back()), values(b.scales.back()));
  for (double v : a.scales.back().value()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, MissingModalitiesAtInference) {
  const ModelConfig c = toy();
  ParamStore store = init_params(c);
  Sample s = cli::toy_sample(c, 7);
  s.text_label = "not-a-label";
  s.image.rgb.clear();
  Rng rng(1);
  Tape tape;
  const auto fwd = forward(tape, store, c, s, Mode::infer, Availability::none(), rng);
  const PointCloud out = tensor_cloud(fwd.scales.back());
  EXPECT_EQ(out.size(), c.n_c());
  EXPECT_TRUE(out.all_finite());
}

TEST(Forward, EveryParameterLearnsAfterOneStep) {
  ModelConfig c = toy(0.0);
  c.zero_init_offsets = true;
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 8);
  Rng rng(1);
  {
    Tape tape;
    loss_of(tape, store, c, s, Mode::train, rng);
  }
  ad::adamw_step(store, ad::AdamWConfig{});
  store.zero_grad();
  Tape tape;
  loss_of(tape, store, c, s, Mode::train, rng);
  for (const auto& [name, p] : store) {
    if (name == "condition.learned") {
      EXPECT_FALSE(any_nonzero(p.grad)) << name;
    } else {
      EXPECT_TRUE(any_nonzero(p.grad)) << name;
    }
  }
}

TEST(Forward, PlaceholderLearnsOnlyWhenDropoutApplies) {
  const ModelConfig c = toy(1.0);
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 9);
  Rng rng(1);
  Tape tape;
  loss_of(tape, store, c, s, Mode::train, rng);
  EXPECT_TRUE(any_nonzero(store.at("condition.learned").grad));
  EXPECT_FALSE(any_nonzero(store.at("text_encoder.table").grad));
  EXPECT_FALSE(any_nonzero(store.at("image_encoder.proj.w").grad));
}

TEST(Forward, FullModelGradientCheck) {
  const ModelConfig c = toy(0.0);
  ParamStore store = init_params(c);
  const Sample s = cli::toy_sample(c, 10);
  const auto gts = train::multiscale_gt(s.complete, c.output_counts());
  ad::GradCheckOptions opt;
  opt.max_elements_per_param = 6;
  const auto report = ad::grad_check(
      [&](Tape& tape, ParamStore& st) {
        Rng rng(1);
        const auto fwd = forward(tape, st, c, s, Mode::train, Availability::all(), rng);
        return train::total_loss(fwd.scales, gts, train::LossConfig::uniform(gts.size()));
      },
      store, opt);
  EXPECT_TRUE(report.passed()) << report.to_string();
  EXPECT_EQ(report.params.size(), store.size());
}

TEST(InitParams, SharedParametersMatchAcrossArchitectures) {
  ModelConfig a = toy();
  ModelConfig b = toy();
  b.modalities = ModalitySet::none;
  const ParamStore pa = init_params(a);
  const ParamStore pb = init_params(b);
  EXPECT_FALSE(pb.contains("image_encoder.proj.w"));
  for (const auto& [name, p] : pb) {
    if (name == "condition.learned") continue;
    ASSERT_TRUE(pa.contains(name)) << name;
    EXPECT_EQ(pa.at(name).value, p.value) << name;
  }
}

TEST(InitParams, FreezeEncodersMarksOnlyEncoders) {
  ModelConfig c = toy();
  c.freeze_encoders = true;
  for (const auto& [name, p] : init_params(c)) EXPECT_EQ(p.frozen, is_encoder_param(name)) << name;
}
