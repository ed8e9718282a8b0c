// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "tlc/common/error.hpp"
#include "tlc/eval/suite.hpp"

namespace tlc::eval {
namespace {

using motion::Group;
using motion::PartialTrajectory;

struct Fixture {
  data::Corpus corpus;
  opt::ModelSet models;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    data::GeneratorConfig gc;
    gc.max_length = 16;
    data::Corpus corpus = data::generate_corpus(gc, 30, 2);
    vq::VqvaeConfig vc;
    vc.codebook_size = 8;
    vc.code_dim = 4;
    vc.encoder_width = 8;
    vc.decoder_width = 12;
    mtt::MttConfig mc;
    mc.stage1_width = 16;
    mc.stage1_layers = 1;
    mc.stage2_width = 8;
    mc.stage2_layers = 1;
    mc.heads = 2;
    mc.max_length = 16;
    vq::Codec codec(vc, motion::SkeletonSpec::humanoid22(), 5);
    codec.set_stats(corpus.stats);
    mtt::Mtt transformer(mc, vc, 5);
    return Fixture{std::move(corpus), opt::ModelSet{std::move(codec), std::move(transformer)}};
  }();
  return f;
}

EvalSuiteConfig small_suite() {
  EvalSuiteConfig c;
  c.selections = {"all", "root"};
  c.mask_rates = {0.0, 0.25, 0.5, 0.75};
  c.tolerances = {1e-4};
  c.max_inputs = 3;
  c.samples_per_input = 2;
  c.max_iterations = 20;
  return c;
}

TEST(Selection, Parse) {
  EXPECT_EQ(Selection::parse("all").groups.size(), 6u);
  const Selection s = Selection::parse("left_hand,root");
  ASSERT_EQ(s.groups.size(), 2u);
  EXPECT_EQ(s.groups[0], Group::left_arm);
  EXPECT_EQ(s.groups[1], Group::root);
  EXPECT_THROW(Selection::parse("pelvis"), ConfigError);
  EXPECT_THROW(Selection::parse("root,root"), ConfigError);
  EXPECT_THROW(Selection::parse(""), ConfigError);
}

TEST(EvalConfig, ValidationAndJson) {
  EvalSuiteConfig c = small_suite();
  EXPECT_EQ(EvalSuiteConfig::from_json(c.to_json()).to_json(), c.to_json());
  c.mask_rates.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_suite();
  c.mask_rates = {1.5};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_suite();
  c.tolerances = {0.0};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(InferenceTrajectory, MasksTheTruePrefixOnly) {
  const data::CorpusSample& s = fixture().corpus.samples[0];
  const Selection all = Selection::parse("all");
  const PartialTrajectory none = inference_trajectory(s, all, 0.0, 1);
  EXPECT_EQ(none.length(), s.full_trajectories.length());
  for (Group g : motion::kAllGroups) EXPECT_EQ(none.count_specified(g), s.true_length);
  const PartialTrajectory half = inference_trajectory(s, all, 0.5, 1);
  for (Group g : motion::kAllGroups) EXPECT_EQ(half.count_specified(g), s.true_length - s.true_length / 2);
  const PartialTrajectory root = inference_trajectory(s, Selection::parse("root"), 0.0, 1);
  EXPECT_EQ(root.count_specified(), s.true_length);
  EXPECT_TRUE(inference_trajectory(s, all, 0.5, 1) == half);
}

TEST(Suite, RowCardinalityAndColumns) {
  const Fixture& f = fixture();
  const EvalReport r = run_eval_suite(small_suite(), {{"part", &f.models}}, f.corpus, f.corpus.test, 3);
  ASSERT_EQ(r.rows.size(), 8u);
  for (const EvalRow& row : r.rows) {
    EXPECT_EQ(row.inputs, 3);
    EXPECT_GT(row.seconds_per_batch, 0.0);
    EXPECT_GT(row.seconds_per_frame, 0.0);
    EXPECT_GE(row.mmodality, 0.0);
    EXPECT_GE(row.fid, -1e-6);
    EXPECT_EQ(row.per_input_avg_err_cm.size(), 3u);
    const int groups = row.selection == "all" ? 6 : 1;
    EXPECT_EQ(row.control.tracks, groups * 3 * 2);
  }
  EXPECT_EQ(r.rows[0].selection, "all");
  EXPECT_EQ(r.rows[4].selection, "root");
  EXPECT_EQ(r.rows[1].mask_rate, 0.25);

  const std::string csv = r.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "variant,selection,mask_rate,tolerance,traj_err,loc_err,avg_err_cm,unrefined_avg_err_cm,diversity,"
            "mmodality,fid,mean_iterations,seconds_per_batch,seconds_per_frame,inputs");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  const auto dir = std::filesystem::temp_directory_path() / "tlc_eval_test";
  std::filesystem::remove_all(dir);
  r.write(dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "results.csv"));
  std::ifstream in(dir / "results.json");
  EXPECT_EQ(nlohmann::json::parse(in)["rows"].size(), 8u);
}

TEST(Suite, DeterministicApartFromTiming) {
  const Fixture& f = fixture();
  EvalSuiteConfig c = small_suite();
  c.selections = {"all"};
  c.mask_rates = {0.5};
  const EvalReport a = run_eval_suite(c, {{"part", &f.models}}, f.corpus, f.corpus.test, 3);
  const EvalReport b = run_eval_suite(c, {{"part", &f.models}}, f.corpus, f.corpus.test, 3);
  EXPECT_EQ(a.rows[0].per_input_avg_err_cm, b.rows[0].per_input_avg_err_cm);
  EXPECT_EQ(a.rows[0].mmodality, b.rows[0].mmodality);
  EXPECT_EQ(a.rows[0].diversity, b.rows[0].diversity);
}

TEST(Suite, MissingModelIsALoadError) {
  const Fixture& f = fixture();
  EXPECT_THROW(run_eval_suite(small_suite(), {{"none", nullptr}}, f.corpus, f.corpus.test, 1), LoadError);
  EXPECT_THROW(run_eval_suite(small_suite(), {}, f.corpus, f.corpus.test, 1), ConfigError);
}

TEST(Independence, SplitOnly) {
  const Fixture& f = fixture();
  const Mat x = data::normalize(f.corpus.samples[0].motion.features, f.corpus.stats);
  const IndependenceReport part = group_independence(f.models.codec, x);
  EXPECT_TRUE(part.independent);
  for (int a = 0; a < 6; ++a) EXPECT_GT(part.leakage[a][a], 0.0);
  vq::VqvaeConfig vc = f.models.codec.config();
  vc.split = false;
  const vq::Codec unsplit(vc, motion::SkeletonSpec::humanoid22(), 5);
  EXPECT_FALSE(group_independence(unsplit, x).independent);
}

TEST(IkAblation, IkKeepsTheComplementAndLatentRefinementMovesIt) {
  const Fixture& f = fixture();
  opt::OptimizeConfig oc;
  oc.max_iterations = 30;
  const IkAblationReport r = ik_ablation(f.models, f.corpus, f.corpus.test, 0.5, 3, oc, opt::IkConfig{}, 4);
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.inputs, 3);
  EXPECT_EQ(r.rows[0].method, "no-opt");
  EXPECT_EQ(r.rows[0].complement_drift_cm, 0.0);
  EXPECT_EQ(r.rows[1].method, "joint-ik");
  EXPECT_TRUE(r.rows[1].complement_identical);
  EXPECT_EQ(r.rows[1].complement_drift_cm, 0.0);
  EXPECT_LT(r.rows[1].avg_err_cm, r.rows[0].avg_err_cm);
  EXPECT_EQ(r.rows[2].method, "latent-opt");
  EXPECT_FALSE(r.rows[2].complement_identical);
  EXPECT_GT(r.rows[2].complement_drift_cm, 0.0);
  EXPECT_LT(r.rows[2].avg_err_cm, r.rows[0].avg_err_cm);
}

}  // namespace
}  // namespace tlc::eval
