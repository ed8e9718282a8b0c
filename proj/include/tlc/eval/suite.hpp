// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/data/corpus.hpp"
#include "tlc/metrics/metrics.hpp"
#include "tlc/opt/refine.hpp"

namespace tlc::eval {

/// Named set of controlled groups, parsed from "all" or a comma list of
/// control names such as "root,left_hand".
struct Selection {
  std::string name;
  std::vector<motion::Group> groups;

  static Selection parse(const std::string& spec);
};

struct EvalSuiteConfig {
  std::vector<std::string> selections = {"all"};
  std::vector<double> mask_rates = {0.0};
  std::vector<double> tolerances = {1e-6};
  int samples_per_input = 1;  // MModality needs at least 2
  int max_inputs = 0;         // 0 evaluates the whole split
  int diversity_pairs = 50;
  double threshold_m = metrics::kDefaultThreshold;
  bool refine = true;
  int max_iterations = 1000;

  void validate() const;
  nlohmann::json to_json() const;
  static EvalSuiteConfig from_json(const nlohmann::json& j);
};

struct Variant {
  std::string name;
  const opt::ModelSet* models = nullptr;
};

struct EvalRow {
  std::string variant;
  std::string selection;
  double mask_rate = 0.0;
  double tolerance = 0.0;
  metrics::ControlErrorReport control;    // refined output vs the full selected tracks
  metrics::ControlErrorReport unrefined;  // the sampled codes decoded directly
  double diversity = 0.0;
  double mmodality = -1.0;  // -1 when samples_per_input < 2
  double fid = -1.0;        // -1 with fewer than two inputs
  double mean_iterations = 0.0;
  double seconds_per_batch = 0.0;  // one batch = all samples of one input
  double seconds_per_frame = 0.0;
  int inputs = 0;
  std::vector<double> per_input_avg_err_cm;
  std::vector<double> per_input_unrefined_avg_err_cm;

  nlohmann::json to_json() const;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  nlohmann::json to_json() const;
  /// Header: variant,selection,mask_rate,tolerance,traj_err,loc_err,avg_err_cm,
  /// unrefined_avg_err_cm,diversity,mmodality,fid,mean_iterations,
  /// seconds_per_batch,seconds_per_frame,inputs
  std::string to_csv() const;
  /// Writes results.csv and results.json into `dir`.
  void write(const std::filesystem::path& dir) const;
};

/// Inference-time masking: the selected ground-truth tracks restricted to the
/// clip's true frames, then masked continuously at `rate`.
motion::PartialTrajectory inference_trajectory(const data::CorpusSample& sample,
                                               const Selection& selection, double rate,
                                               std::uint64_t seed);

/// One row per (variant, selection, mask rate, tolerance). Errors are measured
/// on every true frame of the selected ground-truth tracks, masked or not.
/// FID features come from the first variant's codec.
EvalReport run_eval_suite(const EvalSuiteConfig& config, const std::vector<Variant>& variants,
                          const data::Corpus& corpus, const std::vector<int>& split,
                          std::uint64_t seed);

/// Max absolute change of each latent slice when one group's input channels move.
struct IndependenceReport {
  std::vector<std::vector<double>> leakage;  // [perturbed group][latent slice]
  bool independent = false;                  // off-diagonal leakage exactly 0
  nlohmann::json to_json() const;
};
IndependenceReport group_independence(const vq::Codec& codec, const Mat& normalized, double delta = 0.5);

/// Latent refinement versus joint IK on frame-synchronously masked trajectories.
struct IkAblationRow {
  std::string method;           // "no-opt", "joint-ik", "latent-opt"
  double avg_err_cm = 0.0;      // at specified keyframes
  double complement_drift_cm = 0.0;  // mean key-joint displacement at unspecified frames
  bool complement_identical = true;  // unspecified frames bit-identical to the unrefined motion
};
struct IkAblationReport {
  std::vector<IkAblationRow> rows;
  int inputs = 0;
  nlohmann::json to_json() const;
};
IkAblationReport ik_ablation(const opt::ModelSet& models, const data::Corpus& corpus,
                             const std::vector<int>& split, double mask_rate, int max_inputs,
                             const opt::OptimizeConfig& optimize, const opt::IkConfig& ik,
                             std::uint64_t seed);

}  // namespace tlc::eval
