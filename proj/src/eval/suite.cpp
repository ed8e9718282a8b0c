// SPDX-License-Identifier: Apache-2.0
#include "tlc/eval/suite.hpp"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "tlc/common/error.hpp"
#include "tlc/mtt/mtt.hpp"

namespace tlc::eval {

using motion::Group;
using motion::PartialTrajectory;
using nlohmann::json;

Selection Selection::parse(const std::string& spec) {
  Selection s;
  s.name = spec;
  if (spec == "all") {
    s.groups.assign(motion::kAllGroups.begin(), motion::kAllGroups.end());
    return s;
  }
  std::stringstream in(spec);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto g = motion::group_from_control_name(item);
    if (!g) throw ConfigError("unknown joint group '" + item + "' in selection '" + spec + "'");
    if (std::find(s.groups.begin(), s.groups.end(), *g) != s.groups.end())
      throw ConfigError("joint group '" + item + "' listed twice in selection '" + spec + "'");
    s.groups.push_back(*g);
  }
  if (s.groups.empty()) throw ConfigError("empty selection");
  return s;
}

void EvalSuiteConfig::validate() const {
  if (selections.empty() || mask_rates.empty() || tolerances.empty())
    throw ConfigError("evaluation grids must be non-empty");
  for (const auto& s : selections) Selection::parse(s);
  for (double r : mask_rates)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("mask rates must lie in [0, 1]");
  for (double t : tolerances)
    if (!(t > 0.0)) throw ConfigError("tolerances must be positive");
  if (samples_per_input < 1) throw ConfigError("samples_per_input must be at least 1");
  if (max_inputs < 0 || diversity_pairs < 1) throw ConfigError("max_inputs/diversity_pairs out of range");
  if (!(threshold_m > 0.0)) throw ConfigError("threshold must be positive");
  if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
}

json EvalSuiteConfig::to_json() const {
  return {{"selections", selections},         {"mask_rates", mask_rates},
          {"tolerances", tolerances},         {"samples_per_input", samples_per_input},
          {"max_inputs", max_inputs},         {"diversity_pairs", diversity_pairs},
          {"threshold_m", threshold_m},       {"refine", refine},
          {"max_iterations", max_iterations}};
}

EvalSuiteConfig EvalSuiteConfig::from_json(const json& j) {
  EvalSuiteConfig c;
  c.selections = j.value("selections", c.selections);
  c.mask_rates = j.value("mask_rates", c.mask_rates);
  c.tolerances = j.value("tolerances", c.tolerances);
  c.samples_per_input = j.value("samples_per_input", c.samples_per_input);
  c.max_inputs = j.value("max_inputs", c.max_inputs);
  c.diversity_pairs = j.value("diversity_pairs", c.diversity_pairs);
  c.threshold_m = j.value("threshold_m", c.threshold_m);
  c.refine = j.value("refine", c.refine);
  c.max_iterations = j.value("max_iterations", c.max_iterations);
  c.validate();
  return c;
}

json EvalRow::to_json() const {
  return {{"variant", variant},
          {"selection", selection},
          {"mask_rate", mask_rate},
          {"tolerance", tolerance},
          {"control", control.to_json()},
          {"unrefined", unrefined.to_json()},
          {"diversity", diversity},
          {"mmodality", mmodality},
          {"fid", fid},
          {"mean_iterations", mean_iterations},
          {"seconds_per_batch", seconds_per_batch},
          {"seconds_per_frame", seconds_per_frame},
          {"inputs", inputs},
          {"per_input_avg_err_cm", per_input_avg_err_cm},
          {"per_input_unrefined_avg_err_cm", per_input_unrefined_avg_err_cm}};
}

json EvalReport::to_json() const {
  json rows_json = json::array();
  for (const EvalRow& r : rows) rows_json.push_back(r.to_json());
  return {{"rows", rows_json}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "variant,selection,mask_rate,tolerance,traj_err,loc_err,avg_err_cm,unrefined_avg_err_cm,"
         "diversity,mmodality,fid,mean_iterations,seconds_per_batch,seconds_per_frame,inputs\n";
  out << std::setprecision(10);
  for (const EvalRow& r : rows) {
    out << r.variant << ",\"" << r.selection << "\"," << r.mask_rate << ',' << r.tolerance << ','
        << r.control.traj_err_fraction << ',' << r.control.loc_err_fraction << ','
        << r.control.avg_err_cm << ',' << r.unrefined.avg_err_cm << ',' << r.diversity << ','
        << r.mmodality << ',' << r.fid << ',' << r.mean_iterations << ',' << r.seconds_per_batch
        << ',' << r.seconds_per_frame << ',' << r.inputs << '\n';
  }
  return out.str();
}

void EvalReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "results.csv") << to_csv();
  std::ofstream(dir / "results.json") << to_json().dump(2) << '\n';
}

PartialTrajectory inference_trajectory(const data::CorpusSample& sample, const Selection& selection,
                                       double rate, std::uint64_t seed) {
  const int T = sample.full_trajectories.length();
  PartialTrajectory traj = sample.full_trajectories.restricted_to(selection.groups).resized(sample.true_length);
  if (rate > 0.0) {
    CounterRng rng = CounterRng::stream(seed, {0x6d61736bULL});
    traj = mtt::continuous_trajectory_mask(traj, rate, rng);
  }
  return traj.resized(T);
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<int> limited(const std::vector<int>& split, int max_inputs) {
  if (max_inputs <= 0 || max_inputs >= static_cast<int>(split.size())) return split;
  return {split.begin(), split.begin() + max_inputs};
}

Mat positions_of(const vq::Codec& codec, const Mat& latent) {
  return motion::recover_global_positions(data::denormalize(codec.decode(latent), codec.stats()),
                                          codec.layout());
}

}  // namespace

EvalReport run_eval_suite(const EvalSuiteConfig& config, const std::vector<Variant>& variants,
                          const data::Corpus& corpus, const std::vector<int>& split,
                          std::uint64_t seed) {
  config.validate();
  if (variants.empty()) throw ConfigError("no model variants to evaluate");
  for (const Variant& v : variants)
    if (!v.models) throw LoadError("variant '" + v.name + "' has no trained model");
  const std::vector<int> inputs = limited(split, config.max_inputs);
  if (inputs.empty()) throw InputError("evaluation split is empty");
  const vq::Codec& extractor = variants.front().models->codec;
  Mat real_features(inputs.size(), extractor.config().latent_width());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const data::CorpusSample& s = corpus.samples[inputs[k]];
    real_features.row(k) =
        metrics::fid_features(extractor, data::normalize(s.motion.features, extractor.stats()));
  }

  EvalReport report;
  for (const Variant& variant : variants) {
    const opt::ModelSet& models = *variant.models;
    const vq::Codec& codec = models.codec;
    for (const std::string& selection_name : config.selections) {
      const Selection selection = Selection::parse(selection_name);
      for (std::size_t ri = 0; ri < config.mask_rates.size(); ++ri) {
        const double rate = config.mask_rates[ri];
        for (double tolerance : config.tolerances) {
          opt::OptimizeConfig oc;
          oc.tolerance = tolerance;
          oc.max_iterations = config.max_iterations;
          opt::GenerateOptions go;
          go.num_samples = config.samples_per_input;
          go.refine = config.refine;

          EvalRow row;
          row.variant = variant.name;
          row.selection = selection.name;
          row.mask_rate = rate;
          row.tolerance = tolerance;
          row.inputs = static_cast<int>(inputs.size());
          std::vector<Mat> refined_positions, unrefined_positions;
          std::vector<const PartialTrajectory*> truths;
          std::vector<PartialTrajectory> truth_storage;
          truth_storage.reserve(inputs.size());
          std::vector<RowVec> first_samples;
          std::vector<std::vector<RowVec>> groups;
          Mat generated_features(inputs.size(), extractor.config().latent_width());
          double seconds = 0.0, iterations = 0.0;
          long frames = 0;
          for (std::size_t k = 0; k < inputs.size(); ++k) {
            const data::CorpusSample& sample = corpus.samples[inputs[k]];
            const std::uint64_t input_seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(inputs[k])));
            truth_storage.push_back(sample.full_trajectories.restricted_to(selection.groups)
                                        .resized(sample.true_length)
                                        .resized(sample.full_trajectories.length()));
            const PartialTrajectory traj = inference_trajectory(sample, selection, rate, mix64(input_seed + ri));
            const auto start = Clock::now();
            const auto out = opt::generate_motion(sample.text, traj, models, input_seed, oc, go);
            seconds += std::chrono::duration<double>(Clock::now() - start).count();
            std::vector<metrics::ControlCase> cases, coarse_cases;
            std::vector<RowVec> group;
            const std::size_t first = refined_positions.size();
            for (const opt::GeneratedSample& s : out) {
              refined_positions.push_back(s.positions);
              unrefined_positions.push_back(positions_of(codec, codec.lookup(s.codes).values));
              truths.push_back(&truth_storage.back());
              iterations += s.trace.iterations;
              frames += s.motion.length();
              group.push_back(
                  metrics::flatten(data::normalize(s.motion.features, codec.stats()), s.motion.length()));
            }
            for (std::size_t i = first; i < refined_positions.size(); ++i) {
              cases.push_back({&refined_positions[i], truths[i]});
              coarse_cases.push_back({&unrefined_positions[i], truths[i]});
            }
            row.per_input_avg_err_cm.push_back(
                metrics::control_accuracy(cases, codec.skeleton(), config.threshold_m).avg_err_cm);
            row.per_input_unrefined_avg_err_cm.push_back(
                metrics::control_accuracy(coarse_cases, codec.skeleton(), config.threshold_m).avg_err_cm);
            first_samples.push_back(group.front());
            generated_features.row(k) = metrics::fid_features(
                extractor, data::normalize(out.front().motion.features, extractor.stats()));
            groups.push_back(std::move(group));
          }
          std::vector<metrics::ControlCase> all, all_coarse;
          for (std::size_t i = 0; i < refined_positions.size(); ++i) {
            all.push_back({&refined_positions[i], truths[i]});
            all_coarse.push_back({&unrefined_positions[i], truths[i]});
          }
          row.control = metrics::control_accuracy(all, codec.skeleton(), config.threshold_m);
          row.unrefined = metrics::control_accuracy(all_coarse, codec.skeleton(), config.threshold_m);
          if (first_samples.size() >= 2) {
            CounterRng rng = CounterRng::stream(seed, {0x646976ULL});
            row.diversity = metrics::diversity(first_samples, rng, config.diversity_pairs);
            row.fid = metrics::fid_proxy(real_features, generated_features);
          }
          if (config.samples_per_input >= 2) row.mmodality = metrics::multimodality(groups);
          row.mean_iterations = iterations / refined_positions.size();
          row.seconds_per_batch = seconds / inputs.size();
          row.seconds_per_frame = seconds / static_cast<double>(frames);
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  return report;
}

json IndependenceReport::to_json() const {
  return {{"leakage", leakage}, {"independent", independent}};
}

IndependenceReport group_independence(const vq::Codec& codec, const Mat& normalized, double delta) {
  const motion::GroupPartition groups = motion::GroupPartition::by_groups(codec.skeleton(), codec.layout());
  const int slice = codec.config().code_dim;
  const Mat base = codec.encode(normalized).values;
  IndependenceReport r;
  r.independent = true;
  for (int k = 0; k < motion::kNumGroups; ++k) {
    Mat moved = normalized;
    for (int ch : groups.channels(k)) moved.col(ch).array() += delta;
    const Mat z = codec.encode(moved).values;
    std::vector<double> row;
    for (int b = 0; b < motion::kNumGroups; ++b) {
      const double leak = (z.middleCols(b * slice, slice) - base.middleCols(b * slice, slice)).cwiseAbs().maxCoeff();
      row.push_back(leak);
      if (b != k && leak != 0.0) r.independent = false;
    }
    r.leakage.push_back(std::move(row));
  }
  return r;
}

json IkAblationReport::to_json() const {
  json rows_json = json::array();
  for (const IkAblationRow& r : rows)
    rows_json.push_back({{"method", r.method},
                         {"avg_err_cm", r.avg_err_cm},
                         {"complement_drift_cm", r.complement_drift_cm},
                         {"complement_identical", r.complement_identical}});
  return {{"rows", rows_json}, {"inputs", inputs}};
}

IkAblationReport ik_ablation(const opt::ModelSet& models, const data::Corpus& corpus,
                             const std::vector<int>& split, double mask_rate, int max_inputs,
                             const opt::OptimizeConfig& optimize, const opt::IkConfig& ik,
                             std::uint64_t seed) {
  const std::vector<int> inputs = limited(split, max_inputs);
  if (inputs.empty()) throw InputError("evaluation split is empty");
  const vq::Codec& codec = models.codec;
  const motion::SkeletonSpec& sk = codec.skeleton();
  const int J = sk.num_joints();
  IkAblationReport report;
  report.rows = {{"no-opt"}, {"joint-ik"}, {"latent-opt"}};
  std::array<std::vector<metrics::ControlCase>, 3> cases;
  std::array<double, 3> drift{};
  long complement_frames = 0;
  std::vector<Mat> storage;
  std::vector<PartialTrajectory> trajs;
  storage.reserve(3 * inputs.size());
  trajs.reserve(inputs.size());
  for (int index : inputs) {
    const data::CorpusSample& sample = corpus.samples[index];
    const std::uint64_t input_seed = mix64(seed ^ mix64(static_cast<std::uint64_t>(index)));
    // Mask whole frames: draw the hidden frames once and apply them to every group.
    PartialTrajectory root_only =
        sample.full_trajectories.restricted_to({Group::root}).resized(sample.true_length);
    CounterRng rng = CounterRng::stream(input_seed, {0x696bULL});
    root_only = mtt::continuous_trajectory_mask(root_only, mask_rate, rng);
    PartialTrajectory traj = sample.full_trajectories;
    std::vector<int> hidden;
    for (int t = 0; t < sample.true_length; ++t)
      if (!root_only.specified(t, Group::root)) {
        hidden.push_back(t);
        for (Group g : motion::kAllGroups) traj.clear(t, g);
      }
    trajs.push_back(traj);
    const PartialTrajectory& stored = trajs.back();

    opt::GenerateOptions go;
    go.refine = false;
    const auto coarse = opt::generate_motion(sample.text, stored, models, input_seed, optimize, go);
    const motion::MotionClip& base = coarse.front().motion;
    const motion::MotionClip ik_clip = opt::joint_ik_baseline(base, stored, sk, ik);
    const opt::RefineResult refined =
        opt::refine_latent(codec.lookup(coarse.front().codes), stored, codec, codec.stats(), optimize);

    const std::array<const Mat*, 3> features = {&base.features, &ik_clip.features, &refined.motion.features};
    const Mat& base_pos = storage.emplace_back(motion::recover_global_positions(base.features, codec.layout()));
    for (int m = 0; m < 3; ++m) {
      const Mat& pos = m == 0 ? base_pos
                              : storage.emplace_back(motion::recover_global_positions(*features[m], codec.layout()));
      cases[m].push_back({&pos, &stored});
      for (int t : hidden) {
        if (features[m]->row(t) != base.features.row(t)) report.rows[m].complement_identical = false;
        for (int j = 0; j < J; ++j)
          drift[m] += (pos.block(t, 3 * j, 1, 3) - base_pos.block(t, 3 * j, 1, 3)).norm();
      }
    }
    complement_frames += static_cast<long>(hidden.size());
  }
  for (int m = 0; m < 3; ++m) {
    report.rows[m].avg_err_cm = metrics::control_accuracy(cases[m], sk).avg_err_cm;
    report.rows[m].complement_drift_cm = complement_frames ? 100.0 * drift[m] / (complement_frames * J) : 0.0;
  }
  report.inputs = static_cast<int>(inputs.size());
  return report;
}

}  // namespace tlc::eval
