// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "tlc/data/corpus.hpp"
#include "tlc/eval/suite.hpp"
#include "tlc/mtt/mtt.hpp"
#include "tlc/opt/lbfgs.hpp"
#include "tlc/opt/refine.hpp"
#include "tlc/vq/codec.hpp"

namespace tlc::app {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 1;              // concurrent generation jobs
  std::string static_dir;       // served under /ui when set
  int max_samples = 16;
};

/// Every module configuration in one document. JSON layout:
///   {"profile", "seed", "data": {max_length, min_length, fps, corpus_size},
///    "vqvae": {...}, "mtt": {...}, "optimize": {...}, "ik": {steps, step_size},
///    "eval": {...}, "service": {...}, "paths": {model_dir, data_dir, out_dir}}
/// Keys left out keep the values of the selected profile.
struct AppConfig {
  std::string profile = "toy";
  std::uint64_t seed = 1;
  data::GeneratorConfig data;
  int corpus_size = 200;
  vq::VqvaeConfig vq;
  mtt::MttConfig mtt;
  opt::OptimizeConfig optimize;
  opt::IkConfig ik;
  eval::EvalSuiteConfig eval;
  ServiceConfig service;
  std::filesystem::path model_dir = "models/toy";
  std::filesystem::path data_dir = "data/toy";
  std::filesystem::path out_dir = "results/toy";

  /// "toy" (T = 64, |C| = d = 32) or "paper" (T = 196, |C| = d = 126).
  static AppConfig for_profile(std::string_view name);

  void validate() const;
  nlohmann::json to_json() const;
  /// Overlays `j` on the profile named by j["profile"] (or `fallback_profile`).
  static AppConfig from_json(const nlohmann::json& j, std::string_view fallback_profile = "toy");
};

/// Reads the config file if given, applies the profile override when
/// non-empty and finally TLC_MODEL_DIR.
AppConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::string& profile_override = "");

}  // namespace tlc::app
