// SPDX-License-Identifier: Apache-2.0
#include "tlc/service/config.hpp"

#include <cstdlib>

#include "tlc/common/error.hpp"
#include "tlc/data/io.hpp"

namespace tlc::app {

using nlohmann::json;

AppConfig AppConfig::for_profile(std::string_view name) {
  AppConfig c;
  if (name == "toy") {
    c.profile = "toy";
    c.data.max_length = 64;
    c.corpus_size = 200;
    c.mtt.max_length = 64;
    c.mtt.epochs = 40;
    c.eval.selections = {"all", "root", "left_hand", "right_hand", "left_hand,right_hand"};
    c.eval.mask_rates = {0.0, 0.25, 0.5, 0.75};
    c.eval.tolerances = {1e-4, 1e-5, 1e-6};
    c.eval.samples_per_input = 2;
    c.eval.max_inputs = 10;
    return c;
  }
  if (name == "paper") {
    c.profile = "paper";
    c.data.max_length = 196;
    c.corpus_size = 4000;
    c.vq.codebook_size = 126;
    c.vq.code_dim = 126;
    c.vq.encoder_width = 512;
    c.vq.decoder_width = 512;
    c.vq.res_blocks = 1;
    c.vq.activation = nn::Activation::relu;
    c.vq.batch_size = 32;
    c.mtt.max_length = 196;
    c.mtt.stage1_width = 512;
    c.mtt.stage1_layers = 4;
    c.mtt.stage2_width = 256;
    c.mtt.stage2_layers = 3;
    c.mtt.heads = 8;
    c.mtt.batch_size = 32;
    c.mtt.epochs = 200;
    c.eval.selections = {"all", "root", "head", "left_hand", "right_hand", "left_foot", "right_foot"};
    c.eval.mask_rates = {0.0, 0.25, 0.5, 0.75};
    c.eval.tolerances = {1e-4, 1e-5, 1e-6};
    c.eval.samples_per_input = 10;
    c.model_dir = "models/paper";
    c.data_dir = "data/paper";
    c.out_dir = "results/paper";
    return c;
  }
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected toy or paper)");
}

void AppConfig::validate() const {
  data.validate();
  vq.validate();
  mtt.validate();
  optimize.validate();
  eval.validate();
  if (corpus_size < 1) throw ConfigError("corpus_size must be positive");
  if (mtt.waypoints_per_token != vq.downsample)
    throw ConfigError("mtt.waypoints_per_token must equal vqvae.downsample");
  if (mtt.max_length < data.max_length)
    throw ConfigError("mtt.max_length must cover data.max_length");
  if (data.max_length % vq.downsample != 0)
    throw ConfigError("data.max_length must be a multiple of vqvae.downsample");
  if (ik.steps < 0 || !(ik.step_size > 0.0)) throw ConfigError("ik settings out of range");
  if (service.workers < 1) throw ConfigError("service.workers must be at least 1");
  if (service.port < 0 || service.port > 65535) throw ConfigError("service.port out of range");
  if (service.max_samples < 1) throw ConfigError("service.max_samples must be at least 1");
}

json AppConfig::to_json() const {
  return {{"profile", profile},
          {"seed", seed},
          {"data",
           {{"max_length", data.max_length},
            {"min_length", data.min_length},
            {"fps", data.fps},
            {"corpus_size", corpus_size}}},
          {"vqvae", vq.to_json()},
          {"mtt", mtt.to_json()},
          {"optimize", optimize.to_json()},
          {"ik", {{"steps", ik.steps}, {"step_size", ik.step_size}}},
          {"eval", eval.to_json()},
          {"service",
           {{"host", service.host},
            {"port", service.port},
            {"workers", service.workers},
            {"static_dir", service.static_dir},
            {"max_samples", service.max_samples}}},
          {"paths",
           {{"model_dir", model_dir.string()},
            {"data_dir", data_dir.string()},
            {"out_dir", out_dir.string()}}}};
}

AppConfig AppConfig::from_json(const json& j, std::string_view fallback_profile) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  AppConfig c = for_profile(j.value("profile", std::string(fallback_profile)));
  const json defaults = c.to_json();
  auto section = [&](const char* key) {
    json merged = defaults.at(key);
    if (j.contains(key)) {
      if (!j.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
      merged.update(j.at(key));
    }
    return merged;
  };
  try {
    c.seed = j.value("seed", c.seed);
    const json d = section("data");
    c.data.max_length = d.at("max_length");
    c.data.min_length = d.at("min_length");
    c.data.fps = d.at("fps");
    c.corpus_size = d.at("corpus_size");
    c.vq = vq::VqvaeConfig::from_json(section("vqvae"));
    c.mtt = mtt::MttConfig::from_json(section("mtt"));
    c.optimize = opt::OptimizeConfig::from_json(section("optimize"));
    const json ik = section("ik");
    c.ik.steps = ik.at("steps");
    c.ik.step_size = ik.at("step_size");
    c.eval = eval::EvalSuiteConfig::from_json(section("eval"));
    const json s = section("service");
    c.service.host = s.at("host");
    c.service.port = s.at("port");
    c.service.workers = s.at("workers");
    c.service.static_dir = s.at("static_dir");
    c.service.max_samples = s.at("max_samples");
    const json p = section("paths");
    c.model_dir = p.at("model_dir").get<std::string>();
    c.data_dir = p.at("data_dir").get<std::string>();
    c.out_dir = p.at("out_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

AppConfig load_config(const std::optional<std::filesystem::path>& path, const std::string& profile_override) {
  json j = json::object();
  if (path) {
    try {
      j = data::read_json(*path);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (!profile_override.empty()) j["profile"] = profile_override;
  AppConfig c = AppConfig::from_json(j);
  if (const char* env = std::getenv("TLC_MODEL_DIR"); env && *env) c.model_dir = env;
  return c;
}

}  // namespace tlc::app
