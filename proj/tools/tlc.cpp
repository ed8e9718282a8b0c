// SPDX-License-Identifier: Apache-2.0
// Command-line front end: data generation, training, generation, evaluation,
// ablations and the HTTP job service.
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tlc/common/error.hpp"
#include "tlc/data/corpus.hpp"
#include "tlc/data/io.hpp"
#include "tlc/eval/suite.hpp"
#include "tlc/mtt/mtt.hpp"
#include "tlc/nn/container.hpp"
#include "tlc/opt/refine.hpp"
#include "tlc/service/config.hpp"
#include "tlc/service/http.hpp"
#include "tlc/service/jobs.hpp"
#include "tlc/service/request.hpp"
#include "tlc/vq/codec.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tlc;

namespace {

struct Common {
  std::string config_path;
  std::string profile;
  std::optional<std::uint64_t> seed;
};

app::AppConfig resolve(const Common& c) {
  std::optional<fs::path> path;
  if (!c.config_path.empty()) path = c.config_path;
  app::AppConfig cfg = app::load_config(path, c.profile);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path corpus_file(const app::AppConfig& cfg) { return cfg.data_dir / "corpus.jsonl"; }
fs::path codec_dir(const app::AppConfig& cfg) { return cfg.model_dir / "codec"; }
fs::path unsplit_dir(const app::AppConfig& cfg) {
  return cfg.model_dir.parent_path() / (cfg.model_dir.filename().string() + "-unsplit");
}

data::Corpus load_corpus(const app::AppConfig& cfg) {
  const fs::path file = corpus_file(cfg);
  if (!fs::exists(file)) throw InputError("no corpus at " + file.string() + " (run gen-data first)");
  std::uint64_t seed = cfg.seed;
  if (fs::exists(cfg.data_dir / "meta.json")) seed = data::read_json(cfg.data_dir / "meta.json").at("seed");
  return data::assemble_corpus(data::read_corpus(file, motion::SkeletonSpec::humanoid22()), seed);
}

void log_epoch(const char* what, int epoch, double loss) {
  std::fprintf(stderr, "%s epoch %d loss %.5f\n", what, epoch, loss);
}

int cmd_gen_data(const app::AppConfig& cfg) {
  const auto skeleton = motion::SkeletonSpec::humanoid22();
  const data::Corpus corpus = data::generate_corpus(cfg.data, cfg.corpus_size, cfg.seed, skeleton);
  fs::create_directories(cfg.data_dir);
  data::write_corpus(corpus_file(cfg), corpus, motion::PoseFeatureLayout::for_skeleton(skeleton));
  data::write_json(cfg.data_dir / "meta.json",
                   {{"seed", cfg.seed}, {"count", cfg.corpus_size}, {"max_length", cfg.data.max_length}});
  std::cout << "wrote " << corpus.samples.size() << " clips to " << corpus_file(cfg).string() << "\n";
  return 0;
}

vq::Codec train_codec_stage(const app::AppConfig& cfg, const data::Corpus& corpus, const vq::VqvaeConfig& vqc) {
  vq::TrainedCodec t = vq::train_vqvae(corpus, vqc, cfg.seed, motion::SkeletonSpec::humanoid22(),
                                       [](int e, double l) { log_epoch("vqvae", e, l); });
  std::vector<const data::CorpusSample*> test;
  for (int i : corpus.test) test.push_back(&corpus.samples[i]);
  if (!test.empty())
    std::cout << "test reconstruction MPJPE " << 100.0 * vq::reconstruction_mpjpe(t.codec, test) << " cm\n";
  return std::move(t.codec);
}

opt::ModelSet train_mtt_stage(const app::AppConfig& cfg, const data::Corpus& corpus, vq::Codec codec) {
  mtt::Mtt model(cfg.mtt, codec.config(), cfg.seed);
  mtt::train_mtt(model, codec, corpus, cfg.seed, [](int e, double l) { log_epoch("mtt", e, l); });
  return opt::ModelSet{std::move(codec), std::move(model)};
}

int cmd_train_vqvae(const app::AppConfig& cfg) {
  const data::Corpus corpus = load_corpus(cfg);
  vq::Codec codec = train_codec_stage(cfg, corpus, cfg.vq);
  nn::Container c;
  codec.save(c, "vq.");
  c.save(codec_dir(cfg));
  std::cout << "saved codec to " << codec_dir(cfg).string() << "\n";
  return 0;
}

int cmd_train_mtt(const app::AppConfig& cfg) {
  const data::Corpus corpus = load_corpus(cfg);
  if (!fs::exists(codec_dir(cfg))) throw LoadError("no codec at " + codec_dir(cfg).string());
  vq::Codec codec = vq::Codec::load(nn::Container::load(codec_dir(cfg)), "vq.");
  const opt::ModelSet models = train_mtt_stage(cfg, corpus, std::move(codec));
  models.save(cfg.model_dir);
  std::cout << "saved models to " << cfg.model_dir.string() << " (digest "
            << nn::container_digest(cfg.model_dir) << ")\n";
  return 0;
}

int cmd_generate(const app::AppConfig& cfg, const std::string& text, const std::string& traj_file,
                 std::optional<double> tol, int samples, const std::string& out) {
  const service::LoadedModel loaded = service::load_model_dir(cfg.model_dir);
  json body{{"text", text}, {"seed", cfg.seed}, {"num_samples", samples}};
  if (!traj_file.empty()) body["trajectory"] = data::read_json(traj_file);
  if (tol) body["optimize"] = {{"tolerance", *tol}};
  service::RequestLimits limits;
  limits.max_length = loaded.models->transformer.config().max_length;
  limits.downsample = loaded.models->codec.config().downsample;
  limits.max_samples = std::max(samples, cfg.service.max_samples);
  limits.defaults = cfg.optimize;
  const service::GenerationRequest r = service::parse_request(body, limits);
  opt::GenerateOptions options;
  options.num_samples = r.num_samples;
  const auto generated = opt::generate_motion(r.text, r.trajectory, *loaded.models, r.seed, r.optimize, options);
  const json result = service::result_to_json(generated, *loaded.models);
  if (out.empty()) {
    std::cout << result.dump() << "\n";
  } else {
    data::write_json(out, result);
    std::cout << "wrote " << generated.size() << " motion(s) to " << out << "\n";
  }
  if (result.contains("control"))
    std::cerr << "avg_err_cm " << result["control"]["avg_err_cm"].get<double>() << "\n";
  return 0;
}

int cmd_eval(const app::AppConfig& cfg) {
  const data::Corpus corpus = load_corpus(cfg);
  const opt::ModelSet models = opt::ModelSet::load(cfg.model_dir);
  eval::EvalSuiteConfig ec = cfg.eval;
  ec.max_iterations = cfg.optimize.max_iterations;
  const eval::EvalReport report = eval::run_eval_suite(ec, {{"part", &models}}, corpus, corpus.test, cfg.seed);
  report.write(cfg.out_dir);
  std::cout << report.to_csv();
  return 0;
}

int cmd_ablate(const app::AppConfig& cfg) {
  const data::Corpus corpus = load_corpus(cfg);
  const opt::ModelSet part = opt::ModelSet::load(cfg.model_dir);
  const fs::path udir = unsplit_dir(cfg);
  std::optional<opt::ModelSet> unsplit;
  if (fs::exists(udir / "manifest.json")) {
    unsplit = opt::ModelSet::load(udir);
  } else {
    std::cerr << "training unsplit variant into " << udir.string() << "\n";
    vq::VqvaeConfig vqc = cfg.vq;
    vqc.split = false;
    unsplit = train_mtt_stage(cfg, corpus, train_codec_stage(cfg, corpus, vqc));
    unsplit->save(udir);
  }
  eval::EvalSuiteConfig ec = cfg.eval;
  ec.max_iterations = cfg.optimize.max_iterations;
  const eval::EvalReport report =
      eval::run_eval_suite(ec, {{"part", &part}, {"unsplit", &*unsplit}}, corpus, corpus.test, cfg.seed);

  Mat probe = data::normalize(corpus.samples[corpus.test.empty() ? 0 : corpus.test.front()].motion.features,
                              corpus.stats);
  const eval::IndependenceReport ip = eval::group_independence(part.codec, probe);
  const eval::IndependenceReport iu = eval::group_independence(unsplit->codec, probe);
  const eval::IkAblationReport ik = eval::ik_ablation(part, corpus, corpus.test, 0.5, ec.max_inputs,
                                                      cfg.optimize, cfg.ik, cfg.seed);
  report.write(cfg.out_dir / "ablation");
  data::write_json(cfg.out_dir / "ablation" / "structure.json",
                   {{"independence", {{"part", ip.to_json()}, {"unsplit", iu.to_json()}}},
                    {"ik", ik.to_json()}});
  std::cout << report.to_csv();
  std::cout << "independent: part=" << ip.independent << " unsplit=" << iu.independent << "\n";
  for (const auto& row : ik.rows)
    std::cout << row.method << " avg_err_cm=" << row.avg_err_cm << " complement_drift_cm=" << row.complement_drift_cm
              << " complement_identical=" << row.complement_identical << "\n";
  return 0;
}

service::HttpServer* g_server = nullptr;

int cmd_serve(const app::AppConfig& cfg, std::optional<int> port) {
  service::JobServiceConfig jc;
  jc.workers = cfg.service.workers;
  jc.max_samples = cfg.service.max_samples;
  jc.optimize = cfg.optimize;
  service::JobService jobs(jc);
  if (fs::exists(cfg.model_dir / "manifest.json")) {
    jobs.set_model(service::load_model_dir(cfg.model_dir));
    std::cerr << "loaded model " << jobs.model()->digest << "\n";
  } else {
    std::cerr << "no model at " << cfg.model_dir.string() << "; POST /api/v1/model to load one\n";
  }
  service::HttpServer server(jobs, cfg.service.static_dir);
  const int bound = server.bind(cfg.service.host, port.value_or(cfg.service.port));
  std::cerr << "listening on http://" << cfg.service.host << ":" << bound << "\n";
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  server.listen();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Trajectory- and language-controlled motion synthesis"};
  cli.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--profile", common.profile, "Profile defaults")->check(CLI::IsMember({"toy", "paper"}));
    sub->add_option("--seed", common.seed, "Master seed");
  };

  auto* gen_data = cli.add_subcommand("gen-data", "Generate the synthetic captioned corpus");
  auto* train_vq = cli.add_subcommand("train-vqvae", "Train the part-based codec");
  auto* train_mtt = cli.add_subcommand("train-mtt", "Train the masked trajectory transformer");
  auto* generate = cli.add_subcommand("generate", "Generate motions from text and/or a trajectory");
  auto* evaluate = cli.add_subcommand("eval", "Run the evaluation suite on the test split");
  auto* serve = cli.add_subcommand("serve", "Run the HTTP job service");
  auto* ablate = cli.add_subcommand("ablate", "Part-based vs unsplit codec and IK ablations");
  for (auto* sub : {gen_data, train_vq, train_mtt, generate, evaluate, serve, ablate}) add_common(sub);

  std::string text, traj_file, out;
  std::optional<double> tol;
  int samples = 1;
  generate->add_option("--text", text, "Motion description");
  generate->add_option("--traj", traj_file, "Trajectory spec JSON")->check(CLI::ExistingFile);
  generate->add_option("--tol", tol, "Optimizer tolerance")->check(CLI::PositiveNumber);
  generate->add_option("--samples", samples, "Number of motions")->check(CLI::Range(1, 1000));
  generate->add_option("--out", out, "Output JSON (stdout when omitted)");
  std::optional<int> port;
  serve->add_option("--port", port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));

  CLI11_PARSE(cli, argc, argv);
  try {
    const app::AppConfig cfg = resolve(common);
    if (gen_data->parsed()) return cmd_gen_data(cfg);
    if (train_vq->parsed()) return cmd_train_vqvae(cfg);
    if (train_mtt->parsed()) return cmd_train_mtt(cfg);
    if (generate->parsed()) return cmd_generate(cfg, text, traj_file, tol, samples, out);
    if (evaluate->parsed()) return cmd_eval(cfg);
    if (serve->parsed()) return cmd_serve(cfg, port);
    if (ablate->parsed()) return cmd_ablate(cfg);
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
