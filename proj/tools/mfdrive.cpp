#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mf/autodiff/records.hpp"
#include "mf/eval/evaluate.hpp"
#include "mf/scenes/dataset.hpp"
#include "mf/train/grad_suite.hpp"
#include "mf/train/trainer.hpp"

using namespace mf;

namespace {

enum Exit { ok = 0, usage = 1, data_error = 2, numeric = 3 };

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool paper_dims = false;
  bool dump_config = false;
};

train::RunConfig build_config(const Common& c) {
  train::RunConfig cfg;
  if (!c.config_path.empty()) cfg.load_file(c.config_path);
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw train::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.apply_env();
  if (c.paper_dims) cfg.set("model.dims", "paper");
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
}

std::string out_path(const train::RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.text("out_dir")) / name).string();
}

int gen_data(const train::RunConfig& cfg) {
  const auto dims = train::dims_from(cfg);
  const auto setup = train::sensors_from(dims);
  const auto mix = scenes::TopologyMix::parse(cfg.text("data.topology_mix"));
  const auto count = cfg.integer("data.count");
  if (count < 1) throw train::ConfigError("data.count must be at least 1");
  const auto base = mix64(static_cast<std::uint64_t>(cfg.integer("seed")));
  std::vector<scenes::SceneSample> samples;
  for (std::int64_t i = 0; i < count; ++i) {
    samples.push_back(scenes::generate_scene(scenes::random_spec(base + std::uint64_t(i), mix, setup), setup));
  }
  const auto path = cfg.text("data.train");
  if (auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
  scenes::write_dataset(samples, path);
  std::printf("wrote %lld samples to %s\n", static_cast<long long>(count), path.c_str());
  return ok;
}

int run_phase(const train::RunConfig& cfg, train::Phase phase, bool resume) {
  const std::string tag = phase == train::Phase::pretrain ? "pretrain" : "train";
  train::Trainer trainer(phase, cfg, scenes::read_dataset(cfg.text("data.train")));
  const auto ckpt = out_path(cfg, tag + ".mfck");
  if (resume && std::filesystem::exists(ckpt)) {
    trainer.resume(ckpt);
    std::printf("resumed %s at step %lld\n", ckpt.c_str(), static_cast<long long>(trainer.steps_done()));
  } else if (phase == train::Phase::train && !cfg.text("train.init_from").empty()) {
    const auto n = trainer.init_from(cfg.text("train.init_from"));
    std::printf("initialized %zu tensors from %s\n", n, cfg.text("train.init_from").c_str());
  }
  const auto csv = out_path(cfg, tag + "_loss.csv");
  try {
    auto s = train::run_training(trainer, csv, ckpt, cfg.integer("train.checkpoint_every"));
    if (!s.history.empty()) {
      std::printf("%s: %zu steps, total loss %.6g -> %.6g\n", tag.c_str(), s.history.size(), s.history.front().total,
                  s.history.back().total);
    }
  } catch (const train::NumericError& e) {
    std::fprintf(stderr, "error: %s; last checkpoint kept at %s\n", e.what(), ckpt.c_str());
    return numeric;
  }
  std::printf("checkpoint %s, losses %s\n", ckpt.c_str(), csv.c_str());
  return ok;
}

std::unique_ptr<model::Model<float>> load_model(const train::RunConfig& cfg) {
  const auto path = cfg.text("checkpoint");
  if (path.empty()) throw std::runtime_error("no checkpoint given (set checkpoint or pass --checkpoint)");
  if (!std::filesystem::exists(path)) throw std::runtime_error("checkpoint '" + path + "' not found");
  auto m = std::make_unique<model::Model<float>>(train::dims_from(cfg), static_cast<std::uint64_t>(cfg.integer("seed")));
  train::load_params(m->params(), path, true);
  return m;
}

int run_eval(const train::RunConfig& cfg) {
  const auto dims = train::dims_from(cfg);
  const auto scen = eval::eval_scenarios(cfg, train::sensors_from(dims));
  const auto policy = cfg.text("eval.policy");
  std::unique_ptr<model::Model<float>> m;
  eval::PolicyFactory factory;
  if (policy == "oracle") {
    factory = [](std::size_t) { return control::oracle_policy(); };
  } else if (policy == "model") {
    m = load_model(cfg);
    factory = [&](std::size_t id) { return eval::model_policy(*m, eval::unmasked(dims.tokens()), id); };
  } else {
    throw train::ConfigError("eval.policy must be model or oracle");
  }
  const auto r = eval::evaluate(factory, scen, train::controller_from(cfg), train::penalties_from(cfg));
  const auto path = out_path(cfg, "eval.csv");
  write_text(path, eval::eval_csv(r));
  for (const auto& log : r.logs) write_text(out_path(cfg, "route_" + std::to_string(log.route_id) + ".csv"),
                                            control::route_log_csv(log));
  std::printf("DS %s  RC %s  IS %s  failures %zu  (%s)\n", eval::format_double(r.ds).c_str(),
              eval::format_double(r.rc).c_str(), eval::format_double(r.is).c_str(), r.failures, path.c_str());
  return ok;
}

int run_sweep(const train::RunConfig& cfg) {
  const auto dims = train::dims_from(cfg);
  const auto m = load_model(cfg);
  eval::SweepOptions opt;
  opt.ratios = cfg.reals("sweep.ratios");
  if (cfg.integer("sweep.repeats") < 1) throw train::ConfigError("sweep.repeats must be at least 1");
  opt.repeats = static_cast<std::size_t>(cfg.integer("sweep.repeats"));
  opt.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
  for (double r : opt.ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw train::ConfigError("sweep.ratios must lie in [0, 1)");
  }
  const auto rows = eval::mask_robustness_sweep(*m, eval::eval_scenarios(cfg, train::sensors_from(dims)),
                                                train::controller_from(cfg), train::penalties_from(cfg), opt);
  const auto csv = eval::sweep_csv(rows);
  write_text(out_path(cfg, "sweep.csv"), csv);
  std::fputs(csv.c_str(), stdout);
  return ok;
}

int run_grad_check(const train::RunConfig& cfg) {
  std::vector<std::uint64_t> seeds;
  for (std::int64_t i = 0; i < cfg.integer("grad.seeds"); ++i) seeds.push_back(std::uint64_t(cfg.integer("seed") + i));
  const auto rows = train::run_grad_suite(seeds);
  const auto csv = train::grad_rows_to_csv(rows);
  write_text(out_path(cfg, "grad_check.csv"), csv);
  std::fputs(csv.c_str(), stdout);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.passed;
  std::printf("%zu/%zu checks within %g\n", rows.size() - failed, rows.size(), train::kGradTolerance);
  return failed ? numeric : ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mfdrive: masked token fusion driving agent"};
  app.require_subcommand(0, 1);
  Common common;
  app.add_option("-c,--config", common.config_path, "key = value config file");
  app.add_option("--set", common.overrides, "key=value override (repeatable)");
  app.add_flag("--paper-dims", common.paper_dims, "full-size model dimensions");
  app.add_flag("--dump-config", common.dump_config, "print the resolved configuration and exit");

  std::string seed, count, out, mix, checkpoint, data, init_from, policy;
  bool resume = false;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen->add_option("--count", count, "number of samples");
  gen->add_option("--seed", seed, "dataset seed");
  gen->add_option("--out", out, "output .mfds path");
  gen->add_option("--topology-mix", mix, "e.g. straight=1,curve=1,intersection=1");
  auto* pre = app.add_subcommand("pretrain", "masked pretraining");
  auto* tr = app.add_subcommand("train", "imitation training");
  for (auto* sub : {pre, tr}) {
    sub->add_option("--data", data, "training dataset");
    sub->add_option("--out-dir", out, "run directory");
    sub->add_flag("--resume", resume, "continue from the run directory's checkpoint");
  }
  tr->add_option("--init-from", init_from, "initialize from a (pretraining) checkpoint");
  auto* ev = app.add_subcommand("eval", "closed-loop evaluation");
  ev->add_option("--policy", policy, "model | oracle");
  auto* sw = app.add_subcommand("sweep-mask", "mask-ratio robustness sweep");
  for (auto* sub : {ev, sw}) {
    sub->add_option("--checkpoint", checkpoint, "model checkpoint");
    sub->add_option("--out-dir", out, "report directory");
  }
  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient suite");
  gc->add_option("--out-dir", out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : usage;
  }

  try {
    auto cfg = build_config(common);
    auto opt_set = [&](const std::string& key, const std::string& v) {
      if (!v.empty()) cfg.set(key, v);
    };
    opt_set("seed", seed);
    opt_set("data.count", count);
    opt_set("data.topology_mix", mix);
    opt_set("checkpoint", checkpoint);
    opt_set("train.init_from", init_from);
    opt_set("eval.policy", policy);
    if (gen->parsed()) opt_set("data.train", out);
    else opt_set("out_dir", out);
    opt_set("data.train", data);

    if (common.dump_config) {
      std::fputs(cfg.dump().c_str(), stdout);
      return ok;
    }
    if (gen->parsed()) {
      scenes::TopologyMix::parse(cfg.text("data.topology_mix"));
      return gen_data(cfg);
    }
    if (pre->parsed()) return run_phase(cfg, train::Phase::pretrain, resume);
    if (tr->parsed()) return run_phase(cfg, train::Phase::train, resume);
    if (ev->parsed()) return run_eval(cfg);
    if (sw->parsed()) return run_sweep(cfg);
    if (gc->parsed()) return run_grad_check(cfg);
    std::fputs(app.help().c_str(), stderr);
    return usage;
  } catch (const train::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return usage;
  } catch (const scenes::SceneError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return usage;
  } catch (const train::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return numeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return data_error;
  }
}
