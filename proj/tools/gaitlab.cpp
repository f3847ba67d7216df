// gaitlab command-line entry point.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "gaitlab/errors.hpp"
#include "gaitlab/json_io.hpp"
#include "gaitlab/metrics.hpp"
#include "gaitlab/refmotion.hpp"
#include "gaitlab/run_config.hpp"
#include "gaitlab/trace.hpp"
#include "gaitlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace gaitlab;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string preset;
};

RunConfig run_config(const Globals& g) {
  RunConfig rc = g.config.empty() ? default_run_config() : load_run_config(g.config, g.preset);
  if (g.config.empty() && !g.preset.empty()) rc.trainer = TrainerConfig::preset(g.preset, rc.phase);
  if (g.config.empty() && !g.preset.empty()) rc.trainer_preset = g.preset;
  if (g.seed) rc.trainer.seed = *g.seed;
  return rc;
}

std::string out_dir(const Globals& g, const char* fallback) {
  const std::string dir = g.out.empty() ? fallback : g.out;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir + "': " + ec.message());
  return dir;
}

std::vector<EpisodeTrace> load_traces(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in))
        if (e.path().extension() == ".json") found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) throw DataError("no trace files found");
  std::vector<EpisodeTrace> traces;
  for (const auto& f : files) traces.push_back(load_trace(f));
  return traces;
}

Json belt_json(const BeltSpeedEstimate& b) {
  Json j;
  j["speed_m_per_s"] = b.speed;
  j["intervals"] = Json::array();
  for (const auto& i : b.intervals) j["intervals"].push_back({{"begin", i.begin}, {"end", i.end}, {"speed", i.speed}});
  return j;
}

Json events_json(const GaitEvents& e) {
  Json j;
  const char* names[2] = {"left", "right"};
  for (int s = 0; s < 2; ++s)
    j[names[s]] = {{"heel_strikes", e.sides[s].strikes}, {"toe_offs", e.sides[s].offs}};
  return j;
}

int cmd_preprocess(const Globals& g, const std::string& input, bool overground, double cutoff, bool no_mirror) {
  ReferenceClip raw;
  if (!input.empty()) {
    raw = load_clip(input);
  } else {
    // Demonstration input: the configured synthetic clip in a treadmill frame.
    RunConfig rc = run_config(g);
    rc.clip.kind = "synthetic";
    rc.clip.synthetic.treadmill = true;
    raw = *make_resources(rc).clip;
  }
  PreprocessOptions opt;
  opt.treadmill = !overground;
  opt.filter_cutoff = cutoff;
  opt.mirror = !no_mirror;
  const PreprocessResult r = preprocess_clip(raw, opt);
  const std::string dir = out_dir(g, "preprocessed");
  save_clip(r.clip, (fs::path(dir) / "clip.csv").string());
  if (r.mirrored) save_clip(*r.mirrored, (fs::path(dir) / "clip_mirrored.csv").string());
  Json summary;
  summary["schema"] = "gaitlab.preprocess/1";
  summary["belt"] = belt_json(r.belt);
  summary["treadmill_converted"] = opt.treadmill;
  summary["filter_cutoff_hz"] = cutoff;
  summary["events"] = events_json(r.events);
  summary["frames"] = r.clip.frames();
  write_json_file(summary, (fs::path(dir) / "preprocess.json").string());
  std::printf("belt speed %.4f m/s, %d frames, %d/%d cycles -> %s\n", r.belt.speed, r.clip.frames(),
              r.events.sides[0].cycles(), r.events.sides[1].cycles(), dir.c_str());
  return 0;
}

int cmd_train(const Globals& g, const std::string& init_path, std::optional<long> steps) {
  RunConfig rc = run_config(g);
  if (!init_path.empty()) rc.init_checkpoint = init_path;
  if (steps) rc.trainer.total_steps = *steps;
  rc.trainer.validate();
  const EnvResources res = make_resources(rc);
  std::optional<PolicyCheckpoint> init;
  if (!rc.init_checkpoint.empty()) init = PolicyCheckpoint::load(rc.init_checkpoint);
  check_phase(rc.phase, res, rc.env, init.has_value());  // before any output exists

  const std::string dir = out_dir(g, "run");
  const fs::path metrics_path = fs::path(dir) / "metrics.csv";
  const bool fresh = !fs::exists(metrics_path) || fs::file_size(metrics_path) == 0;
  std::ofstream metrics(metrics_path, std::ios::app);
  if (!metrics) throw DataError("cannot open '" + metrics_path.string() + "'");
  // Appending: the header is written only once per file.
  TrainHooks hooks;
  bool header_done = false;
  hooks.on_log = [&](const TrainLogRow& row) {
    if (!header_done) {
      if (fresh) metrics << train_log_header() << '\n';
      header_done = true;
    }
    metrics << format_log_row(row) << '\n' << std::flush;
    std::fprintf(stderr, "step %ld  episodes %ld  return %.3f  length %.1f  alpha %.4g\n", row.step, row.episodes,
                 row.return_mean, row.length_mean, row.alpha);
  };

  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r =
      train(res, rc.env, rc.trainer, rc.phase, init ? &*init : nullptr, rc.fingerprint(), hooks);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path ck = fs::path(dir) / "checkpoint.glck";
  r.checkpoint.save(ck.string());
  Json s;
  s["schema"] = "gaitlab.train/1";
  s["phase"] = std::string(to_string(rc.phase));
  s["config"] = run_config_to_json(rc);
  s["config_fingerprint"] = rc.fingerprint();
  s["steps"] = rc.trainer.total_steps;
  s["total_steps"] = r.checkpoint.total_steps;
  s["episodes"] = r.episode_returns.size();
  s["random_return"] = r.random_return;
  s["final_return"] = r.final_return;
  s["exo_abs_mean_Nm"] = r.exo_abs_mean;
  s["exo_abs_max_Nm"] = r.exo_abs_max;
  s["exo_limit_Nm"] = r.exo_limit;
  s["exo_term_mean"] = r.exo_term_mean;
  s["wall_seconds"] = seconds;
  write_json_file(s, (fs::path(dir) / "train_summary.json").string());
  std::printf("final return %.4f (random %.4f) in %.1f s -> %s\n", r.final_return, r.random_return, seconds,
              ck.string().c_str());
  return 0;
}

int cmd_evaluate(const Globals& g, const std::string& checkpoint, int episodes, bool stochastic) {
  if (checkpoint.empty()) throw ConfigError("evaluate needs --checkpoint");
  const RunConfig rc = run_config(g);
  const PolicyCheckpoint ck = PolicyCheckpoint::load(checkpoint);
  const std::uint64_t seed = g.seed ? *g.seed : rc.trainer.seed;
  const EvalResult r = evaluate(ck, make_resources(rc), rc.env, episodes, !stochastic, seed, rc.fingerprint());
  const std::string dir = out_dir(g, "eval");
  const fs::path traces = fs::path(dir) / "traces";
  fs::create_directories(traces);
  for (size_t i = 0; i < r.traces.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "episode_%03zu.json", i);
    save_trace(r.traces[i], (traces / name).string());
  }
  Json s;
  s["schema"] = "gaitlab.eval/1";
  s["episodes"] = r.summary.episodes;
  s["deterministic"] = !stochastic;
  s["returns"] = r.summary.returns;
  s["lengths"] = r.summary.lengths;
  s["mean_return"] = r.summary.mean_return;
  s["mean_length"] = r.summary.mean_length;
  s["config_fingerprint"] = rc.fingerprint();
  write_json_file(s, (fs::path(dir) / "eval_summary.json").string());
  std::printf("%d episodes, mean return %.4f, mean length %.1f -> %s\n", r.summary.episodes, r.summary.mean_return,
              r.summary.mean_length, dir.c_str());
  return 0;
}

int cmd_report(const Globals& g, const std::vector<std::string>& inputs) {
  const RunConfig rc = run_config(g);
  const auto traces = load_traces(inputs);
  const auto clip = make_resources(rc).clip;
  const GaitReport r = build_report(traces, *clip);
  const std::string dir = g.out.empty() ? "report" : g.out;
  write_report(r, dir);
  std::printf("%d traces, %d steps, gross cost %.4f W/kg -> %s\n", r.traces, r.steps, r.gross_cost, dir.c_str());
  if (!r.tracking) std::fprintf(stderr, "tracking metrics skipped: %s\n", r.tracking_error.c_str());
  return 0;
}

int cmd_export_profiles(const Globals& g, const std::vector<std::string>& inputs) {
  const auto traces = load_traces(inputs);
  const TraceMeta& meta = traces.front().meta;
  const TorqueProfiles p = extract_torque_profiles(traces, meta.model_mass, affected_side(meta.mask));
  const std::string dir = out_dir(g, "profiles");
  const std::string path = (fs::path(dir) / "torque_profiles.csv").string();
  write_torque_profiles(p, path);
  for (const auto& [joint, ratio] : p.peak_ratio) std::printf("%s peak ratio %.4f\n", joint.c_str(), ratio);
  std::printf("-> %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Muscle-driven gait imitation toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration (gaitlab.run/1 JSON)");
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--preset", g.preset, "Trainer preset")->check(CLI::IsMember({"base", "finetune", "desk"}));

  auto* pre = app.add_subcommand("preprocess", "Treadmill conversion, filtering, mirroring and gait events");
  std::string input;
  bool overground = false, no_mirror = false;
  double cutoff = 6.0;
  pre->add_option("--input", input, "Raw clip CSV (default: synthetic treadmill clip from the config)");
  pre->add_flag("--overground", overground, "Input is already overground; skip belt-speed conversion");
  pre->add_option("--cutoff", cutoff, "Low-pass cutoff in Hz (0 disables)");
  pre->add_flag("--no-mirror", no_mirror, "Do not emit the mirrored clip");

  auto* tr = app.add_subcommand("train", "Train a policy for the configured phase");
  std::string init;
  std::optional<long> steps;
  tr->add_option("--init", init, "Initial checkpoint (required for fine-tuning phases)");
  tr->add_option("--steps", steps, "Override total environment steps");

  auto* ev = app.add_subcommand("evaluate", "Roll out a checkpoint and record traces");
  std::string checkpoint;
  int episodes = 10;
  bool stochastic = false;
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--episodes", episodes, "Episode count")->check(CLI::NonNegativeNumber);
  ev->add_flag("--stochastic", stochastic, "Sample actions instead of using the mean");

  auto* rep = app.add_subcommand("report", "Gait metrics and per-plot CSV export");
  std::vector<std::string> trace_inputs;
  rep->add_option("--traces", trace_inputs, "Trace files or directories")->required();

  auto* exp = app.add_subcommand("export-profiles", "Exo torque profiles over the gait cycle");
  exp->add_option("--traces", trace_inputs, "Trace files or directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*pre) return cmd_preprocess(g, input, overground, cutoff, no_mirror);
    if (*tr) return cmd_train(g, init, steps);
    if (*ev) return cmd_evaluate(g, checkpoint, episodes, stochastic);
    if (*rep) return cmd_report(g, trace_inputs);
    if (*exp) return cmd_export_profiles(g, trace_inputs);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
