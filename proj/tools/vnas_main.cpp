// Command-line surface for the grasping Q-network pipeline: dataset
// generation, supernet search, baseline/pruned training, evaluation,
// architecture export, and gradient auditing.

#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vnas/cem.hpp"
#include "vnas/common.hpp"
#include "vnas/config.hpp"
#include "vnas/dataset.hpp"
#include "vnas/eval.hpp"
#include "vnas/gradcheck.hpp"
#include "vnas/kernels.hpp"
#include "vnas/serialization.hpp"
#include "vnas/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vnas;

namespace {

// Exit codes, also documented in --help:
//   0 success, 1 runtime error (and gradcheck failure),
//   2 bad usage or config, 3 I/O failure, 4 numeric divergence.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Options {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string dataset_path;
  std::string out_path;
  std::int64_t steps = 0;
  int eval_episodes = 0;
  int threads = 0;
  std::string checkpoint_path;
  std::string spec_path;
  bool fresh = false;
  bool expert = false;
  bool random = false;
};

void add_common_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path,
                  "JSON run config; absent keys keep their defaults");
  cmd->add_option("--seed", o.seed, "root seed (overrides config)");
  cmd->add_option("--threads", o.threads, "worker threads for kernels")
      ->check(CLI::PositiveNumber);
}

// Whether this subcommand both defines `name` and saw it on the command line.
bool given(const CLI::App* cmd, const std::string& name) {
  const CLI::Option* opt = cmd->get_option_no_throw(name);
  return opt != nullptr && opt->count() > 0;
}

// Config file, then flag overrides, then validation.
RunConfig resolve_config(const CLI::App* cmd, const Options& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg = load_run_config(o.config_path);
  if (given(cmd, "--seed")) cfg.seed = o.seed;
  if (given(cmd, "--steps")) cfg.trainer.steps = o.steps;
  if (given(cmd, "--eval-episodes")) cfg.trainer.eval_episodes = o.eval_episodes;
  cfg.validate();
  if (o.threads > 0) kern::set_num_threads(o.threads);
  return cfg;
}

std::string utc_now() {
  char buf[32];
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Timestamps live only here so every other output is byte-reproducible.
void write_run_meta(const fs::path& dir, const std::string& command,
                    const RunConfig& cfg, const std::string& started) {
  json meta;
  meta["command"] = command;
  meta["seed"] = cfg.seed;
  meta["threads"] = kern::num_threads();
  meta["started"] = started;
  meta["finished"] = utc_now();
  atomic_write_file((dir / "run_meta.json").string(),
                    [&](std::ostream& out) { out << meta.dump(2) << "\n"; });
}

void print_json_line(const json& j) { std::printf("%s\n", j.dump().c_str()); }

int cmd_gen_data(const CLI::App* cmd, const Options& o) {
  const RunConfig cfg = resolve_config(cmd, o);
  const ReplayBuffer buf =
      generate_dataset(cfg.env, cfg.dataset.episodes,
                       cfg.dataset.expert_fraction, cfg.dataset.noise,
                       cfg.seed);
  save_dataset(o.out_path, buf);
  json line;
  line["path"] = o.out_path;
  line["episodes"] = buf.stats().episodes;
  line["transitions"] = buf.size();
  line["success_fraction"] = buf.stats().success_fraction;
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(buf.hash()));
  line["hash"] = hash;
  print_json_line(line);
  return kExitOk;
}

// Shared tail of search/train-baseline/retrain: run the trainer, write the
// final checkpoint and summary artifacts into the output directory.
int run_training(const std::string& command, const Options& o, RunConfig cfg,
                 QNetwork& net) {
  const std::string started = utc_now();
  const ReplayBuffer data = load_dataset(o.dataset_path);
  VNAS_CHECK(data.image_size() == cfg.network.image_size, ConfigError,
             "dataset frame size " + std::to_string(data.image_size()) +
                 " does not match the configured network");
  const fs::path out(o.out_path);
  fs::create_directories(out);
  save_run_config((out / "config.json").string(), cfg);

  const TrainResult res = train_q_network(
      net, data, cfg.trainer, cfg.env, cfg.seed,
      (out / "metrics.csv").string(), (out / "checkpoint_step_").string());
  save_checkpoint((out / "checkpoint.bin").string(), net);

  json line;
  line["out"] = out.string();
  line["steps"] = cfg.trainer.steps;
  line["final_loss"] = res.losses.empty() ? 0.0 : res.losses.back();
  if (!res.evals.empty()) {
    line["final_success"] = res.final_success;
    line["final_ci"] = res.final_ci;
  }
  if (net.mode() == NetMode::kSearch) {
    const ArchitectureSpec spec =
        extract_architecture(net, cfg.seed, cfg.trainer.steps);
    save_architecture((out / "architecture.txt").string(), spec);
    line["architecture"] = (out / "architecture.txt").string();
    line["edges_retained"] = res.edges_retained.back();
  }
  write_run_meta(out, command, cfg, started);
  print_json_line(line);
  return kExitOk;
}

int cmd_search(const CLI::App* cmd, const Options& o) {
  RunConfig cfg = resolve_config(cmd, o);
  QNetwork net =
      QNetwork::make_search(cfg.network, derive_seed(cfg.seed, Stream::kInit));
  return run_training("search", o, cfg, net);
}

int cmd_train_baseline(const CLI::App* cmd, const Options& o) {
  RunConfig cfg = resolve_config(cmd, o);
  QNetwork net = QNetwork::make_baseline(cfg.network,
                                         derive_seed(cfg.seed, Stream::kInit));
  return run_training("train-baseline", o, cfg, net);
}

int cmd_retrain(const CLI::App* cmd, const Options& o) {
  RunConfig cfg = resolve_config(cmd, o);
  const ArchitectureSpec spec = load_architecture(o.spec_path);
  // the spec's embedded config is the architectural truth; the run config
  // still drives env/trainer knobs and must agree on the frame contract
  cfg.network = spec.config;
  cfg.validate();
  QNetwork net = [&] {
    if (o.fresh)
      return QNetwork::make_pruned_fresh(spec,
                                         derive_seed(cfg.seed, Stream::kInit));
    VNAS_CHECK(!o.checkpoint_path.empty(), ConfigError,
               "retrain needs --checkpoint for copied weights "
               "(or --fresh for a fresh start)");
    QNetwork donor = QNetwork::make_search(spec.config, 0);
    load_checkpoint(o.checkpoint_path, donor);
    return QNetwork::make_pruned(spec, donor);
  }();
  return run_training("retrain", o, cfg, net);
}

int cmd_eval(const CLI::App* cmd, const Options& o) {
  const RunConfig cfg = resolve_config(cmd, o);
  const int episodes = cfg.trainer.eval_episodes;
  VNAS_CHECK(episodes > 0, ConfigError, "eval needs at least one episode");
  const int sources = static_cast<int>(o.expert) + static_cast<int>(o.random) +
                      static_cast<int>(!o.checkpoint_path.empty());
  VNAS_CHECK(sources == 1, ConfigError,
             "pick exactly one policy: --checkpoint, --expert, or --random");

  EvalResult result;
  json line;
  if (o.expert) {
    result = evaluate_rollouts(
        [](const GraspEnv& env, Rng& rng) {
          return env.expert_action(0.0, rng);
        },
        cfg.env, episodes, cfg.seed);
    line["policy"] = "expert";
  } else if (o.random) {
    result = evaluate_rollouts(
        [](const GraspEnv&, Rng& rng) { return random_grasp_action(rng); },
        cfg.env, episodes, cfg.seed);
    line["policy"] = "random";
  } else {
    QNetwork net = [&] {
      if (!o.spec_path.empty()) {
        const ArchitectureSpec spec = load_architecture(o.spec_path);
        QNetwork n = QNetwork::make_pruned_fresh(spec, 0);
        load_checkpoint(o.checkpoint_path, n);
        return n;
      }
      // sniff the checkpoint: mix logits mark a search supernet, attention
      // tensors without them mark a pruned net (which needs its spec)
      std::ifstream in(o.checkpoint_path, std::ios::binary);
      VNAS_CHECK(in.good(), IoError,
                 "cannot open checkpoint: " + o.checkpoint_path);
      bool has_mix = false, has_attn = false;
      for (const NamedTensor& t : read_tensors(in)) {
        if (t.name.find(".mix_logits") != std::string::npos) has_mix = true;
        if (t.name.rfind("attn.", 0) == 0) has_attn = true;
      }
      VNAS_CHECK(has_mix || !has_attn, ConfigError,
                 "pruned checkpoints need --spec for their topology");
      QNetwork n = has_mix ? QNetwork::make_search(cfg.network, 0)
                           : QNetwork::make_baseline(cfg.network, 0);
      load_checkpoint(o.checkpoint_path, n);
      return n;
    }();
    result = evaluate_policy(net, cfg.env, episodes, cfg.seed,
                             cfg.trainer.cem);
    line["policy"] = o.checkpoint_path;
  }

  line["episodes"] = result.episodes;
  line["successes"] = result.successes;
  line["success_rate"] = result.success_rate;
  line["ci_half_width"] = result.ci_half_width;
  line["mean_return"] = result.mean_return;
  print_json_line(line);
  return kExitOk;
}

int cmd_export(const Options& o) {
  const ArchitectureSpec spec = load_architecture(o.spec_path);
  std::string text;
  text += "architecture v" + std::to_string(spec.version) + " (seed " +
          std::to_string(spec.seed) + ", " + std::to_string(spec.iterations) +
          " iterations)\n";
  text += "frame " + std::to_string(spec.config.image_size) + "x" +
          std::to_string(spec.config.image_size) + "x" +
          std::to_string(spec.config.image_channels) + ", " +
          std::to_string(spec.config.num_sites) + " sites, action dim " +
          std::to_string(spec.config.action_dim) + "\n\n";
  int merges = 0;
  std::size_t edges = 0;
  for (std::size_t i = 0; i < spec.site_ops.size(); ++i) {
    text += "site " + std::to_string(i + 1) + ": " +
            merge_op_name(spec.site_ops[i]) + "\n";
    if (spec.site_ops[i] != MergeOpKind::kNoOp) ++merges;
    const auto& site_edges = spec.site_edges[i];
    if (site_edges.empty()) {
      text += "  attention: (none)\n";
    } else {
      text += "  attention:";
      for (std::size_t e = 0; e < site_edges.size(); ++e) {
        char w[32];
        std::snprintf(w, sizeof w, "%.3f", site_edges[e].weight);
        text += std::string(e == 0 ? " " : ", ") + site_edges[e].peer + " (w=" +
                w + ")";
      }
      text += "\n";
    }
    edges += site_edges.size();
  }
  text += "\ntotal: " + std::to_string(merges) + " merges, " +
          std::to_string(edges) + " edges\n";

  if (o.out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    atomic_write_file(o.out_path,
                      [&](std::ostream& out) { out << text; });
  }
  return kExitOk;
}

int cmd_gradcheck(const CLI::App* cmd, const Options& o) {
  if (o.threads > 0) kern::set_num_threads(o.threads);
  const std::uint64_t seed = given(cmd, "--seed") ? o.seed : 1;
  const GradCheckReport report = run_gradient_checks(seed);
  const GradCheckEntry* worst = nullptr;
  for (const auto& e : report.entries)
    if (!worst || e.max_rel_err > worst->max_rel_err) worst = &e;
  for (const auto& e : report.entries)
    log_debug(e.name + ": " + format_double(e.max_rel_err) + " (" +
              std::to_string(e.probes) + " probes)");
  std::printf("%zu checks, worst %s: max rel err %.3g (tolerance %.1g): %s\n",
              report.entries.size(), worst ? worst->name.c_str() : "-",
              report.max_rel_err, report.tolerance,
              report.passed() ? "PASS" : "FAIL");
  return report.passed() ? kExitOk : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "vnas: one-shot merge/attention architecture search for vision-action "
      "Q-networks.\nExit codes: 0 ok, 1 runtime error or failed check, 2 bad "
      "usage/config, 3 I/O failure, 4 numeric divergence."};
  app.require_subcommand(1);
  Options o;

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate an offline grasping dataset (VNBF file)");
  add_common_flags(gen, o);
  gen->add_option("--out", o.out_path, "output dataset path")->required();

  CLI::App* search = app.add_subcommand(
      "search", "Train the merge/attention supernet and extract the "
                "architecture");
  CLI::App* baseline = app.add_subcommand(
      "train-baseline", "Train the fixed-add baseline network");
  CLI::App* retrain = app.add_subcommand(
      "retrain", "Train a pruned network from an architecture file");
  for (CLI::App* cmd : {search, baseline, retrain}) {
    add_common_flags(cmd, o);
    cmd->add_option("--dataset", o.dataset_path, "VNBF dataset file")
        ->required();
    cmd->add_option("--out", o.out_path, "output directory")->required();
    cmd->add_option("--steps", o.steps,
                    "training steps (overrides config)");
    cmd->add_option("--eval-episodes", o.eval_episodes,
                    "episodes per evaluation (overrides config)");
  }
  retrain->add_option("--spec", o.spec_path, "architecture file")->required();
  retrain->add_option("--checkpoint", o.checkpoint_path,
                      "search checkpoint to copy weights from");
  retrain->add_flag("--fresh", o.fresh, "fresh weights instead of copied");

  CLI::App* eval = app.add_subcommand(
      "eval", "Roll out a policy greedily and report success rate");
  add_common_flags(eval, o);
  eval->add_option("--eval-episodes", o.eval_episodes,
                   "episodes to roll out (overrides config)");
  eval->add_option("--checkpoint", o.checkpoint_path,
                   "network checkpoint to evaluate");
  eval->add_option("--spec", o.spec_path,
                   "architecture file (for pruned checkpoints)");
  eval->add_flag("--expert", o.expert, "evaluate the scripted expert");
  eval->add_flag("--random", o.random, "evaluate the uniform-random policy");

  CLI::App* exp = app.add_subcommand(
      "export", "Print an architecture file as a readable graph listing");
  exp->add_option("--spec", o.spec_path, "architecture file")->required();
  exp->add_option("--out", o.out_path, "write here instead of stdout");

  CLI::App* gc = app.add_subcommand(
      "gradcheck", "Finite-difference audit of every op and network "
                   "gradient");
  add_common_flags(gc, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (app.got_subcommand(gen)) return cmd_gen_data(gen, o);
    if (app.got_subcommand(search)) return cmd_search(search, o);
    if (app.got_subcommand(baseline)) return cmd_train_baseline(baseline, o);
    if (app.got_subcommand(retrain)) return cmd_retrain(retrain, o);
    if (app.got_subcommand(eval)) return cmd_eval(eval, o);
    if (app.got_subcommand(exp)) return cmd_export(o);
    if (app.got_subcommand(gc)) return cmd_gradcheck(gc, o);
  } catch (const ConfigError& e) {
    log_error(e.what());
    return kExitConfig;
  } catch (const IoError& e) {
    log_error(e.what());
    return kExitIo;
  } catch (const NumericError& e) {
    log_error(e.what());
    return kExitNumeric;
  } catch (const Error& e) {
    log_error(e.what());
    return kExitError;
  }
  return kExitError;  // unreachable: a subcommand is required
}
