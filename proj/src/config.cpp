#include "vnas/config.hpp"

#include <cmath>
#include <initializer_list>

#include <json.hpp>

#include "vnas/common.hpp"
#include "vnas/serialization.hpp"

namespace vnas {

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* section,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        known = true;
        break;
      }
    VNAS_CHECK(known, ConfigError,
               "unknown key \"" + item.key() + "\" in " + section);
  }
}

const json* get_section(const json& j, const char* name) {
  if (!j.contains(name)) return nullptr;
  const json& s = j.at(name);
  VNAS_CHECK(s.is_object(), ConfigError,
             std::string(name) + " must be an object");
  return &s;
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for \"" + std::string(key) +
                      "\": " + e.what());
  }
}

void read_network(const json& j, NetworkConfig& n) {
  check_keys(j, "network",
             {"image_size", "image_channels", "action_dim", "num_sites",
              "conv_channels", "conv_ksize", "conv_stride", "dilated_rates",
              "dilated_channels", "dilated_ksize", "dilated_stride",
              "head_hidden"});
  read_field(j, "image_size", n.image_size);
  read_field(j, "image_channels", n.image_channels);
  read_field(j, "action_dim", n.action_dim);
  read_field(j, "num_sites", n.num_sites);
  read_field(j, "conv_channels", n.conv_channels);
  read_field(j, "conv_ksize", n.conv_ksize);
  read_field(j, "conv_stride", n.conv_stride);
  read_field(j, "dilated_rates", n.dilated_rates);
  read_field(j, "dilated_channels", n.dilated_channels);
  read_field(j, "dilated_ksize", n.dilated_ksize);
  read_field(j, "dilated_stride", n.dilated_stride);
  read_field(j, "head_hidden", n.head_hidden);
}

void read_env(const json& j, EnvConfig& e) {
  check_keys(j, "env",
             {"image_size", "num_objects", "max_steps", "step_scale",
              "pick_radius", "attach_max_z", "lift_height", "start_z",
              "step_penalty", "success_reward"});
  read_field(j, "image_size", e.image_size);
  read_field(j, "num_objects", e.num_objects);
  read_field(j, "max_steps", e.max_steps);
  read_field(j, "step_scale", e.step_scale);
  read_field(j, "pick_radius", e.pick_radius);
  read_field(j, "attach_max_z", e.attach_max_z);
  read_field(j, "lift_height", e.lift_height);
  read_field(j, "start_z", e.start_z);
  read_field(j, "step_penalty", e.step_penalty);
  read_field(j, "success_reward", e.success_reward);
}

void read_dataset(const json& j, DataGenConfig& d) {
  check_keys(j, "dataset", {"episodes", "expert_fraction", "noise"});
  read_field(j, "episodes", d.episodes);
  read_field(j, "expert_fraction", d.expert_fraction);
  read_field(j, "noise", d.noise);
}

void read_trainer(const json& j, TrainerConfig& t) {
  check_keys(j, "trainer",
             {"steps", "batch_size", "lr", "momentum", "l2", "gamma",
              "target_refresh", "eval_interval", "eval_episodes",
              "checkpoint_interval"});
  read_field(j, "steps", t.steps);
  read_field(j, "batch_size", t.batch_size);
  read_field(j, "lr", t.lr);
  read_field(j, "momentum", t.momentum);
  read_field(j, "l2", t.l2);
  read_field(j, "gamma", t.gamma);
  read_field(j, "target_refresh", t.target_refresh);
  read_field(j, "eval_interval", t.eval_interval);
  read_field(j, "eval_episodes", t.eval_episodes);
  read_field(j, "checkpoint_interval", t.checkpoint_interval);
}

void read_cem(const json& j, CemConfig& c) {
  check_keys(j, "cem",
             {"population", "iterations", "elite_fraction", "init_stddev",
              "var_reg"});
  read_field(j, "population", c.population);
  read_field(j, "iterations", c.iterations);
  read_field(j, "elite_fraction", c.elite_fraction);
  read_field(j, "init_stddev", c.init_stddev);
  read_field(j, "var_reg", c.var_reg);
}

}  // namespace

void DataGenConfig::validate() const {
  VNAS_CHECK(episodes >= 1, ConfigError, "episodes must be positive");
  VNAS_CHECK(std::isfinite(expert_fraction) && expert_fraction >= 0.0 &&
                 expert_fraction <= 1.0,
             ConfigError, "expert_fraction must be in [0, 1]");
  VNAS_CHECK(std::isfinite(noise) && noise >= 0.0, ConfigError,
             "noise must be non-negative");
}

void RunConfig::validate() const {
  VNAS_CHECK(version == 1, ConfigError, "unsupported config version");
  network.validate();
  env.validate();
  dataset.validate();
  trainer.validate();
  VNAS_CHECK(network.image_size == env.image_size, ConfigError,
             "network and environment frame sizes differ");
  VNAS_CHECK(network.image_channels == 3, ConfigError,
             "the grasping pipeline renders 3-channel frames");
  VNAS_CHECK(network.action_dim == kNetActionDim, ConfigError,
             "the grasping pipeline feeds " + std::to_string(kNetActionDim) +
                 "-dim action inputs");
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse: ") + e.what());
  }
  VNAS_CHECK(j.is_object(), ConfigError, "config root must be an object");
  check_keys(j, "config",
             {"version", "seed", "network", "env", "dataset", "trainer",
              "cem"});

  RunConfig cfg;
  read_field(j, "version", cfg.version);
  VNAS_CHECK(cfg.version == 1, ConfigError, "unsupported config version");
  read_field(j, "seed", cfg.seed);
  if (const json* s = get_section(j, "network")) read_network(*s, cfg.network);
  if (const json* s = get_section(j, "env")) read_env(*s, cfg.env);
  if (const json* s = get_section(j, "dataset")) read_dataset(*s, cfg.dataset);
  if (const json* s = get_section(j, "trainer")) read_trainer(*s, cfg.trainer);
  if (const json* s = get_section(j, "cem")) read_cem(*s, cfg.trainer.cem);
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["version"] = cfg.version;
  j["seed"] = cfg.seed;
  json& n = j["network"];
  n["image_size"] = cfg.network.image_size;
  n["image_channels"] = cfg.network.image_channels;
  n["action_dim"] = cfg.network.action_dim;
  n["num_sites"] = cfg.network.num_sites;
  n["conv_channels"] = cfg.network.conv_channels;
  n["conv_ksize"] = cfg.network.conv_ksize;
  n["conv_stride"] = cfg.network.conv_stride;
  n["dilated_rates"] = cfg.network.dilated_rates;
  n["dilated_channels"] = cfg.network.dilated_channels;
  n["dilated_ksize"] = cfg.network.dilated_ksize;
  n["dilated_stride"] = cfg.network.dilated_stride;
  n["head_hidden"] = cfg.network.head_hidden;
  json& e = j["env"];
  e["image_size"] = cfg.env.image_size;
  e["num_objects"] = cfg.env.num_objects;
  e["max_steps"] = cfg.env.max_steps;
  e["step_scale"] = cfg.env.step_scale;
  e["pick_radius"] = cfg.env.pick_radius;
  e["attach_max_z"] = cfg.env.attach_max_z;
  e["lift_height"] = cfg.env.lift_height;
  e["start_z"] = cfg.env.start_z;
  e["step_penalty"] = cfg.env.step_penalty;
  e["success_reward"] = cfg.env.success_reward;
  json& d = j["dataset"];
  d["episodes"] = cfg.dataset.episodes;
  d["expert_fraction"] = cfg.dataset.expert_fraction;
  d["noise"] = cfg.dataset.noise;
  json& t = j["trainer"];
  t["steps"] = cfg.trainer.steps;
  t["batch_size"] = cfg.trainer.batch_size;
  t["lr"] = cfg.trainer.lr;
  t["momentum"] = cfg.trainer.momentum;
  t["l2"] = cfg.trainer.l2;
  t["gamma"] = cfg.trainer.gamma;
  t["target_refresh"] = cfg.trainer.target_refresh;
  t["eval_interval"] = cfg.trainer.eval_interval;
  t["eval_episodes"] = cfg.trainer.eval_episodes;
  t["checkpoint_interval"] = cfg.trainer.checkpoint_interval;
  json& c = j["cem"];
  c["population"] = cfg.trainer.cem.population;
  c["iterations"] = cfg.trainer.cem.iterations;
  c["elite_fraction"] = cfg.trainer.cem.elite_fraction;
  c["init_stddev"] = cfg.trainer.cem.init_stddev;
  c["var_reg"] = cfg.trainer.cem.var_reg;
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::string& path) {
  return run_config_from_json(read_file_bytes(path));
}

void save_run_config(const std::string& path, const RunConfig& cfg) {
  const std::string text = run_config_to_json(cfg);
  atomic_write_file(path, [&](std::ostream& out) { out << text; });
}

}  // namespace vnas
