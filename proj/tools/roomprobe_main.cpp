// Experiment orchestrator: train agents, capture activation datasets,
// train and evaluate position probes, and play back episodes.
#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "roomprobe/io/checkpoint.hpp"
#include "roomprobe/io/config_file.hpp"
#include "roomprobe/io/dataset_io.hpp"
#include "roomprobe/io/probe_io.hpp"
#include "roomprobe/io/serialize.hpp"

namespace fs = std::filesystem;
using namespace roomprobe;
using nlohmann::json;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> map;
  std::optional<int> crop;
  bool deterministic = false;
};

io::ExperimentConfig load_config(const GlobalFlags& g) {
  io::ExperimentConfig cfg = io::ExperimentConfig::from_file(g.config_path);
  if (g.map) {
    const auto kind = env::parse_room_kind(*g.map);
    if (!kind) throw io::ConfigError("--map", "must be random|monster|trap|ultimate, got '" + *g.map + "'");
    env::RoomConfig fresh = env::RoomConfig::for_kind(*kind);
    fresh.crop_size = cfg.room.crop_size;
    fresh.action_set = cfg.room.action_set;
    fresh.full_map = cfg.room.full_map;
    fresh.monster_kill_prob = cfg.room.monster_kill_prob;
    cfg.room = fresh;
  }
  if (g.crop) {
    if (*g.crop != 3 && *g.crop != 5 && *g.crop != 9)
      throw io::ConfigError("--crop", "must be 3, 5 or 9, got " + std::to_string(*g.crop));
    cfg.room.crop_size = *g.crop;
    cfg.agent.crop_size = *g.crop;
    cfg.margin = io::margin_for_crop(*g.crop);
  }
  if (g.seed) {
    cfg.seed_train = *g.seed;
    cfg.seed_collect = *g.seed + 1;
    cfg.seed_probe = *g.seed + 2;
  }
  if (g.out) cfg.output_dir = *g.out;
  if (g.deterministic) {
    cfg.ppo.n_workers = 1;
    cfg.collect_envs = 1;
  }
  return cfg;
}

json config_provenance(const io::ExperimentConfig& cfg) {
  json j;
  j["map"] = env::room_kind_name(cfg.room.kind);
  j["crop_size"] = cfg.room.crop_size;
  j["actions"] = cfg.room.n_actions();
  j["lstm"] = cfg.agent.lstm;
  j["use_full_map"] = cfg.agent.use_full_map;
  j["margin"] = cfg.margin;
  j["seeds"] = {{"train", cfg.seed_train}, {"collect", cfg.seed_collect}, {"probe", cfg.seed_probe}};
  j["n_collect"] = cfg.n_collect;
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  return j;
}

fs::path dataset_path(const io::ExperimentConfig& cfg, const std::string& tap) {
  return fs::path(cfg.output_dir) / ("dataset_" + tap + ".apds");
}

fs::path probe_path(const io::ExperimentConfig& cfg, const std::string& tap, const std::string& arch) {
  return fs::path(cfg.output_dir) / ("probe_" + tap + "_" + arch + ".rppb");
}

int cmd_train(const io::ExperimentConfig& cfg, bool dry_run) {
  if (dry_run) {
    std::cout << "config ok: map=" << env::room_kind_name(cfg.room.kind) << " crop=" << cfg.room.crop_size
              << " lstm=" << (cfg.agent.lstm ? "true" : "false") << " margin=" << cfg.margin << "\n";
    return 0;
  }
  fs::create_directories(cfg.output_dir);
  std::ofstream metrics(fs::path(cfg.output_dir) / "metrics.csv", std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot open metrics.csv under " + cfg.output_dir);
  metrics << ppo::kMetricsCsvHeader << "\n";

  auto net = agent::build_agent(cfg.agent, nn::mix_seed(cfg.seed_train, 0xA65E7));
  ppo::TrainCallbacks cb;
  cb.on_iteration = [&](const ppo::IterationMetrics& m) {
    metrics << ppo::metrics_csv_row(m) << "\n";
    metrics.flush();
    if (m.iter == 1 || m.iter % 10 == 0)
      std::cout << "iter " << m.iter << " steps " << m.env_steps << " return " << m.mean_return << " ep_len "
                << m.mean_ep_len << " entropy " << m.entropy << std::endl;
  };
  cb.on_checkpoint = [&](const agent::AgentNet& n, const ppo::CheckpointMeta& meta, bool best) {
    const auto bytes = io::serialize_checkpoint(n, meta);
    io::write_file(fs::path(cfg.output_dir) / (best ? "checkpoint_best.bin" : "checkpoint_final.bin"), bytes);
  };
  auto res = ppo::train(cfg.room, cfg.agent, cfg.ppo, cfg.seed_train, *net, cb);

  json prov = config_provenance(cfg);
  prov["env_steps"] = res.env_steps;
  prov["converged"] = res.converged;
  prov["final_mean_return"] = res.final_mean_return;
  prov["best_mean_return"] = res.best_mean_return;
  std::ofstream(fs::path(cfg.output_dir) / "train.meta.json") << prov.dump(2) << "\n";

  std::cout << (res.converged ? "converged" : "budget exhausted without convergence") << " after " << res.env_steps
            << " env steps (" << res.iterations << " iterations), final mean return " << res.final_mean_return
            << "\n";
  return 0;
}

io::LoadedCheckpoint load_checkpoint_for(const io::ExperimentConfig& cfg, const std::string& explicit_path) {
  fs::path path = explicit_path.empty() ? fs::path(cfg.output_dir) / "checkpoint_best.bin" : fs::path(explicit_path);
  if (!fs::exists(path)) throw std::runtime_error("missing checkpoint: " + path.string());
  return io::deserialize_checkpoint(io::read_file(path));
}

int cmd_collect(const io::ExperimentConfig& cfg, const std::string& checkpoint) {
  auto loaded = load_checkpoint_for(cfg, checkpoint);
  std::vector<std::string> taps;
  for (const auto& p : cfg.probes)
    if (std::find(taps.begin(), taps.end(), p.tap) == taps.end()) taps.push_back(p.tap);

  auto datasets = probe::collect_activations(*loaded.net, cfg.room, taps, cfg.n_collect, cfg.seed_collect,
                                             cfg.collect_envs);
  fs::create_directories(cfg.output_dir);
  for (auto& d : datasets) {
    d.meta.checkpoint_id = loaded.checkpoint_id;
    const auto bytes = io::serialize_dataset(d);
    const auto path = dataset_path(cfg, d.tap_name);
    io::write_file(path, bytes);
    json meta = config_provenance(cfg);
    meta["tap"] = d.tap_name;
    meta["activation_dim"] = d.activation_dim;
    meta["records"] = d.size();
    meta["checkpoint_id"] = loaded.checkpoint_id;
    meta["dataset_id"] = io::content_id(bytes);
    std::ofstream(path.string() + ".meta.json") << meta.dump(2) << "\n";
    std::cout << "wrote " << path.string() << " (" << d.size() << " records, dim " << d.activation_dim << ")\n";
  }
  return 0;
}

probe::ProbeReport run_one_probe(const io::ExperimentConfig& cfg, const io::ProbeSpec& spec, size_t index) {
  const auto dpath = dataset_path(cfg, spec.tap);
  if (!fs::exists(dpath)) throw std::runtime_error("missing dataset: " + dpath.string() + " (run collect first)");
  const auto bytes = io::read_file(dpath);
  auto dataset = io::deserialize_dataset(bytes);
  auto filtered = probe::filter_boundary(dataset, cfg.margin);
  auto [train, test] = probe::split_dataset(filtered, cfg.n_train, cfg.n_test, cfg.seed_probe);

  probe::ProbeConfig pc = spec.config;
  pc.seed = nn::mix_seed(cfg.seed_probe, index);
  auto p = probe::train_probe(train, pc);
  auto report = probe::evaluate_probe(p, test);

  io::ProbeArtifact art;
  art.config = pc;
  art.tap_name = spec.tap;
  art.margin = static_cast<uint8_t>(cfg.margin);
  art.split_seed = cfg.seed_probe;
  art.n_train = cfg.n_train;
  art.n_test = cfg.n_test;
  art.dataset_id = io::content_id(bytes);
  io::write_file(probe_path(cfg, spec.tap, probe::probe_arch_name(pc.arch)), io::serialize_probe(p, art));
  return report;
}

int cmd_probe(const io::ExperimentConfig& cfg, const std::string& only_tap, const std::string& only_arch) {
  fs::create_directories(cfg.output_dir);
  std::ofstream report_csv(fs::path(cfg.output_dir) / "report.csv", std::ios::trunc);
  report_csv << probe::kReportCsvHeader << "\n";
  std::cout << probe::kReportCsvHeader << "\n";
  size_t index = 0;
  int matched = 0;
  for (const auto& spec : cfg.probes) {
    const std::string arch = probe::probe_arch_name(spec.config.arch);
    ++index;
    if (!only_tap.empty() && spec.tap != only_tap) continue;
    if (!only_arch.empty() && arch != only_arch) continue;
    ++matched;
    auto report = run_one_probe(cfg, spec, index);
    report_csv << report.csv_row() << "\n";
    report_csv.flush();
    std::cout << report.csv_row() << std::endl;
  }
  if (matched == 0) throw std::runtime_error("no probe spec matches the requested tap/arch filter");
  std::ofstream(fs::path(cfg.output_dir) / "report.meta.json") << config_provenance(cfg).dump(2) << "\n";
  return 0;
}

int cmd_eval(const io::ExperimentConfig& cfg, const std::string& probe_file, const std::string& dataset_file) {
  if (probe_file.empty()) throw std::runtime_error("--probe PATH is required for eval");
  auto loaded = io::deserialize_probe(io::read_file(probe_file));
  fs::path dpath = dataset_file.empty() ? dataset_path(cfg, loaded.artifact.tap_name) : fs::path(dataset_file);
  if (!fs::exists(dpath)) throw std::runtime_error("missing dataset: " + dpath.string());
  const auto bytes = io::read_file(dpath);
  if (io::content_id(bytes) != loaded.artifact.dataset_id)
    throw std::runtime_error("dataset " + dpath.string() + " does not match the probe's source dataset (id " +
                             loaded.artifact.dataset_id + ")");
  auto dataset = io::deserialize_dataset(bytes);
  auto filtered = probe::filter_boundary(dataset, loaded.artifact.margin);
  auto [train, test] =
      probe::split_dataset(filtered, loaded.artifact.n_train, loaded.artifact.n_test, loaded.artifact.split_seed);
  auto report = probe::evaluate_probe(*loaded.probe, test);
  std::cout << probe::kReportCsvHeader << "\n" << report.csv_row() << std::endl;
  return 0;
}

int cmd_experiment(const io::ExperimentConfig& cfg) {
  if (int rc = cmd_train(cfg, false); rc != 0) return rc;
  if (int rc = cmd_collect(cfg, ""); rc != 0) return rc;
  return cmd_probe(cfg, "", "");
}

int cmd_render(const io::ExperimentConfig& cfg, uint64_t seed, int steps, const std::string& checkpoint) {
  env::RoomEnv e(cfg.room);
  auto obs = e.reset(seed);
  std::unique_ptr<agent::AgentNet> net;
  agent::LstmStateBatch state;
  if (!checkpoint.empty()) {
    auto loaded = load_checkpoint_for(cfg, checkpoint);
    net = std::move(loaded.net);
    if (net->config().lstm) state = agent::LstmStateBatch::zeros(1, net->config().lstm_size);
  }
  nn::Rng rng(nn::mix_seed(seed, 0x3E4DE3));
  double total = 0.0;
  std::cout << "seed " << seed << " map " << env::room_kind_name(cfg.room.kind) << "\n" << e.render_text() << "\n";
  for (int t = 0; t < steps && !e.done(); ++t) {
    int action;
    if (net) {
      auto fwd = net->forward_batch({obs}, net->config().lstm ? &state : nullptr);
      auto [a, lp] = agent::select_action(fwd.logits, rng, agent::SelectMode::kSample);
      action = a;
      if (net->config().lstm) state = std::move(fwd.next_state);
    } else {
      action = rng.index(cfg.room.n_actions());
    }
    auto r = e.step(action);
    obs = std::move(r.obs);
    total += r.reward;
    std::cout << "step " << e.state().steps << " action " << action << " reward " << r.reward
              << (r.info.teleported ? " (teleported)" : "") << "\n"
              << e.render_text() << "\n";
    if (r.done) {
      std::cout << (r.info.reached_goal ? "reached the goal" : r.info.died ? "died" : "timed out") << ", return "
                << total << "\n";
    }
  }
  if (!e.done()) std::cout << "stopped after " << steps << " steps, return so far " << total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"room-gridworld agents, activation capture, and position probes"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--config", g.config_path, "experiment config file")->required();
  app.add_option("--seed", g.seed, "override seeds (train=N, collect=N+1, probe=N+2)");
  app.add_option("--out", g.out, "override output directory");
  app.add_option("--map", g.map, "override the map kind (random|monster|trap|ultimate)");
  app.add_option("--crop", g.crop, "override the observation crop (3|5|9)");
  app.add_flag("--deterministic", g.deterministic, "single worker, single collect env");

  auto* train = app.add_subcommand("train", "train the agent with PPO");
  bool dry_run = false;
  train->add_flag("--dry-run", dry_run, "validate the config and exit");

  auto* collect = app.add_subcommand("collect", "record activation datasets from a checkpoint");
  std::string checkpoint;
  collect->add_option("--checkpoint", checkpoint, "checkpoint file (default: <out>/checkpoint_best.bin)");

  auto* probe_cmd = app.add_subcommand("probe", "train and evaluate probes on collected datasets");
  std::string only_tap, only_arch;
  probe_cmd->add_option("--tap", only_tap, "restrict to one tap");
  probe_cmd->add_option("--arch", only_arch, "restrict to one arch (linear|mlp3)");

  auto* eval_cmd = app.add_subcommand("eval", "re-evaluate a saved probe on its saved dataset");
  std::string probe_file, dataset_file;
  eval_cmd->add_option("--probe", probe_file, "probe artifact file");
  eval_cmd->add_option("--dataset", dataset_file, "dataset file (default: derived from the probe's tap)");

  auto* experiment = app.add_subcommand("experiment", "train, collect, probe, and report in one run");

  auto* render = app.add_subcommand("render", "play back a seeded episode as text frames");
  uint64_t render_seed = 0;
  int render_steps = 40;
  std::string render_checkpoint;
  render->add_option("--episode-seed", render_seed, "episode seed (defaults to --seed or 0)");
  render->add_option("--steps", render_steps, "max steps to play");
  render->add_option("--checkpoint", render_checkpoint, "act with a trained policy instead of random moves");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    const io::ExperimentConfig cfg = load_config(g);
    if (*train) return cmd_train(cfg, dry_run);
    if (*collect) return cmd_collect(cfg, checkpoint);
    if (*probe_cmd) return cmd_probe(cfg, only_tap, only_arch);
    if (*eval_cmd) return cmd_eval(cfg, probe_file, dataset_file);
    if (*experiment) return cmd_experiment(cfg);
    if (*render) return cmd_render(cfg, render->count("--episode-seed") ? render_seed : g.seed.value_or(0),
                                   render_steps, render_checkpoint);
    return 1;
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
