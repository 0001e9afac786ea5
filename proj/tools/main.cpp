#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hypernet/hypernet.hpp"

namespace fs = std::filesystem;
using namespace hypernet;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// ---------------------------------------------------------------- config

NetworkSpec parse_net_spec(const Config& cfg) {
  NetworkSpec spec;
  spec.input_channels = cfg.get_uint("net.input_channels", 3);
  spec.opening_width = cfg.get_uint("net.opening_width", 4);
  spec.levels = cfg.get_uint("net.levels", 0);
  spec.blocks_per_level = cfg.get_uint("net.blocks_per_level", 1);
  spec.classes = cfg.get_uint("net.classes", 10);

  const std::string head = cfg.get_string("net.head", "classifier");
  if (head == "classifier") spec.head = HeadKind::Classifier;
  else if (head == "segmenter") spec.head = HeadKind::Segmenter;
  else if (head == "regressor") spec.head = HeadKind::Regressor;
  else throw ConfigError("net.head must be classifier|segmenter|regressor, got '" + head + "'");

  const std::string pool = cfg.get_string("net.head_pool", "gap");
  if (pool == "gap") spec.head_pool = HeadPool::GlobalAvg;
  else if (pool == "flatten") spec.head_pool = HeadPool::Flatten;
  else throw ConfigError("net.head_pool must be gap|flatten, got '" + pool + "'");

  const std::string topo = cfg.get_string("net.topology", "down");
  if (topo == "down") spec.topology = Topology::DownOnly;
  else if (topo == "downup") spec.topology = Topology::DownUp;
  else throw ConfigError("net.topology must be down|downup, got '" + topo + "'");

  const std::string arch = cfg.get_string("net.arch", "hyper");
  if (arch == "hyper") spec.arch = Arch::Hyper;
  else if (arch == "resnet") spec.arch = Arch::ResNet;
  else throw ConfigError("net.arch must be hyper|resnet, got '" + arch + "'");

  const std::string bpool = cfg.get_string("net.baseline_pool", "wavepool");
  if (bpool == "wavepool") spec.baseline_pool = BaselinePool::WavePool;
  else if (bpool == "stridedavg") spec.baseline_pool = BaselinePool::StridedAvg;
  else throw ConfigError("net.baseline_pool must be wavepool|stridedavg, got '" + bpool + "'");

  const std::string mode = cfg.get_string("train.mode", "reversible");
  if (mode == "reversible") spec.mode = GradMode::Reversible;
  else if (mode == "stored") spec.mode = GradMode::Stored;
  else throw ConfigError("train.mode must be reversible|stored, got '" + mode + "'");

  if (spec.arch == Arch::ResNet && !cfg.has("train.mode")) spec.mode = GradMode::Stored;
  spec.validate();
  return spec;
}

TrainConfig parse_train_config(const Config& cfg) {
  TrainConfig tc;
  const std::string opt = cfg.get_string("opt.kind", "sgd");
  if (opt == "sgd") tc.optimizer = OptKind::Sgd;
  else if (opt == "adam") tc.optimizer = OptKind::Adam;
  else throw ConfigError("opt.kind must be sgd|adam, got '" + opt + "'");
  tc.lr = cfg.get_double("opt.lr", 0.1);
  tc.momentum = cfg.get_double("opt.momentum", 0.0);
  tc.weight_decay = cfg.get_double("opt.weight_decay", 0.0);
  tc.beta1 = cfg.get_double("opt.beta1", 0.9);
  tc.beta2 = cfg.get_double("opt.beta2", 0.999);
  tc.eps = cfg.get_double("opt.eps", 1e-8);
  tc.schedule.period = cfg.get_uint("schedule.period", 0);
  if (cfg.has("schedule.milestones")) {
    tc.schedule.milestones = cfg.get_uint_list("schedule.milestones");
  }
  tc.schedule.factor = cfg.get_double("schedule.factor", 0.1);
  tc.epochs = cfg.get_uint("train.epochs", 1);
  tc.batch_size = cfg.get_uint("train.batch_size", 1);
  const std::string loss = cfg.get_string("train.loss", "cross_entropy");
  if (loss == "cross_entropy") tc.loss = LossKind::CrossEntropy;
  else if (loss == "l2") tc.loss = LossKind::L2;
  else throw ConfigError("train.loss must be cross_entropy|l2, got '" + loss + "'");
  const std::string weighting = cfg.get_string("train.weighting", "none");
  if (weighting == "none") tc.weighting = Weighting::None;
  else if (weighting == "mean_frequency") tc.weighting = Weighting::MeanFrequency;
  else throw ConfigError("train.weighting must be none|mean_frequency, got '" + weighting + "'");
  tc.seed = cfg.get_uint("train.seed", 1);
  tc.checkpoint_every = cfg.get_uint("train.checkpoint_every", 0);
  tc.out_dir = cfg.get_string("train.out_dir", ".");
  tc.validate();
  return tc;
}

const std::vector<std::string> kTrainKeys = {
    "net.input_channels", "net.opening_width", "net.levels", "net.blocks_per_level",
    "net.classes", "net.head", "net.head_pool", "net.topology", "net.arch",
    "net.baseline_pool", "train.mode", "train.epochs", "train.batch_size",
    "train.loss", "train.weighting", "train.seed", "train.checkpoint_every",
    "train.out_dir", "opt.kind", "opt.lr", "opt.momentum", "opt.weight_decay",
    "opt.beta1", "opt.beta2", "opt.eps", "schedule.period", "schedule.milestones",
    "schedule.factor", "data.train"};

// ---------------------------------------------------------------- helpers

double tensor_rel_dev(const Tensor<double>& a, const Tensor<double>& b) {
  return rel_deviation(a, b);
}

struct DevReport {
  double max_rel = 0;
  std::string where;

  void update(double rel, const std::string& name) {
    if (rel > max_rel) {
      max_rel = rel;
      where = name;
    }
  }
};

DevReport params_rel_dev(const NetworkSpec& spec, const NetworkParams<double>& a,
                         const NetworkParams<double>& b) {
  DevReport rep;
  std::vector<std::pair<std::string, const Tensor<double>*>> av, bv;
  for_each_param(spec, a, [&](const std::string& n, const Tensor<double>& t) {
    av.emplace_back(n, &t);
  });
  for_each_param(spec, b, [&](const std::string& n, const Tensor<double>& t) {
    bv.emplace_back(n, &t);
  });
  for (std::size_t i = 0; i < av.size(); ++i) {
    rep.update(tensor_rel_dev(*av[i].second, *bv[i].second), av[i].first);
  }
  return rep;
}

NetworkSpec gradcheck_spec(std::size_t depth, std::size_t levels,
                           const std::string& topology) {
  if (levels > 0 && depth % levels != 0) {
    throw ConfigError("depth must be divisible by levels");
  }
  NetworkSpec spec;
  spec.input_channels = 1;
  spec.opening_width = 2;
  spec.levels = levels;
  spec.blocks_per_level = levels > 0 ? depth / levels : depth;
  spec.classes = 3;
  spec.head = HeadKind::Classifier;
  if (topology == "down") spec.topology = Topology::DownOnly;
  else if (topology == "downup") spec.topology = Topology::DownUp;
  else throw ConfigError("topology must be down|downup, got '" + topology + "'");
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------- commands

int cmd_train(const std::string& config_path, const std::string& resume_path) {
  const Config cfg = Config::parse_file(config_path);
  cfg.require_known(kTrainKeys);
  TrainConfig tc = parse_train_config(cfg);
  const std::string manifest = cfg.get_string("data.train");

  NetworkSpec spec;
  TrainState<double> resume_state;
  const TrainState<double>* resume = nullptr;
  if (!resume_path.empty()) {
    resume_state = load_train_checkpoint<double>(resume_path);
    spec = resume_state.spec;
    resume = &resume_state;
  } else {
    spec = parse_net_spec(cfg);
  }

  const Dataset<double> ds =
      load_dataset<double>(manifest, task_for_head(spec.head), spec.classes);
  fs::create_directories(tc.out_dir);

  std::printf("# seed %llu\n", static_cast<unsigned long long>(tc.seed));
  std::printf("%s\n", kMetricsCsvHeader);
  const EpochCallback<double> echo = [](const EpochRow& row, const NetworkParams<double>&) {
    std::printf("%s\n", format_csv_row(row).c_str());
    std::fflush(stdout);
    return true;
  };
  const TrainResult<double> res = train_loop(spec, tc, ds, echo, resume);

  const std::string csv_path = (fs::path(tc.out_dir) / "metrics.csv").string();
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError(IoError::Code::OpenFailed, "cannot write " + csv_path);
  csv << metrics_csv(res.rows);
  csv.close();
  std::printf("# checkpoint %s\n",
              (fs::path(tc.out_dir) / "checkpoint.htnc").string().c_str());
  std::printf("# metrics %s\n", csv_path.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& manifest) {
  const TrainState<double> st = load_train_checkpoint<double>(ckpt_path);
  const Dataset<double> ds =
      load_dataset<double>(manifest, task_for_head(st.spec.head), st.spec.classes);
  const LossKind kind =
      st.spec.head == HeadKind::Regressor ? LossKind::L2 : LossKind::CrossEntropy;
  const EvalResult<double> ev = evaluate(st.spec, st.params, ds, kind, st.class_weights);
  std::printf("loss,global_acc,class_avg\n");
  std::printf("%.17g,%.17g,%.17g\n", ev.loss, ev.metrics.global_accuracy,
              ev.metrics.class_average);
  return 0;
}

int cmd_gradcheck(std::size_t depth, std::size_t levels, const std::string& topology,
                  std::uint64_t seed, double h, std::size_t fd_coords,
                  bool corrupt_vjp) {
  const NetworkSpec spec = gradcheck_spec(depth, levels, topology);
  const std::size_t side = std::max<std::size_t>(8, (std::size_t(1) << spec.levels) * 4);
  Rng rng(seed);
  const NetworkParams<double> params = init_params<double>(spec, side, side, rng);
  const Tensor<double> x = random_uniform<double>({1, side, side}, rng, -1.0, 1.0);
  Tensor<double> label({1});
  label[0] = double(rng.below(spec.classes));
  Tensor<double> weights;
  const LossFn<double> loss = [&](const Tensor<double>& out) {
    return weighted_cross_entropy(out, label, weights);
  };

  std::printf("# seed %llu depth %zu levels %zu topology %s\n",
              static_cast<unsigned long long>(seed), depth, levels, topology.c_str());

  GradResult<double> stored = backprop_stored(spec, params, x, loss);
  const GradResult<double> reversible = backprop_reversible(spec, params, x, loss);
  if (corrupt_vjp) {
    for (std::size_t i = 0; i < stored.grads.blocks[0].K.weights.numel(); ++i) {
      stored.grads.blocks[0].K.weights[i] *= 1.5;
    }
  }

  Rng fd_rng(seed + 1);
  const FdResult<double> fd =
      finite_diff_grad(spec, params, x, loss, h, fd_coords, &fd_rng);

  DevReport fd_dev;
  {
    std::vector<std::pair<std::string, const Tensor<double>*>> fdv, stv, vav;
    for_each_param(spec, fd.grads, [&](const std::string& n, const Tensor<double>& t) {
      fdv.emplace_back(n, &t);
    });
    for_each_param(spec, stored.grads, [&](const std::string& n, const Tensor<double>& t) {
      stv.emplace_back(n, &t);
    });
    for_each_param(spec, fd.status, [&](const std::string& n, const Tensor<double>& t) {
      vav.emplace_back(n, &t);
    });
    for (std::size_t ti = 0; ti < fdv.size(); ++ti) {
      const Tensor<double>& a = *fdv[ti].second;
      const Tensor<double>& b = *stv[ti].second;
      const Tensor<double>& status = *vav[ti].second;
      double num = 0;
      for (std::size_t i = 0; i < a.numel(); ++i) {
        if (status[i] == 1.0) num = std::max(num, std::abs(double(a[i]) - double(b[i])));
      }
      fd_dev.update(num / (max_abs(b) + 1e-300), fdv[ti].first);
    }
  }
  const DevReport rev_dev = params_rel_dev(spec, reversible.grads, stored.grads);

  const double fd_tol = 1e-4, rev_tol = 1e-8;
  const bool fd_ok = fd_dev.max_rel <= fd_tol;
  const bool rev_ok = rev_dev.max_rel <= rev_tol;
  std::printf("fd_vs_stored max_rel %.3e at %s tol %.0e %s\n", fd_dev.max_rel,
              fd_dev.where.c_str(), fd_tol, fd_ok ? "PASS" : "FAIL");
  std::printf("stored_vs_reversible max_rel %.3e at %s tol %.0e %s\n", rev_dev.max_rel,
              rev_dev.where.c_str(), rev_tol, rev_ok ? "PASS" : "FAIL");
  std::printf("%s\n", fd_ok && rev_ok ? "PASS" : "FAIL");
  return fd_ok && rev_ok ? 0 : 1;
}

int cmd_revcheck(std::size_t blocks, std::size_t levels, const std::string& topology,
                 std::uint64_t seed) {
  const NetworkSpec spec = gradcheck_spec(blocks, levels, topology);
  const std::size_t side = std::max<std::size_t>(8, (std::size_t(1) << spec.levels) * 4);
  Rng rng(seed);
  const NetworkParams<double> params = init_params<double>(spec, side, side, rng);
  const Tensor<double> x = random_uniform<double>({1, side, side}, rng, -1.0, 1.0);

  const auto plan = build_plan(spec);
  std::vector<StatePair<double>> states;
  states.push_back(opening_layer(x, params.opening_K, params.opening_b));
  for (std::size_t i = 0; i < plan.size(); ++i) {
    states.push_back(leapfrog_step(states.back(), params.blocks[i], plan[i].transform));
  }

  std::printf("# seed %llu blocks %zu levels %zu topology %s\n",
              static_cast<unsigned long long>(seed), blocks, levels, topology.c_str());
  std::printf("block,rel_err\n");
  double max_rel = 0;
  StatePair<double> s = states.back();
  for (std::size_t i = plan.size(); i-- > 0;) {
    s = leapfrog_reverse(s, params.blocks[i], plan[i].transform);
    const double rel = std::max(rel_deviation(s.y_prev, states[i].y_prev),
                                rel_deviation(s.y_curr, states[i].y_curr));
    max_rel = std::max(max_rel, rel);
    std::printf("%zu,%.3e\n", i, rel);
  }
  const bool ok = max_rel < 1e-9;
  std::printf("max_rel_err %.3e tol 1e-09 %s\n", max_rel, ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

int cmd_membench(const std::vector<std::size_t>& depths, const std::string& modes,
                 std::uint64_t seed, const std::string& out_path) {
  std::vector<GradMode> mode_list;
  {
    std::istringstream is(modes);
    std::string item;
    while (std::getline(is, item, ',')) {
      if (item == "reversible") mode_list.push_back(GradMode::Reversible);
      else if (item == "stored") mode_list.push_back(GradMode::Stored);
      else throw ConfigError("mode must be reversible|stored, got '" + item + "'");
    }
  }
  if (mode_list.empty()) throw ConfigError("no mode given");

  std::string csv = "depth,mode,peak_bytes\n";
  for (GradMode mode : mode_list) {
    for (std::size_t d : depths) {
      const MemoryRow row = measure_peak_bytes<double>(d, mode, seed);
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%zu,%s,%zu\n", row.depth,
                    mode == GradMode::Reversible ? "reversible" : "stored",
                    row.peak_bytes);
      csv += buf;
    }
  }
  std::fputs(csv.c_str(), stdout);
  if (!out_path.empty()) {
    std::ofstream os(out_path, std::ios::trunc);
    if (!os) throw IoError(IoError::Code::OpenFailed, "cannot write " + out_path);
    os << csv;
  }
  return 0;
}

int cmd_dwt(const std::string& input, std::size_t levels, const std::string& out_dir) {
  const Tensor<double> x = read_tensor<double>(input);
  fs::create_directories(out_dir);
  const std::vector<Tensor<double>> pyramid = dwt_decompose(x, levels);
  for (std::size_t l = 0; l < pyramid.size(); ++l) {
    const bool last = l + 1 == pyramid.size();
    for (std::size_t band = last ? 0 : 1; band < 4; ++band) {
      const std::string name =
          "L" + std::to_string(l + 1) + "_" + haar_band_name(band) + ".htns";
      write_tensor((fs::path(out_dir) / name).string(), haar_band(pyramid[l], band));
    }
  }
  double err = 0;
  if (!pyramid.empty()) {
    const Tensor<double> back = dwt_reconstruct(pyramid);
    err = max_abs_diff(back, x);
  }
  std::printf("reconstruction_error %.3e\n", err);
  return err < 1e-12 ? 0 : 1;
}

int cmd_synth(const std::string& task, std::size_t n, std::uint64_t seed,
              const std::string& out_dir) {
  std::string manifest;
  if (task == "bars10") manifest = generate_bars10(out_dir, n, seed);
  else if (task == "shapes-seg") manifest = generate_shapes_seg(out_dir, n, seed);
  else if (task == "ramp-depth") manifest = generate_ramp_depth(out_dir, n, seed);
  else throw ConfigError("task must be bars10|shapes-seg|ramp-depth, got '" + task + "'");
  std::printf("# seed %llu\n", static_cast<unsigned long long>(seed));
  std::printf("manifest %s\n", manifest.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reversible hyperbolic CNN: train, evaluate, verify, benchmark"};
  app.require_subcommand(1);

  std::string config_path, resume_path;
  auto* train = app.add_subcommand("train", "Train a network from a config file");
  train->add_option("--config", config_path, "Config file")->required();
  train->add_option("--resume", resume_path, "Checkpoint to continue from");

  std::string eval_ckpt, eval_data;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Dataset manifest")->required();

  std::size_t gc_depth = 4, gc_levels = 1, gc_coords = 40;
  std::string gc_topology = "down";
  std::uint64_t gc_seed = 1;
  double gc_h = 1e-5;
  bool gc_corrupt = false;
  auto* gradcheck = app.add_subcommand("gradcheck", "Three-way gradient oracle check");
  gradcheck->add_option("--depth", gc_depth, "Total chain blocks");
  gradcheck->add_option("--levels", gc_levels, "Coarsening levels");
  gradcheck->add_option("--topology", gc_topology, "down|downup");
  gradcheck->add_option("--seed", gc_seed, "RNG seed");
  gradcheck->add_option("--fd-step", gc_h, "Finite-difference step");
  gradcheck->add_option("--fd-coords", gc_coords, "Probed coordinates per tensor");
  gradcheck->add_flag("--corrupt-vjp", gc_corrupt)->group("");  // checker self-test

  std::size_t rc_blocks = 8, rc_levels = 1;
  std::string rc_topology = "down";
  std::uint64_t rc_seed = 1;
  auto* revcheck = app.add_subcommand("revcheck", "State-reconstruction sweep");
  revcheck->add_option("--blocks", rc_blocks, "Total chain blocks");
  revcheck->add_option("--levels", rc_levels, "Coarsening levels");
  revcheck->add_option("--topology", rc_topology, "down|downup");
  revcheck->add_option("--seed", rc_seed, "RNG seed");

  std::vector<std::size_t> mb_depths = {8, 16, 32, 64};
  std::string mb_modes = "reversible,stored", mb_out;
  std::uint64_t mb_seed = 1;
  auto* membench = app.add_subcommand("membench", "Peak activation bytes by depth");
  membench->add_option("--depths", mb_depths, "Chain depths")->delimiter(',');
  membench->add_option("--mode", mb_modes, "Comma-separated: reversible,stored");
  membench->add_option("--seed", mb_seed, "RNG seed");
  membench->add_option("--out", mb_out, "Also write the CSV here");

  std::string dwt_input, dwt_out = ".";
  std::size_t dwt_levels = 1;
  auto* dwt = app.add_subcommand("dwt", "Wavelet pyramid demo with reconstruction check");
  dwt->add_option("--input", dwt_input, "Input HTNS tensor")->required();
  dwt->add_option("--levels", dwt_levels, "Pyramid levels");
  dwt->add_option("--output", dwt_out, "Output directory");

  std::string sy_task, sy_out = ".";
  std::size_t sy_n = 100;
  std::uint64_t sy_seed = 1;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--task", sy_task, "bars10|shapes-seg|ramp-depth")->required();
  synth->add_option("--n", sy_n, "Sample count");
  synth->add_option("--seed", sy_seed, "RNG seed");
  synth->add_option("--out", sy_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, resume_path);
    if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data);
    if (gradcheck->parsed()) {
      return cmd_gradcheck(gc_depth, gc_levels, gc_topology, gc_seed, gc_h, gc_coords,
                           gc_corrupt);
    }
    if (revcheck->parsed()) return cmd_revcheck(rc_blocks, rc_levels, rc_topology, rc_seed);
    if (membench->parsed()) return cmd_membench(mb_depths, mb_modes, mb_seed, mb_out);
    if (dwt->parsed()) return cmd_dwt(dwt_input, dwt_levels, dwt_out);
    if (synth->parsed()) return cmd_synth(sy_task, sy_n, sy_seed, sy_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const ValueError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const IoError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  }
  return 0;
}
