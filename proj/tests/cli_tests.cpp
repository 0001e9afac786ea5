#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hypernet/rng.hpp"
#include "hypernet/tensor.hpp"
#include "hypernet/tensor_io.hpp"

using namespace hypernet;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path scratch_dir(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / "hypernet_cli_tests" / leaf;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(HYPERNET_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) out.push_back(line);
  return out;
}

// loss,global_acc,class_avg from an `epoch,loss,acc,avg,lr,bytes` csv row
std::string middle_fields(const std::string& row) {
  std::vector<std::string> f;
  std::istringstream is(row);
  std::string item;
  while (std::getline(is, item, ',')) f.push_back(item);
  REQUIRE(f.size() == 6);
  return f[1] + "," + f[2] + "," + f[3];
}

std::string write_train_config(const fs::path& dir, const std::string& manifest,
                               const std::string& extra) {
  const fs::path cfg = dir / "train.cfg";
  std::ofstream os(cfg);
  os << "net.input_channels = 3\n"
     << "net.opening_width = 2\n"
     << "net.levels = 1\n"
     << "net.blocks_per_level = 1\n"
     << "net.classes = 10\n"
     << "opt.lr = 0.02\n"
     << "train.seed = 3\n"
     << "data.train = " << manifest << "\n"
     << extra;
  return cfg.string();
}

}  // namespace

TEST_CASE("synth, train, eval: the eval row matches the last training row") {
  const fs::path dir = scratch_dir("pipeline");
  const RunResult synth = run_cli(
      "synth --task bars10 --n 10 --seed 7 --out " + (dir / "data").string(), dir);
  REQUIRE(synth.exit_code == 0);
  CHECK(synth.out.find("# seed 7") != std::string::npos);
  const std::string manifest = (dir / "data" / "manifest.tsv").string();
  REQUIRE(fs::exists(manifest));

  const std::string cfg = write_train_config(
      dir, manifest,
      "train.epochs = 2\ntrain.out_dir = " + (dir / "run").string() + "\n");
  const RunResult train = run_cli("train --config " + cfg, dir);
  REQUIRE(train.exit_code == 0);
  CHECK(train.out.find("# seed 3") != std::string::npos);
  CHECK(train.out.find("epoch,loss,global_acc,class_avg,lr,peak_activation_bytes") !=
        std::string::npos);
  REQUIRE(fs::exists(dir / "run" / "metrics.csv"));
  REQUIRE(fs::exists(dir / "run" / "checkpoint.htnc"));

  const std::vector<std::string> rows = lines_of(slurp(dir / "run" / "metrics.csv"));
  REQUIRE(rows.size() == 3);  // header + 2 epochs

  const RunResult eval = run_cli("eval --checkpoint " +
                                     (dir / "run" / "checkpoint.htnc").string() +
                                     " --data " + manifest,
                                 dir);
  REQUIRE(eval.exit_code == 0);
  const std::vector<std::string> ev = lines_of(eval.out);
  REQUIRE(ev.size() == 2);
  CHECK(ev[0] == "loss,global_acc,class_avg");
  CHECK(ev[1] == middle_fields(rows.back()));
}

TEST_CASE("training resumed from a checkpoint lands where the straight run does") {
  const fs::path dir = scratch_dir("resume");
  run_cli("synth --task bars10 --n 8 --seed 2 --out " + (dir / "data").string(), dir);
  const std::string manifest = (dir / "data" / "manifest.tsv").string();

  const std::string cfg_straight = write_train_config(
      dir, manifest,
      "train.epochs = 3\ntrain.out_dir = " + (dir / "straight").string() + "\n");
  REQUIRE(run_cli("train --config " + cfg_straight, dir).exit_code == 0);

  const fs::path dir2 = scratch_dir("resume2");
  const std::string cfg_short = write_train_config(
      dir2, manifest,
      "train.epochs = 1\ntrain.out_dir = " + (dir2 / "part").string() + "\n");
  REQUIRE(run_cli("train --config " + cfg_short, dir2).exit_code == 0);
  const std::string cfg_rest = write_train_config(
      scratch_dir("resume3"), manifest,
      "train.epochs = 3\ntrain.out_dir = " + (dir2 / "rest").string() + "\n");
  const RunResult rest = run_cli(
      "train --config " + cfg_rest + " --resume " +
          (dir2 / "part" / "checkpoint.htnc").string(),
      dir2);
  REQUIRE(rest.exit_code == 0);

  const std::vector<std::string> a = lines_of(slurp(dir / "straight" / "metrics.csv"));
  const std::vector<std::string> b = lines_of(slurp(dir2 / "rest" / "metrics.csv"));
  REQUIRE(a.size() == 4);
  REQUIRE(b.size() == 3);  // header + epochs 1 and 2
  CHECK(a[2] == b[1]);
  CHECK(a[3] == b[2]);
}

TEST_CASE("unknown config keys stop a run before it starts") {
  const fs::path dir = scratch_dir("badkey");
  run_cli("synth --task bars10 --n 2 --seed 1 --out " + (dir / "data").string(), dir);
  const std::string cfg = write_train_config(
      dir, (dir / "data" / "manifest.tsv").string(), "net.levls = 2\n");
  const RunResult r = run_cli("train --config " + cfg, dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("net.levls") != std::string::npos);
}

TEST_CASE("a config without data.train names the missing key") {
  const fs::path dir = scratch_dir("missingkey");
  const fs::path cfg = dir / "train.cfg";
  std::ofstream(cfg) << "train.epochs = 1\n";
  const RunResult r = run_cli("train --config " + cfg.string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("data.train") != std::string::npos);
}

TEST_CASE("missing dataset manifests are data errors") {
  const fs::path dir = scratch_dir("missingdata");
  const std::string cfg =
      write_train_config(dir, (dir / "nowhere" / "manifest.tsv").string(), "");
  const RunResult r = run_cli("train --config " + cfg, dir);
  CHECK(r.exit_code == 3);
}

TEST_CASE("a corrupt checkpoint is a data error") {
  const fs::path dir = scratch_dir("corrupt");
  run_cli("synth --task bars10 --n 2 --seed 1 --out " + (dir / "data").string(), dir);
  std::ofstream(dir / "checkpoint.htnc") << "this is not a checkpoint";
  const RunResult r = run_cli(
      "eval --checkpoint " + (dir / "checkpoint.htnc").string() + " --data " +
          (dir / "data" / "manifest.tsv").string(),
      dir);
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("data error") != std::string::npos);
}

TEST_CASE("gradcheck passes on an honest engine and flags a corrupted one") {
  const fs::path dir = scratch_dir("gradcheck");
  const RunResult good =
      run_cli("gradcheck --depth 4 --levels 2 --topology downup --seed 5", dir);
  CHECK(good.exit_code == 0);
  const std::vector<std::string> gl = lines_of(good.out);
  REQUIRE(!gl.empty());
  CHECK(gl.back() == "PASS");
  CHECK(good.out.find("fd_vs_stored") != std::string::npos);
  CHECK(good.out.find("stored_vs_reversible") != std::string::npos);

  const RunResult bad = run_cli("gradcheck --depth 4 --levels 2 --corrupt-vjp", dir);
  CHECK(bad.exit_code == 1);
  const std::vector<std::string> bl = lines_of(bad.out);
  REQUIRE(!bl.empty());
  CHECK(bl.back() == "FAIL");
}

TEST_CASE("revcheck reports per-block reconstruction error") {
  const fs::path dir = scratch_dir("revcheck");
  const RunResult r = run_cli("revcheck --blocks 6 --levels 2 --seed 4", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("block,rel_err") != std::string::npos);
  CHECK(r.out.find("PASS") != std::string::npos);
  // one row per block plus the two headers and the verdict
  CHECK(lines_of(r.out).size() == 3 + 6);
}

TEST_CASE("membench emits one csv row per depth and mode") {
  const fs::path dir = scratch_dir("membench");
  const RunResult single =
      run_cli("membench --depths 4 --mode reversible --seed 2", dir);
  CHECK(single.exit_code == 0);
  const std::vector<std::string> sl = lines_of(single.out);
  REQUIRE(sl.size() == 2);
  CHECK(sl[0] == "depth,mode,peak_bytes");
  CHECK(sl[1].rfind("4,reversible,", 0) == 0);

  const RunResult both = run_cli(
      "membench --depths 2,4 --mode reversible,stored --out " +
          (dir / "mem.csv").string(),
      dir);
  CHECK(both.exit_code == 0);
  CHECK(lines_of(both.out).size() == 5);
  CHECK(slurp(dir / "mem.csv") == both.out);
}

TEST_CASE("dwt writes band files per level and reconstructs exactly") {
  const fs::path dir = scratch_dir("dwt");
  Rng rng(9);
  write_tensor((dir / "x.htns").string(),
               random_uniform<double>({2, 8, 8}, rng, -1.0, 1.0));

  const RunResult one = run_cli(
      "dwt --input " + (dir / "x.htns").string() + " --levels 1 --output " +
          (dir / "l1").string(),
      dir);
  CHECK(one.exit_code == 0);
  CHECK(one.out.find("reconstruction_error") != std::string::npos);
  for (const char* name : {"L1_LL.htns", "L1_HL.htns", "L1_LH.htns", "L1_HH.htns"}) {
    CHECK(fs::exists(dir / "l1" / name));
  }
  std::size_t count = 0;
  for (const auto& e : fs::directory_iterator(dir / "l1")) {
    (void)e;
    ++count;
  }
  CHECK(count == 4);

  const RunResult two = run_cli(
      "dwt --input " + (dir / "x.htns").string() + " --levels 2 --output " +
          (dir / "l2").string(),
      dir);
  CHECK(two.exit_code == 0);
  count = 0;
  for (const auto& e : fs::directory_iterator(dir / "l2")) {
    (void)e;
    ++count;
  }
  CHECK(count == 7);  // detail bands at level 1, all four bands at level 2
  CHECK(fs::exists(dir / "l2" / "L2_LL.htns"));
  CHECK_FALSE(fs::exists(dir / "l2" / "L1_LL.htns"));
}

TEST_CASE("dwt rejects tensors it cannot halve") {
  const fs::path dir = scratch_dir("dwtodd");
  write_tensor((dir / "odd.htns").string(), Tensor<double>({1, 7, 8}));
  const RunResult r = run_cli(
      "dwt --input " + (dir / "odd.htns").string() + " --levels 1 --output " +
          (dir / "out").string(),
      dir);
  CHECK(r.exit_code == 2);
}

TEST_CASE("bad invocations exit with the config code") {
  const fs::path dir = scratch_dir("badargs");
  CHECK(run_cli("", dir).exit_code == 2);              // a subcommand is required
  CHECK(run_cli("train", dir).exit_code == 2);         // --config is required
  CHECK(run_cli("frobnicate", dir).exit_code == 2);    // unknown subcommand
  CHECK(run_cli("synth --task nope --out " + (dir / "d").string(), dir).exit_code == 2);
  CHECK(run_cli("--help", dir).exit_code == 0);
}
