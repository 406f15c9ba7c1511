#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lkreg/tensor_io.hpp"

using namespace lkreg;
namespace fs = std::filesystem;

// End-to-end checks of the installed command surface, driving the real
// binary. LKREG_CLI_PATH is injected by the build.

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

std::string work_dir() {
  const auto dir = fs::temp_directory_path() / "lkreg_tests" / "cli";
  fs::create_directories(dir);
  return dir.string();
}

RunResult run_cli(const std::string& args) {
  const std::string out_file = work_dir() + "/cli_out.txt";
  const std::string cmd =
      std::string(LKREG_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(out_file);
  std::ostringstream buf;
  buf << in.rdbuf();
  r.output = buf.str();
  return r;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("cli: analyze prints the published golden numbers") {
  const std::string cfg = work_dir() + "/unet4.cfg";
  write_file(cfg, "variant=vanilla_unet\ndims=3\nC=4\nk=3\n");
  const auto r = run_cli("analyze --net-config " + cfg +
                         " --extents 160x192x224 --out " + work_dir() +
                         "/analysis");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("parameters: 279086") != std::string::npos);
  CHECK(r.output.find("58.73 G") != std::string::npos);
  CHECK(r.output.find("receptive_field: 157x157x157") != std::string::npos);
  CHECK(fs::exists(work_dir() + "/analysis/analysis.csv"));

  const std::string lku = work_dir() + "/lku85.cfg";
  write_file(lku, "variant=lku_net\ndims=3\nC=8\nk=5\n");
  const auto r2 = run_cli("analyze --net-config " + lku +
                          " --extents 160x192x224");
  CHECK(r2.exit_code == 0);
  CHECK(r2.output.find("parameters: 2086342") != std::string::npos);
  CHECK(r2.output.find("272.09 G") != std::string::npos);
}

TEST_CASE("cli: exit codes map error classes") {
  // missing config file -> data error (3)
  const auto missing =
      run_cli("analyze --net-config /nonexistent.cfg --extents 32x32x32");
  CHECK(missing.exit_code == 3);

  // bad config contents -> config error (2)
  const std::string cfg = work_dir() + "/bad.cfg";
  write_file(cfg, "variant=lku_net\ndims=7\n");
  const auto bad = run_cli("analyze --net-config " + cfg + " --extents 32x32x32");
  CHECK(bad.exit_code == 2);

  // bad extents -> config error (2)
  write_file(cfg, "variant=lku_net\ndims=3\nC=2\nk=5\n");
  const auto badext =
      run_cli("analyze --net-config " + cfg + " --extents 33x32x32");
  CHECK(badext.exit_code == 2);

  // train on a missing dataset -> data error (3)
  const auto nodata = run_cli("train --data /no/such/dir --out " + work_dir() +
                              "/nowhere --iters 1");
  CHECK(nodata.exit_code == 3);
}

TEST_CASE("cli: synth -> train -> register -> evaluate round trip") {
  const std::string base = work_dir() + "/e2e";
  fs::remove_all(base);
  fs::create_directories(base);

  const auto synth = run_cli("synth --out " + base +
                             "/data --count 2 --extents 32x32 --max-disp 2 "
                             "--seed 5");
  REQUIRE(synth.exit_code == 0);
  CHECK(fs::exists(base + "/data/pair_0000/fixed.tns"));
  CHECK(fs::exists(base + "/data/pair_0001/gt_field.tns"));

  const std::string tcfg = base + "/train.cfg";
  write_file(tcfg,
             "net.variant=lku_net\nnet.dims=2\nnet.C=2\nnet.k=5\n"
             "lr=0.001\nloss.lambda=1\n");
  const auto train = run_cli("train --config " + tcfg + " --data " + base +
                             "/data --out " + base +
                             "/run --iters 8 --checkpoint-every 4 --seed 3 "
                             "--sequential");
  REQUIRE(train.exit_code == 0);
  CHECK(fs::exists(base + "/run/checkpoint_final/manifest.txt"));
  CHECK(fs::exists(base + "/run/checkpoint_000004"));
  CHECK(fs::exists(base + "/run/loss_log.csv"));
  {
    std::ifstream log(base + "/run/loss_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "iter,total,ncc,reg,dice");
    int rows = 0;
    std::string line;
    while (std::getline(log, line)) ++rows;
    CHECK(rows == 8);
  }

  const auto reg = run_cli("register --fixed " + base +
                           "/data/pair_0000/fixed.tns --moving " + base +
                           "/data/pair_0000/moving.tns --checkpoint " + base +
                           "/run/checkpoint_final --out " + base + "/reg");
  REQUIRE(reg.exit_code == 0);
  CHECK(reg.output.find("fold_fraction:") != std::string::npos);
  CHECK(reg.output.find("runtime:") != std::string::npos);
  const auto field = read_tns<float>(base + "/reg/field.tns");
  CHECK(field.shape == std::vector<index_t>{1, 2, 32, 32});
  const auto warped = read_tns<float>(base + "/reg/warped.tns");
  CHECK(warped.shape == std::vector<index_t>{1, 1, 32, 32});

  const auto eval = run_cli("evaluate --data " + base + "/data --checkpoint " +
                            base + "/run/checkpoint_final --metrics-csv " +
                            base + "/metrics.csv --out " + base +
                            "/eval --quiver-stride 8");
  REQUIRE(eval.exit_code == 0);
  CHECK(fs::exists(base + "/metrics.csv"));
  CHECK(fs::exists(base + "/eval/pair_0000_quiver.txt"));
  {
    std::ifstream csv(base + "/metrics.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header.rfind("pair_id,dice_mean,", 0) == 0);
    CHECK(header.find("fold_pct,sdlogj,hd95_mean,runtime_ms") !=
          std::string::npos);
    int rows = 0;
    std::string line;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 2);
  }

  // register with mismatched extents -> config error (2)
  const auto mism = run_cli("synth --out " + base +
                            "/data48 --count 1 --extents 48x48 --max-disp 2 "
                            "--seed 6");
  REQUIRE(mism.exit_code == 0);
  const auto bad = run_cli("register --fixed " + base +
                           "/data48/pair_0000/fixed.tns --moving " + base +
                           "/data/pair_0000/moving.tns --checkpoint " + base +
                           "/run/checkpoint_final --out " + base + "/regbad");
  CHECK(bad.exit_code == 2);
}
