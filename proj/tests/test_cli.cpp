#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cfbss/config.hpp"

using namespace cfbss;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run(const std::string& args, const fs::path& scratch) {
  const fs::path out_file = scratch / "stdout.txt";
  const fs::path err_file = scratch / "stderr.txt";
  const std::string cmd = std::string(CFBSS_BIN_PATH) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int rc = std::system(cmd.c_str());
  RunResult res;
  res.code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  res.out = slurp(out_file);
  res.err = slurp(err_file);
  return res;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::current_path() / "cli_scratch" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_config(const fs::path& path, const std::string& extra = "") {
  std::ofstream out(path);
  out << "M=12 N=1 T=6 L=3 s_bar=5 s_c=1 S_common=1 snr_db=30\n";
  out << "k_train=8 k_val=4 k_test=4\n";
  out << "coarse_layers=2 fine_layers=2\n";
  out << "train_batch=4 val_batch=4 steps_per_stage=3 max_epochs=2 patience=1\n";
  out << "timing_reps=3 tuning_episodes=2 ista_max_iters=200\n";
  out << "schemes=two_stage,coarse_only,no_ss,elementwise_ss,ista_l21\n";
  out << extra;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
  const fs::path dir = fresh_dir("usage");
  CHECK(run("", dir).code == 2);                       // missing subcommand
  CHECK(run("frobnicate", dir).code == 2);             // unknown subcommand
  CHECK(run("gen-data --no-such-flag", dir).code == 2);
  CHECK(run("report", dir).code == 2);                 // missing required csv
  CHECK(run("--help", dir).code == 0);
  const RunResult help = run("--help", dir);
  CHECK(help.out.find("gen-data") != std::string::npos);
  CHECK(help.out.find("sweep") != std::string::npos);
}

TEST_CASE("gen-data is reproducible byte for byte") {
  const fs::path dir = fresh_dir("gen");
  write_config(dir / "mini.cfg");
  const std::string base =
      "gen-data --config " + (dir / "mini.cfg").string() + " --seed 7 --out ";
  const RunResult a = run(base + (dir / "a").string(), dir);
  REQUIRE(a.code == 0);
  const RunResult b = run(base + (dir / "b").string(), dir);
  REQUIRE(b.code == 0);

  int compared = 0;
  for (const char* name : {"train.ced", "val.ced", "test.ced", "cell.cfg"}) {
    const fs::path pa = dir / "a" / "T6_snr30" / name;
    const fs::path pb = dir / "b" / "T6_snr30" / name;
    REQUIRE(fs::exists(pa));
    REQUIRE(fs::exists(pb));
    CHECK(fnv1a_hex_file(pa) == fnv1a_hex_file(pb));
    ++compared;
  }
  CHECK(compared == 4);
  // The digests printed on stdout match apart from the output directory names.
  CHECK(a.out.find("digest=") != std::string::npos);
  CHECK(a.out.find("episodes=8") != std::string::npos);
}

TEST_CASE("gradcheck passes clean and fails with an injected fault") {
  const fs::path dir = fresh_dir("gradcheck");
  const RunResult clean = run("gradcheck --seed 3", dir);
  CHECK(clean.code == 0);
  CHECK(clean.out.find("pass") != std::string::npos);
  const RunResult faulty = run("gradcheck --seed 3 --inject-fault", dir);
  CHECK(faulty.code == 1);
  CHECK(faulty.out.find("FAIL") != std::string::npos);
}

TEST_CASE("sweep without artifacts fails with a generation hint") {
  const fs::path dir = fresh_dir("missing");
  write_config(dir / "mini.cfg");
  const RunResult res = run("sweep --config " + (dir / "mini.cfg").string() +
                                " --seed 7 --out " + (dir / "empty").string() +
                                " --axis snr 20,30",
                            dir);
  CHECK(res.code == 1);
  CHECK(res.err.find("gen-data") != std::string::npos);
  CHECK(res.err.find("mini.cfg") != std::string::npos);
}

TEST_CASE("pipeline: gen-data, train, sweep, report") {
  const fs::path dir = fresh_dir("pipeline");
  write_config(dir / "mini.cfg");
  const std::string common = " --config " + (dir / "mini.cfg").string() + " --seed 7 --out " +
                             (dir / "art").string() + " --axis snr 20,30";

  REQUIRE(run("gen-data" + common, dir).code == 0);
  const RunResult trained = run("train" + common, dir);
  REQUIRE(trained.code == 0);
  CHECK(trained.out.find("trained coarse") != std::string::npos);
  CHECK(trained.out.find("trained fine") != std::string::npos);

  const RunResult swept = run("sweep" + common, dir);
  REQUIRE(swept.code == 0);
  const fs::path csv = dir / "art" / "results.csv";
  REQUIRE(fs::exists(csv));
  CHECK(swept.out.find("scheme") != std::string::npos);  // table header

  // One CSV plus one .dat per scheme and metric.
  int dat_count = 0;
  for (const auto& entry : fs::directory_iterator(dir / "art")) {
    if (entry.path().extension() == ".dat") ++dat_count;
  }
  CHECK(dat_count == 5 * 3);  // 5 schemes x {nmse, ase, time}
  for (const char* scheme :
       {"two_stage", "coarse_only", "no_ss", "elementwise_ss", "ista_l21"}) {
    CHECK(fs::exists(dir / "art" / (std::string("nmse_") + scheme + ".dat")));
  }

  // report reproduces the sweep's table and .dat series bitwise.
  const RunResult reported =
      run("report " + csv.string() + " --out " + (dir / "rep").string(), dir);
  REQUIRE(reported.code == 0);
  const std::size_t table_end = swept.out.find("emitted");
  REQUIRE(table_end != std::string::npos);
  CHECK(reported.out.substr(0, reported.out.find("emitted")) ==
        swept.out.substr(0, table_end));
  CHECK(fnv1a_hex_file(dir / "rep" / "nmse_two_stage.dat") ==
        fnv1a_hex_file(dir / "art" / "nmse_two_stage.dat"));

  // eval reuses the snr=30 cell generated above and honours the metric flags.
  const RunResult eval_res =
      run("eval --config " + (dir / "mini.cfg").string() + " --seed 7 --out " +
              (dir / "art").string() + " --nmse-squared --per-sample-ase",
          dir);
  REQUIRE(eval_res.code == 0);
  CHECK(eval_res.out.find("two_stage") != std::string::npos);
}

}  // TEST_SUITE
