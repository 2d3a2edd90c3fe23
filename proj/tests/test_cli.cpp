#include "doctest.h"

#ifdef EMG_CLI_PATH

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "emgrid/grid_io.hpp"

using namespace emgrid;

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(EMG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "emg_cli_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("gen, accumulate and verify round trip through the cli") {
  TempDir dir;
  CHECK_EQ(run("gen --kind drainage --dims 40x40 --seed 7 --out " + dir.file("fd.emg")), 0);
  CHECK(fs::exists(dir.file("fd.emg")));
  CHECK(fs::exists(dir.file("fd.emg") + ".manifest.json"));

  CHECK_EQ(run("accumulate --algo sep-aware --in " + dir.file("fd.emg") + " --out " +
               dir.file("acc.emg") + " --mem 2^20 --block 2^12 --simulate --stats-out " +
               dir.file("stats.csv")),
           0);
  CHECK(fs::exists(dir.file("acc.emg")));
  CHECK(fs::exists(dir.file("stats.csv")));
  CHECK(fs::exists(dir.file("acc.emg") + ".manifest.json"));

  CHECK_EQ(run("verify --flowdir " + dir.file("fd.emg") + " --acc " + dir.file("acc.emg")), 0);

  // corrupt one value: verification must fail with exit 1
  auto grid = read_grid(dir.file("acc.emg"));
  auto& acc = std::get<FlowAccGrid>(grid);
  acc.cells[3] += 1;
  write_grid(acc, dir.file("acc_bad.emg"));
  CHECK_EQ(run("verify --flowdir " + dir.file("fd.emg") + " --acc " + dir.file("acc_bad.emg")),
           1);
}

TEST_CASE("cli reports usage errors with exit 2") {
  TempDir dir;
  CHECK_EQ(run("accumulate --algo unknown --in x --out y"), 2);
  CHECK_EQ(run("nonsense"), 2);
  CHECK_EQ(run("gen --kind drainage"), 2);  // missing --out
}

TEST_CASE("cli reports data errors with exit 3") {
  TempDir dir;
  std::ofstream(dir.file("junk.emg")) << "not a grid at all";
  CHECK_EQ(run("accumulate --algo naive-row --in " + dir.file("junk.emg") + " --out " +
               dir.file("acc.emg")),
           3);
}

TEST_CASE("all accumulation algorithms agree through the cli") {
  TempDir dir;
  CHECK_EQ(run("gen --kind drainage --dims 48x48 --seed 11 --out " + dir.file("fd.emg")), 0);
  CHECK_EQ(run("convert --in " + dir.file("fd.emg") + " --to z --out " + dir.file("fdz.emg")),
           0);

  const std::vector<std::pair<std::string, std::string>> runs = {
      {"naive-row", "fd.emg"},   {"naive-z", "fd.emg"},  {"naive-z", "fdz.emg"},
      {"sep-aware", "fd.emg"},   {"sep-aware-z", "fdz.emg"},
      {"sep-oblivious", "fd.emg"}, {"tfp", "fd.emg"},
  };
  std::vector<std::vector<std::uint64_t>> outputs;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto out = dir.file("acc" + std::to_string(i) + ".emg");
    CHECK_EQ(run("accumulate --algo " + runs[i].first + " --in " + dir.file(runs[i].second) +
                 " --out " + out + " --simulate --mem 2^18 --block 2^10"),
             0);
    outputs.push_back(std::get<FlowAccGrid>(read_grid(out)).cells);
  }
  for (std::size_t i = 1; i < outputs.size(); ++i) CHECK(outputs[i] == outputs[0]);
}

TEST_CASE("convert with simulation reports stats and preserves content") {
  TempDir dir;
  CHECK_EQ(run("gen --kind drainage --dims 33x57 --seed 3 --out " + dir.file("fd.emg")), 0);
  CHECK_EQ(run("convert --in " + dir.file("fd.emg") + " --to z --strategy mergesort "
               "--simulate --mem 2^16 --block 2^10 --out " + dir.file("fdz.emg")),
           0);
  CHECK_EQ(run("convert --in " + dir.file("fdz.emg") + " --to row --strategy rowscan "
               "--simulate --mem 2^16 --block 2^10 --out " + dir.file("fd2.emg")),
           0);
  const auto a = std::get<FlowDirGrid>(read_grid(dir.file("fd.emg")));
  const auto b = std::get<FlowDirGrid>(read_grid(dir.file("fd2.emg")));
  CHECK(a.cells == b.cells);
}

TEST_CASE("flood subcommand matches the oracle verifier") {
  TempDir dir;
  CHECK_EQ(run("gen --kind meander --n 32 --out " + dir.file("fd.emg") + " --elev-out " +
               dir.file("elev.emg")),
           0);
  for (const std::string algo : {"watershed", "separator"}) {
    CHECK_EQ(run("flood --algo " + algo + " --in " + dir.file("elev.emg") + " --out " +
                 dir.file("flooded_" + algo + ".emg")),
             0);
    CHECK_EQ(run("verify --elev " + dir.file("elev.emg") + " --flooded " +
                 dir.file("flooded_" + algo + ".emg")),
             0);
  }
}

TEST_CASE("confluence emits a csv distribution") {
  TempDir dir;
  CHECK_EQ(run("gen --kind drainage --dims 96x96 --seed 5 --out " + dir.file("fd.emg")), 0);
  CHECK_EQ(run("confluence --in " + dir.file("fd.emg") + " --d 4,8 --sample 50 --out " +
               dir.file("confluence.csv")),
           0);
  std::ifstream csv(dir.file("confluence.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK_EQ(header, "d,max,p50,p99,samples");
  int rows = 0;
  for (std::string line; std::getline(csv, line) && !line.empty();) ++rows;
  CHECK_EQ(rows, 2);
}

TEST_CASE("bench sweeps emit one row per algorithm and size") {
  TempDir dir;
  CHECK_EQ(run("bench --algos naive-row,sep-aware --terrain meander --n 2^10..2^12 "
               "--mem 2^16 --block 2^10 --out " + dir.file("bench.csv")),
           0);
  std::ifstream csv(dir.file("bench.csv"));
  std::string line;
  std::getline(csv, line);
  int rows = 0;
  while (std::getline(csv, line) && !line.empty()) ++rows;
  CHECK_EQ(rows, 2 * 3);  // two algorithms, three sizes
}

TEST_CASE("gen is deterministic for a fixed seed and respects EMG_SEED") {
  TempDir dir;
  CHECK_EQ(run("gen --kind drainage --dims 24x24 --seed 9 --out " + dir.file("a.emg")), 0);
  CHECK_EQ(run("gen --kind drainage --dims 24x24 --seed 9 --out " + dir.file("b.emg")), 0);
  const auto a = std::get<FlowDirGrid>(read_grid(dir.file("a.emg")));
  const auto b = std::get<FlowDirGrid>(read_grid(dir.file("b.emg")));
  CHECK(a.cells == b.cells);

  const std::string env_cmd = std::string("EMG_SEED=9 ") + EMG_CLI_PATH +
                              " gen --kind drainage --dims 24x24 --out " + dir.file("c.emg") +
                              " > /dev/null 2>&1";
  CHECK_EQ(WEXITSTATUS(std::system(env_cmd.c_str())), 0);
  const auto c = std::get<FlowDirGrid>(read_grid(dir.file("c.emg")));
  CHECK(a.cells == c.cells);
}

#endif  // EMG_CLI_PATH
