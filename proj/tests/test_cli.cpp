// SPDX-License-Identifier: Apache-2.0
//
// Drives the command-line binary end to end.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "mca_cli_test";

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MCA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small, fast problem shared by the training invocations.
const std::string kSmall =
    "--set dataset.num_classes=4 --set dataset.n_train=60 --set dataset.n_test=30 "
    "--set dataset.latent_dim=6 --set dataset.ambient_dims=[8,6] --set train.batch_size=20 "
    "--set train.warmup_epochs=2 --set train.history=2 --set train.emb_dim=8 "
    "--set train.hidden=12 --epochs 4 --quiet";

struct Fresh {
  Fresh() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
  ~Fresh() { fs::remove_all(kRoot); }
};

}  // namespace

TEST_CASE_FIXTURE(Fresh, "missing config file exits 2 without artifacts") {
  const fs::path out = kRoot / "none";
  CHECK(run_cli("run --config " + (kRoot / "absent.json").string() + " --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE_FIXTURE(Fresh, "invalid values exit 2") {
  const fs::path out = kRoot / "bad";
  CHECK(run_cli("run --set train.bogus=1 --out " + out.string()) == 2);
  CHECK(run_cli("run --set train.batch_size=0 --out " + out.string()) == 2);
  CHECK(run_cli("sweep --noise 0.2,abc --out " + out.string()) == 2);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE_FIXTURE(Fresh, "gradcheck passes and writes artifacts") {
  const fs::path out = kRoot / "gc";
  CHECK(run_cli("gradcheck --out " + out.string()) == 0);
  CHECK(fs::exists(out / "report.csv"));
  CHECK(fs::exists(out / "summary.json"));
  CHECK(fs::exists(out / "config.echo"));
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(summary["gradcheck"].size() == 5);
  for (const auto& c : summary["gradcheck"]) CHECK(c["max_relative_error"].get<double>() <= 1e-4);
}

TEST_CASE_FIXTURE(Fresh, "single run writes artifacts and replays from its echo") {
  const fs::path a = kRoot / "a";
  REQUIRE(run_cli("run " + kSmall + " --noise 0.4 --seeds 3 --out " + a.string()) == 0);
  for (const char* f : {"report.csv", "summary.json", "config.echo"}) CHECK(fs::exists(a / f));
  CHECK(fs::exists(a / "checkpoints" / "mca-rho0.40-seed3.ckpt"));
  const std::string report = slurp(a / "report.csv");
  CHECK(report.rfind("# mca report v1\n", 0) == 0);

  const fs::path b = kRoot / "b";
  REQUIRE(run_cli("run --config " + (a / "config.echo").string() + " --out " + b.string()) == 0);
  CHECK(slurp(b / "report.csv") == report);

  const auto summary = nlohmann::json::parse(slurp(a / "summary.json"));
  CHECK(summary["results"].size() == 1);
  CHECK(summary["config"]["seeds"][0] == 3);
  CHECK(summary.contains("wall_seconds"));
  CHECK(summary.contains("version"));
}

TEST_CASE_FIXTURE(Fresh, "sweep, compare and ablate emit their tables") {
  const fs::path s = kRoot / "s";
  REQUIRE(run_cli("sweep " + kSmall + " --noise 0.2,0.4 --out " + s.string()) == 0);
  std::stringstream sweep(slurp(s / "sweep.csv"));
  std::string line;
  int lines = 0;
  while (std::getline(sweep, line)) ++lines;
  CHECK(lines == 4);  // schema, header, two rates

  const fs::path c = kRoot / "c";
  REQUIRE(run_cli("compare " + kSmall + " --noise 0.6 --out " + c.string()) == 0);
  CHECK(slurp(c / "compare.csv").find("0.600000,") != std::string::npos);

  const fs::path ab = kRoot / "ab";
  REQUIRE(run_cli("ablate " + kSmall + " --set ablation.mjc=[\\\"intra-only\\\"] " +
                  "--set ablation.maa=[\\\"full\\\",\\\"instance-only\\\"] --out " + ab.string()) ==
          0);
  const std::string table = slurp(ab / "ablation.csv");
  CHECK(table.find("intra-only/full") != std::string::npos);
  CHECK(table.find("intra-only/instance-only") != std::string::npos);
}

TEST_CASE_FIXTURE(Fresh, "numeric divergence exits 3 with an error record") {
  const fs::path out = kRoot / "div";
  CHECK(run_cli("run " + kSmall + " --set train.lr=1e300 --out " + out.string()) == 3);
  const auto err = nlohmann::json::parse(slurp(out / "error.json"));
  CHECK(err["kind"] == "divergence");
  CHECK(err["epoch"].get<int>() >= 1);
}
