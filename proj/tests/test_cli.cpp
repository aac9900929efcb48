#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "privmark/serialization.hpp"

namespace {

using privmark::json;

struct CliRun {
  int exit_code = -1;
  std::string output;
};

CliRun run_cli(const std::string& args, const std::string& out_file = "") {
  const std::string capture = out_file.empty()
                                  ? std::string("/tmp/privmark_cli_stdout.txt")
                                  : out_file;
  const std::string cmd = std::string(PRIVMARK_CLI_PATH) + " " + args +
                          (out_file.empty() ? " > " + capture + " 2>/dev/null"
                                            : " 2>/dev/null");
  const int status = std::system(cmd.c_str());
  CliRun run;
  run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(capture);
  std::stringstream buf;
  buf << in.rdbuf();
  run.output = buf.str();
  return run;
}

std::vector<std::string> data_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty() && line[0] != '#') lines.push_back(line);
  return lines;
}

std::vector<double> split_csv(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(std::stod(field));
  return out;
}

}  // namespace

TEST_CASE("cli help and version") {
  CHECK(run_cli("--help").exit_code == 0);
  CHECK(run_cli("--version").exit_code == 0);
  CHECK(run_cli("bounds --help").exit_code == 0);
}

TEST_CASE("cli rejects invalid parameters with exit code 2") {
  CHECK(run_cli("bounds --theta 1.5").exit_code == 2);
  CHECK(run_cli("bounds --theta 0.4").exit_code == 2);
  CHECK(run_cli("payment-accuracy --tau-min 0 --tau-max 0.4").exit_code == 2);
  CHECK(run_cli("no-such-command").exit_code == 2);
  CHECK(run_cli("bounds --no-such-flag 1").exit_code == 2);
  CHECK(run_cli("lemma1-audit --population 7").exit_code == 2);
}

TEST_CASE("cli bounds emits the documented schema") {
  const std::string out = "/tmp/privmark_bounds.csv";
  const CliRun run = run_cli(
      "bounds --theta 0.8 --prior-one 0.7 --eps 1.0 --populations 2 10 100 "
      "--out " + out, out);
  REQUIRE(run.exit_code == 0);
  const auto lines = data_lines(run.output);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "eps,N,v_lb,v_ub,gap,d");
  double prev_gap = 1e300;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const auto row = split_csv(lines[k]);
    REQUIRE(row.size() == 6);
    CHECK(row[0] == 1.0);
    CHECK(row[3] >= row[2]);        // upper above lower
    CHECK(row[4] < prev_gap);       // gap shrinks with the population
    CHECK(row[5] > 0.0);            // decay rate positive
    prev_gap = row[4];
  }
}

TEST_CASE("cli bounds single-point grid gives a single row") {
  const std::string out = "/tmp/privmark_bounds_single.csv";
  const CliRun run = run_cli(
      "bounds --eps 0.5 --populations 4 --out " + out, out);
  REQUIRE(run.exit_code == 0);
  CHECK(data_lines(run.output).size() == 2);
}

TEST_CASE("cli payment-accuracy emits one row per target") {
  const std::string out = "/tmp/privmark_pa.csv";
  const CliRun run = run_cli(
      "payment-accuracy --tau-min 0.5 --tau-max 0.5 --tau-count 1 --out " + out,
      out);
  REQUIRE(run.exit_code == 0);
  const auto lines = data_lines(run.output);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "tau,eps_tilde,n_tilde,lower,upper,designed_total,chernoff");
  const auto row = split_csv(lines[1]);
  CHECK(row[0] == 0.5);
  CHECK(row[3] <= row[4]);
}

TEST_CASE("cli simulate honors config files and flag overrides") {
  const std::string cfg_path = "/tmp/privmark_sim_config.json";
  {
    json cfg{{"model", privmark::ModelParams(0.7, 0.8, 3)},
             {"mechanism", {{"type", "peer"}, {"eps", 1.0}}},
             {"trials", 5000},
             {"seed", 42}};
    std::ofstream(cfg_path) << cfg.dump();
  }
  const std::string out_a = "/tmp/privmark_sim_a.json";
  const std::string out_b = "/tmp/privmark_sim_b.json";
  const CliRun a =
      run_cli("simulate --config " + cfg_path + " --out " + out_a, out_a);
  REQUIRE(a.exit_code == 0);
  const CliRun b =
      run_cli("simulate --config " + cfg_path + " --out " + out_b, out_b);
  REQUIRE(b.exit_code == 0);
  CHECK(a.output == b.output);  // deterministic given the experiment spec

  const json ja = json::parse(a.output);
  CHECK(ja.at("result").at("trials") == 5000);
  CHECK(ja.at("meta").at("command") == "simulate");

  // Flag overrides the config value.
  const std::string out_c = "/tmp/privmark_sim_c.json";
  const CliRun c = run_cli(
      "simulate --config " + cfg_path + " --trials 100 --out " + out_c, out_c);
  REQUIRE(c.exit_code == 0);
  CHECK(json::parse(c.output).at("result").at("trials") == 100);
}

TEST_CASE("cli simulate can dump trials") {
  const std::string cfg_path = "/tmp/privmark_sim_dump_cfg.json";
  {
    json cfg{{"model", privmark::ModelParams(0.6, 0.8, 2)},
             {"mechanism", {{"type", "genie"}, {"eps", 1.0}}},
             {"trials", 25},
             {"seed", 9}};
    std::ofstream(cfg_path) << cfg.dump();
  }
  const std::string dump_path = "/tmp/privmark_trials.csv";
  const CliRun run = run_cli("simulate --config " + cfg_path +
                             " --dump-trials " + dump_path +
                             " --out /tmp/privmark_sim_d.json");
  REQUIRE(run.exit_code == 0);
  std::ifstream dump(dump_path);
  std::string header;
  std::getline(dump, header);
  CHECK(header == "trial,state,reports,decision,payment_0,payment_1");
  int rows = 0;
  std::string line;
  while (std::getline(dump, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 25);
}

TEST_CASE("cli equilibrium verifies the designed mechanism") {
  const std::string cfg_path = "/tmp/privmark_eq_cfg.json";
  {
    json cfg{{"model", privmark::ModelParams(0.7, 0.8, 4)},
             {"mechanism", {{"type", "peer"}, {"eps", 1.0}}}};
    std::ofstream(cfg_path) << cfg.dump();
  }
  const std::string out = "/tmp/privmark_eq.json";
  const CliRun run =
      run_cli("equilibrium --config " + cfg_path + " --out " + out, out);
  REQUIRE(run.exit_code == 0);
  const json j = json::parse(run.output);
  CHECK(j.at("result").at("is_nash").get<bool>());

  const CliRun br = run_cli("best-response --config " + cfg_path +
                            " --individual 1 --out /tmp/privmark_br.json",
                            "/tmp/privmark_br.json");
  REQUIRE(br.exit_code == 0);
  const json jb = json::parse(br.output);
  CHECK(jb.at("result").at("classification") == "symmetric");
}

TEST_CASE("cli format flag") {
  const std::string out = "/tmp/privmark_bounds_json.json";
  const CliRun run = run_cli(
      "bounds --eps 1.0 --populations 2 --format json --out " + out, out);
  REQUIRE(run.exit_code == 0);
  const json j = json::parse(run.output);
  REQUIRE(j.at("result").size() == 1);
  CHECK(j.at("result")[0].at("v_ub").get<double>() >=
        j.at("result")[0].at("v_lb").get<double>());
  // Structured reports only speak json.
  CHECK(run_cli("simulate --format csv").exit_code == 2);
  CHECK(run_cli("bounds --format yaml").exit_code == 2);
}

TEST_CASE("cli lemma1 audit reports manifold distances") {
  const std::string out = "/tmp/privmark_audit.json";
  const CliRun run = run_cli(
      "lemma1-audit --seeds 5 --resolution 11 --population 2 --seed 77 --out " +
          out,
      out);
  REQUIRE(run.exit_code == 0);
  const json j = json::parse(run.output);
  CHECK(j.at("result").at("cases").size() == 5);
  CHECK(j.at("result").at("within_one_grid_step").get<bool>());
  CHECK(j.at("result").at("max_distance").get<double>() <= 0.1 + 1e-12);
}
