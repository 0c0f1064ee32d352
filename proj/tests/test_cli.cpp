#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cpquant/io.hpp"
#include "test_util.hpp"

using namespace cpquant;
using testutil::make_mono_data;
using testutil::gaussian_xs;
using testutil::vec2;

namespace {

std::string bin_path() {
  const char* env = std::getenv("CPQUANT_BIN");
  REQUIRE(env != nullptr);
  return env;
}

std::string src_path() {
  const char* env = std::getenv("CPQUANT_SRC");
  REQUIRE(env != nullptr);
  return env;
}

int run(const std::string& cmd) {
  int status = std::system((cmd + " > /tmp/cpquant_cli_stdout.txt 2> /tmp/cpquant_cli_stderr.txt").c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Deterministic two-phase fixture shared with the golden files.
void write_fixture(const std::string& path) {
  auto xs = gaussian_xs(30, 1357);
  Dataset d = make_mono_data(xs, {15}, {vec2(0.5, 1.0), vec2(2.5, -0.5)});
  // Light deterministic noise, rounded to keep the CSV short and exact.
  for (int i = 0; i < d.n(); ++i) {
    d.y[i] += 0.05 * std::sin(3.7 * (i + 1));
    d.y[i] = std::round(d.y[i] * 1e6) / 1e6;
    d.x(i, 0) = std::round(d.x(i, 0) * 1e6) / 1e6;
  }
  save_dataset_csv(d, path);
}

}  // namespace

TEST_CASE("cli fit: success, output file, exit codes") {
  std::string data = "/tmp/cpquant_cli_fit.csv";
  write_fixture(data);
  std::string out = "/tmp/cpquant_cli_fit.json";
  int code = run(bin_path() + " fit --data " + data +
                 " --model mono_molecular --tau 0.5 --k 1 --seed 42 --out " + out);
  CHECK(code == 0);
  nlohmann::json j = nlohmann::json::parse(slurp(out));
  SegmentedFit fit = segmented_fit_from_json(j);
  CHECK(fit.k == 1);
  CHECK(fit.breaks[0] == 15);
  CHECK(std::abs(fit.phis[0][0] - 0.5) <= 0.1);

  // Missing column named in the error, exit 2.
  std::ofstream bad("/tmp/cpquant_cli_bad.csv");
  bad << "x1,z\n1,2\n";
  bad.close();
  code = run(bin_path() + " fit --data /tmp/cpquant_cli_bad.csv --k 0");
  CHECK(code == 2);
  std::string err = slurp("/tmp/cpquant_cli_stderr.txt");
  CHECK(err.find("missing column 'y'") != std::string::npos);

  // Unknown model, exit 2.
  code = run(bin_path() + " fit --data " + data + " --model nope --k 0");
  CHECK(code == 2);

  // Unparseable flags, exit 2.
  code = run(bin_path() + " fit");
  CHECK(code == 2);
}

TEST_CASE("cli select: criterion table in output") {
  std::string data = "/tmp/cpquant_cli_sel.csv";
  write_fixture(data);
  std::string out = "/tmp/cpquant_cli_sel.json";
  int code = run(bin_path() + " select --data " + data +
                 " --tau 0.5 --k-max 2 --seed 42 --out " + out);
  CHECK(code == 0);
  nlohmann::json j = nlohmann::json::parse(slurp(out));
  SelectionResult res = selection_result_from_json(j);
  CHECK(res.criterion.size() == 3);
  CHECK(res.k_hat == 1);
}

TEST_CASE("cli simulate: requires a seed and positive reps") {
  std::string scn = "/tmp/cpquant_cli_scn.cfg";
  std::ofstream f(scn);
  f << "scenario.n = 30\n"
       "scenario.breaks = 15\n"
       "scenario.phis = 0.5,1; 2.5,-0.5\n"
       "scenario.error_law = normal\n";
  f.close();

  // No seed anywhere: exit 2.
  int code = run(bin_path() + " simulate --scenario " + scn + " --reps 2");
  CHECK(code == 2);
  std::string err = slurp("/tmp/cpquant_cli_stderr.txt");
  CHECK(err.find("seed") != std::string::npos);

  // reps = 0: exit 2.
  code = run(bin_path() + " simulate --scenario " + scn +
             " --reps 0 --seed 1");
  CHECK(code == 2);

  // Seed via flag works; writes report and CSV.
  std::string out = "/tmp/cpquant_cli_sim.json";
  std::string csv = "/tmp/cpquant_cli_sim.csv";
  code = run(bin_path() + " simulate --scenario " + scn +
             " --reps 3 --seed 11 --threads 2 --out " + out + " --csv " + csv);
  CHECK(code == 0);
  McReport report = mc_report_from_json(nlohmann::json::parse(slurp(out)));
  CHECK(report.n_reps == 3);
  CHECK(slurp(csv).find("method,rep") == 0);
}

TEST_CASE("cli simulate: unknown scenario keys are rejected by name") {
  std::string scn = "/tmp/cpquant_cli_scn2.cfg";
  std::ofstream f(scn);
  f << "scenario.n = 30\n"
       "scenario.breaks = 15\n"
       "scenario.phis = 0.5,1; 2.5,-0.5\n"
       "scenario.seed = 5\n"
       "scenario.bogus_key = 1\n";
  f.close();
  int code = run(bin_path() + " simulate --scenario " + scn + " --reps 1");
  CHECK(code == 2);
  std::string err = slurp("/tmp/cpquant_cli_stderr.txt");
  CHECK(err.find("scenario.bogus_key") != std::string::npos);
}

TEST_CASE("cli simulate: bundled scenario smoke run") {
  std::string out = "/tmp/cpquant_cli_t1.json";
  int code = run(bin_path() + " simulate --scenario " + src_path() +
                 "/configs/table1.cfg --reps 2 --threads 2 --out " + out);
  CHECK(code == 0);
  McReport report = mc_report_from_json(nlohmann::json::parse(slurp(out)));
  CHECK(report.n_reps == 2);
  CHECK(report.series.size() == 2);
  CHECK(report.spec.n == 100);
}

TEST_CASE("cli limit-law and check-normality run end to end") {
  std::string scn = src_path() + "/configs/table1.cfg";
  std::string out = "/tmp/cpquant_cli_pmf.json";
  int code = run(bin_path() + " limit-law --scenario " + scn +
                 " --break-index 1 --J 5 --draws 500 --threads 2 --out " + out);
  CHECK(code == 0);
  LimitLawPmf pmf = limit_pmf_from_json(nlohmann::json::parse(slurp(out)));
  CHECK(pmf.J == 5);
  double mass = 0.0;
  for (double p : pmf.probs) mass += p;
  CHECK(mass == doctest::Approx(1.0));

  std::string scn2 = "/tmp/cpquant_cli_scn3.cfg";
  std::ofstream f(scn2);
  f << "scenario.n = 40\n"
       "scenario.breaks = 20\n"
       "scenario.phis = 0.5,1; 2.5,-0.5\n"
       "scenario.seed = 9\n";
  f.close();
  std::string out2 = "/tmp/cpquant_cli_norm.json";
  code = run(bin_path() + " check-normality --scenario " + scn2 +
             " --segment 1 --reps 20 --f0 true --threads 2 --out " + out2);
  CHECK(code == 0);
  nlohmann::json j = nlohmann::json::parse(slurp(out2));
  CHECK(j.at("n_used").get<int>() == 20);
}

TEST_CASE("cli fit golden file: fixed fixture and seed give identical bytes") {
  std::string golden_dir = src_path() + "/tests/golden";
  std::string data = golden_dir + "/two_phase.csv";
  std::string out = "/tmp/cpquant_cli_golden_fit.json";
  int code = run(bin_path() + " fit --data " + data +
                 " --tau 0.5 --k 1 --seed 2024 --out " + out);
  CHECK(code == 0);
  CHECK(slurp(out) == slurp(golden_dir + "/fit.json"));

  std::string out2 = "/tmp/cpquant_cli_golden_sel.json";
  code = run(bin_path() + " select --data " + data +
             " --tau 0.5 --k-max 2 --seed 2024 --out " + out2);
  CHECK(code == 0);
  CHECK(slurp(out2) == slurp(golden_dir + "/select.json"));
}
