#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../../tools/cli.hpp"
#include "phylocorr/asr.hpp"
#include "phylocorr/csv.hpp"
#include "phylocorr/sampler.hpp"

namespace fs = std::filesystem;
using phylocorr::cli::cli_main;

namespace {

const std::string kSrc = PHYLOCORR_SOURCE_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "phylocorr");
  return cli_main(args);
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(slurp(p));
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("phylocorr_cli_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                        "_" + std::to_string(reinterpret_cast<std::uintptr_t>(&root) & 0xffff));
    fs::remove_all(root);
    fs::create_directories(root);
    spit(root / "cont.json", R"({"rho": 0.6, "sigma": [1.0, 1.5], "mu": [0.2, -0.1],
                                "rho_f": 0.5, "sigma_f": [0.8, 0.8], "rho_l": 0.6, "sigma_l": [1.0, 1.0],
                                "lambda": [0.5, 0.8]})");
    spit(root / "ordbin.json", R"({"cutpoints": [-1.0, 0.0, 1.0], "rho": 0.8, "sigma": [1.0, 1.0],
                                  "rho_f": 0.6, "sigma_f": [1.0, 1.0], "rho_l": 0.8, "sigma_l": [1.0, 1.0],
                                  "lambda": [0.1, 0.05]})");
    ASSERT_EQ(run({"simulate", "--params", (root / "cont.json").string(), "--likelihood", "cont", "--model", "phylo",
                   "--ntips", "40", "--seed", "5", "--out", (root / "sim_a").string()}),
              0);
    ASSERT_EQ(run({"simulate", "--params", (root / "cont.json").string(), "--likelihood", "cont", "--model", "phylo",
                   "--ntips", "40", "--seed", "6", "--out", (root / "sim_b").string()}),
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  static std::vector<std::string> fit_args(const std::string& sim, const std::string& model, const std::string& out,
                                           int iters = 150) {
    return {"fit", "--data", (root / sim / "languages.csv").string(), "--schema", (root / sim / "schema.json").string(),
            "--tree", (root / sim / "tree.nwk").string(), "--model", model, "--chains", "2", "--warmup",
            std::to_string(iters), "--iters", std::to_string(iters), "--seed", "3", "--out", (root / out).string()};
  }
  // Fits once per name for the whole suite.
  static fs::path fitted(const std::string& sim, const std::string& model) {
    const std::string name = "fit_" + sim + "_" + model;
    if (!fs::exists(root / name / "manifest.json")) {
      EXPECT_EQ(run(fit_args(sim, model, name)), 0);
    }
    return root / name;
  }
};

fs::path Cli::root;

TEST_F(Cli, FitRejectsZeroChains) {
  auto a = fit_args("sim_a", "vanilla", "zero_chains");
  a[10] = "0";
  ASSERT_EQ(a[9], "--chains");
  EXPECT_EQ(run(a), 1);
  EXPECT_FALSE(fs::exists(root / "zero_chains" / "draws.bin"));
}

TEST_F(Cli, FitValidationErrors) {
  auto missing = fit_args("sim_a", "vanilla", "bad1");
  missing[2] = (root / "nope.csv").string();
  EXPECT_EQ(run(missing), 1);
  auto bad_model = fit_args("sim_a", "vanilla", "bad2");
  bad_model[8] = "hierarchical-ish";
  EXPECT_EQ(run(bad_model), 1);
  auto bad_accept = fit_args("sim_a", "vanilla", "bad3");
  bad_accept.insert(bad_accept.end(), {"--target-accept", "1.0"});
  EXPECT_EQ(run(bad_accept), 1);
  EXPECT_EQ(run({"fit", "--no-such-flag"}), 1);
}

TEST_F(Cli, FitUnwritableOutputIsIoError) {
  spit(root / "plain_file", "x");
  auto a = fit_args("sim_a", "vanilla", "plain_file/run");
  EXPECT_EQ(run(a), 3);
}

TEST_F(Cli, FitWritesRunDirectory) {
  const fs::path d = fitted("sim_a", "vanilla");
  for (const char* f : {"config.json", "data.csv", "schema.json", "tree.nwk", "draws.bin", "draws.csv", "summary.csv",
                        "summary.txt", "evaluation.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
  EXPECT_EQ(m.at("seed").get<int>(), 3);
  EXPECT_EQ(m.at("model").get<std::string>(), "vanilla");
  EXPECT_FALSE(m.at("config_hash").get<std::string>().empty());
  EXPECT_FALSE(m.at("dataset_hash").get<std::string>().empty());
  EXPECT_FALSE(m.at("version").get<std::string>().empty());
  const auto draws = phylocorr::read_draws_binary((d / "draws.bin").string());
  EXPECT_EQ(draws.chains, 2);
  EXPECT_EQ(draws.iterations, 150);
  const auto rows = read_csv_rows(d / "summary.csv");
  bool has_rho = false;
  for (const auto& r : rows) has_rho = has_rho || (!r.empty() && r[0] == "rho");
  EXPECT_TRUE(has_rho);
}

TEST_F(Cli, RerunFromConfigIsByteIdentical) {
  const fs::path d = fitted("sim_a", "vanilla");
  ASSERT_EQ(run({"fit", "--config", (d / "config.json").string(), "--out", (root / "rerun").string()}), 0);
  for (const char* f : {"draws.bin", "draws.csv", "summary.csv", "evaluation.json", "data.csv"})
    EXPECT_EQ(slurp(d / f), slurp(root / "rerun" / f)) << f;
  const auto m1 = nlohmann::json::parse(slurp(d / "manifest.json"));
  const auto m2 = nlohmann::json::parse(slurp(root / "rerun" / "manifest.json"));
  EXPECT_EQ(m1.at("config_hash"), m2.at("config_hash"));
  EXPECT_EQ(m1.at("dataset_hash"), m2.at("dataset_hash"));
}

TEST_F(Cli, ConfigFlagsOverrideFile) {
  const fs::path d = fitted("sim_a", "vanilla");
  auto cfg = nlohmann::json::parse(slurp(d / "config.json"));
  cfg["chains"] = 0;
  spit(root / "bad_config.json", cfg.dump());
  EXPECT_EQ(run({"fit", "--config", (root / "bad_config.json").string(), "--out", (root / "cfg1").string()}), 1);
  EXPECT_EQ(run({"fit", "--config", (root / "bad_config.json").string(), "--chains", "1", "--iters", "20", "--warmup",
                 "20", "--out", (root / "cfg2").string()}),
            0);
  cfg["chains"] = 1;
  cfg["bogus"] = 1;
  spit(root / "unknown_key.json", cfg.dump());
  EXPECT_EQ(run({"fit", "--config", (root / "unknown_key.json").string(), "--out", (root / "cfg3").string()}), 1);
}

TEST_F(Cli, SimulateRejectsEmptyTree) {
  EXPECT_EQ(run({"simulate", "--params", (root / "ordbin.json").string(), "--ntips", "0", "--out",
                 (root / "sim_zero").string()}),
            1);
  // inputs are checked at validation time
  EXPECT_EQ(run({"simulate", "--params", (root / "missing.json").string(), "--ntips", "10", "--out",
                 (root / "sim_missing").string()}),
            1);
}

TEST_F(Cli, SimulateIsDeterministicAndWritesTruth) {
  for (const char* out : {"sim200_a", "sim200_b"})
    ASSERT_EQ(run({"simulate", "--params", (root / "ordbin.json").string(), "--model", "phylo", "--likelihood",
                   "ordbin", "--ntips", "200", "--seed", "42", "--out", (root / out).string()}),
              0);
  for (const char* f : {"languages.csv", "schema.json", "tree.nwk", "truth.json", "manifest.json"})
    EXPECT_EQ(slurp(root / "sim200_a" / f), slurp(root / "sim200_b" / f)) << f;
  const auto truth = nlohmann::json::parse(slurp(root / "sim200_a" / "truth.json"));
  EXPECT_DOUBLE_EQ(truth.at("rho_l").get<double>(), 0.8);
  EXPECT_EQ(read_csv_rows(root / "sim200_a" / "languages.csv").size(), 201u);
}

TEST_F(Cli, CompareNeedsTwoRuns) {
  const fs::path d = fitted("sim_a", "vanilla");
  EXPECT_EQ(run({"compare", d.string(), "--out", (root / "cmp_one").string()}), 1);
  EXPECT_EQ(run({"compare", d.string(), (root / "not_a_run").string(), "--out", (root / "cmp_bad").string()}), 1);
}

TEST_F(Cli, CompareDuplicateRunGivesZeroDeltas) {
  const fs::path d = fitted("sim_a", "vanilla");
  ASSERT_EQ(run({"compare", d.string(), d.string(), "--out", (root / "cmp_dup").string()}), 0);
  const auto rows = read_csv_rows(root / "cmp_dup" / "comparison.csv");
  ASSERT_EQ(rows.size(), 3u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stod(rows[i][3]), 0.0);  // delta_elpd
    if (rows[i][6] != "NA" && rows[i][6] != "nan") EXPECT_EQ(std::stod(rows[i][6]), 0.0);
  }
}

TEST_F(Cli, CompareRefusesDifferentDatasets) {
  const fs::path a = fitted("sim_a", "vanilla");
  const fs::path b = fitted("sim_b", "vanilla");
  EXPECT_EQ(run({"compare", a.string(), b.string(), "--out", (root / "cmp_mismatch").string()}), 1);
  EXPECT_FALSE(fs::exists(root / "cmp_mismatch" / "comparison.csv"));
}

TEST_F(Cli, CompareThreeModels) {
  const fs::path v = fitted("sim_a", "vanilla");
  const fs::path h = fitted("sim_a", "hier");
  const fs::path p = fitted("sim_a", "phylo");
  ASSERT_EQ(run({"compare", v.string(), h.string(), p.string(), "--out", (root / "cmp3").string()}), 0);
  const auto rows = read_csv_rows(root / "cmp3" / "comparison.csv");
  ASSERT_EQ(rows.size(), 4u);
  int refs = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].back() == "true") {
      ++refs;
      EXPECT_EQ(std::stod(rows[i][6]), 0.0);
    } else {
      EXPECT_LE(std::stod(rows[i][6]), 0.0);
    }
  }
  EXPECT_EQ(refs, 1);
  EXPECT_TRUE(fs::exists(root / "cmp3" / "comparison.txt"));
}

TEST_F(Cli, PlotdataUnknownKind) {
  const fs::path d = fitted("sim_a", "vanilla");
  EXPECT_EQ(run({"plotdata", d.string(), "--kind", "histogram"}), 1);
  EXPECT_EQ(run({"plotdata", (root / "not_a_run").string(), "--kind", "scatter"}), 1);
  // tree annotation needs a phylo run
  EXPECT_EQ(run({"plotdata", d.string(), "--kind", "tree-annotation"}), 1);
}

TEST_F(Cli, ScatterColumnContract) {
  const std::string sp = kSrc + "/data/soundpop/";
  ASSERT_EQ(run({"fit", "--data", sp + "languages.csv", "--schema", sp + "schema.json", "--model", "vanilla",
                 "--chains", "1", "--warmup", "50", "--iters", "50", "--out", (root / "soundpop").string()}),
            0);
  ASSERT_EQ(run({"plotdata", (root / "soundpop").string(), "--kind", "scatter", "--out", (root / "sp_plot").string()}),
            0);
  const auto rows = read_csv_rows(root / "sp_plot" / "scatter.csv");
  ASSERT_FALSE(rows.empty());
  EXPECT_EQ(rows[0], (std::vector<std::string>{"taxon", "log-pop-std", "log-seg-std", "family"}));
  EXPECT_EQ(rows.size(), 1471u);
  double sum = 0, sq = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double x = std::stod(rows[i][1]);
    sum += x;
    sq += x * x;
  }
  const double n = static_cast<double>(rows.size() - 1);
  EXPECT_NEAR(sum / n, 0.0, 1e-6);
  EXPECT_NEAR(sq / n - (sum / n) * (sum / n), 1.0, 0.01);
  EXPECT_TRUE(fs::exists(root / "sp_plot" / "scatter.svg"));
  EXPECT_TRUE(fs::exists(root / "sp_plot" / "scatter_trends.csv"));
}

TEST_F(Cli, CrosstabMatchesAffixCounts) {
  const std::string af = kSrc + "/data/affix/";
  ASSERT_EQ(run({"fit", "--data", af + "languages.csv", "--schema", af + "schema.json", "--tree", af + "tree.nwk",
                 "--model", "phylo", "--chains", "1", "--warmup", "40", "--iters", "40", "--max-depth", "6",
                 "--out", (root / "affix_phylo").string(), "--emit-plots"}),
            0);
  const fs::path d = root / "affix_phylo";
  ASSERT_EQ(run({"plotdata", d.string(), "--kind", "crosstab", "--out", (root / "ct").string()}), 0);
  const auto rows = read_csv_rows(root / "ct" / "crosstab.csv");
  const std::vector<std::vector<std::string>> want{
      {"level", "Postposition", "Preposition"},  {"Strongly suffixing", "214", "63"},
      {"Weakly suffixing", "50", "33"},          {"Equal prefixing and suffixing", "52", "61"},
      {"Weakly prefixing", "24", "43"},          {"Strongly prefixing", "9", "40"}};
  EXPECT_EQ(rows, want);
  EXPECT_EQ(slurp(root / "ct" / "crosstab.csv"), slurp(d / "plots" / "crosstab.csv"));

  // tree annotation is a pass-through of the reconstruction
  ASSERT_EQ(run({"plotdata", d.string(), "--kind", "tree-annotation", "--out", (root / "ta").string()}), 0);
  EXPECT_EQ(slurp(root / "ta" / "tree_annotation.nwk"), slurp(d / "asr.nwk"));
  EXPECT_EQ(slurp(root / "ta" / "tree_annotation.csv"), slurp(d / "asr.csv"));

  // and asr.nwk is what the library produces from the stored draws
  using namespace phylocorr;
  const auto prepared = cli::prepare_data(cli::run_config_from_json(slurp(d / "config.json")));
  const ModelData md = make_model_data(prepared.table, Likelihood::OrdinalBinary, &*prepared.tree);
  ModelSpec spec;
  spec.likelihood = Likelihood::OrdinalBinary;
  spec.dependency = Dependency::Phylo;
  ReconstructOptions ro;
  ro.seed = 1;
  const auto recs = reconstruct(spec, read_draws_binary((d / "draws.bin").string()), md, ro);
  EXPECT_EQ(slurp(d / "asr.nwk"), annotated_newick(*md.tree, recs) + "\n");
}

}  // namespace
