#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "conceptlab/checkpoint.hpp"
#include "conceptlab/cli.hpp"
#include "conceptlab/config.hpp"
#include "conceptlab/error.hpp"
#include "support.hpp"

using namespace conceptlab;
using nlohmann::json;
using testing_support::slurp;
using testing_support::spit;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small sizes so every subcommand finishes quickly.
const char* kSmallConfig = R"({
  "encoder_epochs": 5, "teacher_epochs": 8, "classifier_epochs": 8, "batch_size": 32,
  "classifier_lr": 0.01, "teacher_lr": 0.01, "cutoff": 5,
  "synthetic": {"rows": 150, "concepts": 20, "classes": 3, "feature_dim": 8, "vlm_dim": 6}
})";

class CliPipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = (dir / "cfg.json").string();
    spit(cfg, kSmallConfig);
    bundle = path("fx.cbmb");
    ASSERT_EQ(run_cli({"synth", "--config", cfg, "--out", bundle}).code, 0);
  }
  std::string path(const std::string& leaf) const { return (dir / leaf).string(); }

  testing_support::TempDir dir;
  std::string cfg, bundle;
};

}  // namespace

TEST(Config, EmptyDocumentEchoesDefaults) {
  const RunConfig c = config_from_json(json::object());
  const json echo = c.to_json();
  EXPECT_EQ(echo["alpha"], 1.0);
  EXPECT_EQ(echo["beta"], 1.0);
  EXPECT_EQ(echo["temperature"], 2.0);
  EXPECT_EQ(echo["lambda"], 0.5);
  EXPECT_EQ(echo["cutoff"], 100);
  EXPECT_EQ(echo["mode"], "task-agnostic");
  EXPECT_TRUE(echo.contains("synthetic"));
  EXPECT_EQ(config_from_json(echo).to_json(), echo);
}

TEST(Config, TypeErrorNamesTheKey) {
  try {
    config_from_json(json::parse(R"({"alpha": "one"})"));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeyIsRejected) {
  EXPECT_THROW(config_from_json(json::parse(R"({"alhpa": 1})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"synthetic": {"rowz": 1}})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"([1, 2])")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"temperature": 0})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"batch_size": 1.5})")), Error);
}

TEST(Config, HyperparameterTableRowIsAcceptedVerbatim) {
  const RunConfig c = config_from_json(json::parse(R"({
    "encoder_lr": 0.001, "encoder_scheduler": true, "classifier_lr": 0.0001,
    "alpha": 1, "beta": 1, "temperature": 2})"));
  EXPECT_EQ(c.train.encoder_schedule.base_lr, 0.001);
  EXPECT_EQ(c.train.encoder_schedule.kind, ScheduleKind::cosine);
  EXPECT_EQ(c.train.classifier_schedule.base_lr, 0.0001);
  EXPECT_EQ(c.train.alpha, 1.0);
  EXPECT_EQ(c.train.beta, 1.0);
  EXPECT_EQ(c.train.temperature, 2.0);
}

TEST(Config, MalformedFileIsAnError) {
  testing_support::TempDir dir;
  spit(dir / "bad.json", "{\"alpha\": ");
  EXPECT_THROW(load_config(dir / "bad.json"), Error);
  EXPECT_THROW(load_config(dir / "missing.json"), Error);
}

TEST(Cli, Fnv1aKnownVectors) {
  EXPECT_EQ(cli::fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(cli::fnv1a("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(cli::fnv1a("foobar"), 0x85944171f73967e8ULL);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
  EXPECT_EQ(run_cli({"goodness", "--out", "x.json"}).code, 2);
  EXPECT_EQ(run_cli({"goodness", "--bundle", "b", "--out", "x", "--mode", "sideways"}).code, 2);
  const Outcome o = run_cli({"refine", "--bundle", "b"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("usage error"), std::string::npos);
}

TEST(Cli, HelpListsEverySubcommand) {
  const Outcome o = run_cli({"--help"});
  EXPECT_EQ(o.code, 0);
  for (const char* sub : {"synth", "goodness", "histogram", "refine", "train-encoder", "train-teacher",
                          "train-classifier", "evaluate", "explain", "audit", "sensitivity"})
    EXPECT_NE(o.out.find(std::string("  ") + sub + " "), std::string::npos) << sub;
}

TEST(Cli, RuntimeErrorsExitOne) {
  testing_support::TempDir dir;
  const Outcome o = run_cli({"goodness", "--bundle", (dir / "missing.cbmb").string(), "--out",
                             (dir / "g.json").string()});
  EXPECT_EQ(o.code, 1);
  EXPECT_NE(o.err.find("error:"), std::string::npos);
  spit(dir / "cfg.json", R"({"alpha": "one"})");
  EXPECT_EQ(run_cli({"synth", "--config", (dir / "cfg.json").string(), "--out", (dir / "b.cbmb").string()}).code, 1);
}

TEST_F(CliPipeline, GoodnessJsonContract) {
  ASSERT_EQ(run_cli({"goodness", "--bundle", bundle, "--cutoff", "10", "--mode", "task-agnostic", "--out",
                     path("g.json")})
                .code,
            0);
  const json g = json::parse(slurp(path("g.json")));
  for (const char* key : {"mode", "cutoff", "mean_entropy", "per_unit", "provenance", "config"})
    EXPECT_TRUE(g.contains(key)) << key;
  EXPECT_EQ(g["cutoff"], 10);
  EXPECT_EQ(g["config"]["cutoff"], 10);
  EXPECT_EQ(g["per_unit"].size(), 150u);
  EXPECT_TRUE(g["provenance"]["inputs"].contains("bundle"));
  const double m = g["mean_entropy"];
  EXPECT_GT(m, 0.0);
  EXPECT_LT(m, std::log(10.0) + 1e-12);
}

TEST_F(CliPipeline, LinearAuditCollapses) {
  spit(path("lin.json"), std::string(kSmallConfig).replace(1, 0, R"("encoder_nonlinearity": "none", "beta": 0,)"));
  const Outcome enc = run_cli({"train-encoder", "--bundle", bundle, "--config", path("lin.json"), "--out", path("e.cbmb")});
  ASSERT_EQ(enc.code, 0) << enc.err;
  ASSERT_EQ(run_cli({"train-classifier", "--bundle", bundle, "--config", path("lin.json"), "--encoder",
                     path("e.cbmb"), "--out", path("c.cbmb")})
                .code,
            0);
  ASSERT_EQ(run_cli({"audit", "--bundle", bundle, "--encoder", path("e.cbmb"), "--classifier", path("c.cbmb"),
                     "--out", path("a.json")})
                .code,
            0);
  const json a = json::parse(slurp(path("a.json")));
  EXPECT_LT(a["max_deviation"].get<double>(), 1e-9);
  EXPECT_EQ(a["agreement"], 1.0);
}

TEST_F(CliPipeline, EverySubcommandIsByteIdenticalAndLeavesInputsAlone) {
  // Checkpoints consumed by the later commands.
  ASSERT_EQ(run_cli({"train-encoder", "--bundle", bundle, "--config", cfg, "--out", path("enc.cbmb")}).code, 0);
  ASSERT_EQ(run_cli({"train-teacher", "--bundle", bundle, "--config", cfg, "--out", path("tea.cbmb")}).code, 0);
  ASSERT_EQ(run_cli({"train-classifier", "--bundle", bundle, "--config", cfg, "--encoder", path("enc.cbmb"),
                     "--teacher", path("tea.cbmb"), "--out", path("clf.cbmb")})
                .code,
            0);
  ASSERT_EQ(run_cli({"synth", "--config", cfg, "--seed", "9", "--out", path("other.cbmb")}).code, 0);

  const std::vector<std::string> inputs = {bundle, cfg, path("enc.cbmb"), path("tea.cbmb"), path("clf.cbmb"),
                                           path("other.cbmb")};
  std::vector<std::string> before;
  for (const auto& p : inputs) before.push_back(slurp(p));

  const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
      {"s.cbmb", {"synth", "--config", cfg, "--seed", "4"}},
      {"g.json", {"goodness", "--bundle", bundle, "--config", cfg, "--mode", "task-specific"}},
      {"g.csv", {"goodness", "--bundle", bundle, "--config", cfg}},
      {"h.csv", {"histogram", "--bundle", bundle, "--config", cfg, "--bin-width", "0.25"}},
      {"r.csv", {"refine", "--bundle", bundle, "--config", cfg, "--steps", "4", "--trials", "3"}},
      {"r.json", {"refine", "--bundle", bundle, "--config", cfg, "--steps", "4", "--trials", "3", "--seed", "2"}},
      {"e.cbmb", {"train-encoder", "--bundle", bundle, "--config", cfg, "--seed", "3"}},
      {"t.cbmb", {"train-teacher", "--bundle", bundle, "--config", cfg}},
      {"c.cbmb",
       {"train-classifier", "--bundle", bundle, "--config", cfg, "--encoder", path("enc.cbmb"), "--teacher",
        path("tea.cbmb")}},
      {"v.json",
       {"evaluate", "--bundle", bundle, "--config", cfg, "--encoder", path("enc.cbmb"), "--classifier",
        path("clf.cbmb"), "--teacher", path("tea.cbmb")}},
      {"x.json",
       {"explain", "--bundle", bundle, "--config", cfg, "--encoder", path("enc.cbmb"), "--classifier",
        path("clf.cbmb"), "--k", "3", "--row", "7"}},
      {"a.json",
       {"audit", "--bundle", bundle, "--config", cfg, "--encoder", path("enc.cbmb"), "--classifier",
        path("clf.cbmb")}},
      {"n.json",
       {"sensitivity", "--relevant", bundle, "--irrelevant", bundle, "--config", cfg, "--runs", "2"}},
  };
  for (const auto& [leaf, args] : commands) {
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      std::vector<std::string> a = args;
      const std::string out = path(std::to_string(rep) + "_" + leaf);
      a.insert(a.end(), {"--out", out});
      const Outcome o = run_cli(a);
      ASSERT_EQ(o.code, 0) << args[0] << ": " << o.err;
      if (rep == 0)
        first = slurp(out);
      else
        EXPECT_EQ(slurp(out), first) << args[0] << " " << leaf;
    }
    EXPECT_FALSE(first.empty()) << leaf;
  }
  // Side files from training and refinement are stable too.
  EXPECT_EQ(slurp(path("0_c.history.csv")), slurp(path("1_c.history.csv")));
  EXPECT_EQ(slurp(path("0_e.history.cbmb")), slurp(path("1_e.history.cbmb")));
  EXPECT_EQ(slurp(path("0_r.random.csv")), slurp(path("1_r.random.csv")));
  for (std::size_t i = 0; i < inputs.size(); ++i) EXPECT_EQ(slurp(inputs[i]), before[i]) << inputs[i];
}

TEST_F(CliPipeline, SeedChangesTrainingOutput) {
  ASSERT_EQ(run_cli({"train-encoder", "--bundle", bundle, "--config", cfg, "--seed", "1", "--out", path("a.cbmb")}).code, 0);
  ASSERT_EQ(run_cli({"train-encoder", "--bundle", bundle, "--config", cfg, "--seed", "2", "--out", path("b.cbmb")}).code, 0);
  EXPECT_NE(slurp(path("a.cbmb")), slurp(path("b.cbmb")));
}

TEST_F(CliPipeline, SynthOutputIsAValidBundle) {
  const EmbeddingBundle b = read_bundle(bundle);
  EXPECT_EQ(b.rows(), 150);
  EXPECT_EQ(b.concept_count(), 20);
  EXPECT_EQ(b.class_count(), 3);
  write_bundle(b, path("copy.cbmb"));
  EXPECT_EQ(slurp(path("copy.cbmb")), slurp(bundle));
}
