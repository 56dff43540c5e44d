#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sad/bases/basis.hpp"
#include "sad/error.hpp"
#include "sad/experiment/config.hpp"
#include "sad/experiment/recipes.hpp"
#include "sad/experiment/report.hpp"

using namespace sad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sadkit_experiment_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// A sad_sweep small enough for a unit test: mlp on R^4, four SADs, two seeds.
json tiny_sweep(const fs::path& out) {
  json doc = ExperimentConfig::defaults(Recipe::sad_sweep);
  doc["out"] = out.string();
  doc["seeds"] = 2;
  doc["family"]["dim"] = 4;
  doc["family"]["hidden_layers"] = 1;
  doc["geometry"]["n_samples"] = 200;
  doc["train"]["iterations"] = 30;
  doc["train"]["batch_size"] = 16;
  doc["train"]["log_every"] = 10;
  doc["sample"]["n"] = 64;
  doc["sample"]["steps"] = 10;
  doc["dataset"]["n_train"] = 128;
  doc["dataset"]["n_reference"] = 64;
  doc["sweep"]["select"] = "all";
  return doc;
}

}  // namespace

TEST(Config, DefaultsRoundTripForEveryRecipe) {
  for (Recipe r : all_recipes()) {
    const ExperimentConfig c = ExperimentConfig::from_json(ExperimentConfig::defaults(r));
    EXPECT_EQ(c.recipe(), r);
    EXPECT_EQ(ExperimentConfig::from_json(c.to_json()), c) << to_string(r);
  }
}

TEST(Config, PartialDocumentIsMergedOverDefaults) {
  const ExperimentConfig c = ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"train", {{"iterations", 7}}}});
  EXPECT_EQ(c.train_config().iterations, 7u);
  EXPECT_EQ(c.train_config().batch_size, 64u);
  EXPECT_EQ(c.seeds(), 3u);
  EXPECT_EQ(c.family().dim(), 64u);
  EXPECT_EQ(ExperimentConfig::from_json({{"recipe", "theory_fig4"}}).seeds(), 5u);
}

TEST(Config, RejectsUnknownKeysTypesAndValues) {
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"trian", json::object()}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"train", {{"iterations", "many"}}}}),
               ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"train", {{"iterations", -5}}}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"train", {{"iterations", 2.5}}}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "nonsense"}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json(json::object()), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"seeds", 0}}), ConfigError);
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"schedule", {{"beta_min", 0.5}}}}).schedule(),
               ConfigError);
}

TEST(Config, IntegralFloatsAreAccepted) {
  const ExperimentConfig c =
      ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"train", {{"iterations", 300.0}}}});
  EXPECT_EQ(c.train_config().iterations, 300u);
}

TEST(Config, FamilyKindChangeRebasesDefaults) {
  const ExperimentConfig c =
      ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"family", {{"kind", "token_linear"}}}});
  EXPECT_EQ(c.section("family").at("patch"), 2);
  EXPECT_FALSE(c.section("family").contains("hidden_layers"));
  EXPECT_EQ(c.family().kind(), "token_linear");
}

TEST(Config, LinearFamilyNeedsFixedSigmaOutsideTheory) {
  json f = family_defaults("linear");
  EXPECT_THROW(ExperimentConfig::from_json({{"recipe", "sad_sweep"}, {"family", f}}), ConfigError);
  EXPECT_NO_THROW(ExperimentConfig::from_json(
      {{"recipe", "sad_sweep"}, {"family", f}, {"train", {{"fixed_sigma", 1.0}}}}));
}

TEST(Config, Overrides) {
  json doc = ExperimentConfig::defaults(Recipe::sad_sweep);
  apply_override(doc, "train.iterations=123");
  apply_override(doc, "family.activation=tanh");
  apply_override(doc, "sweep.indices=[1,2]");
  EXPECT_EQ(doc["train"]["iterations"], 123);
  EXPECT_EQ(doc["family"]["activation"], "tanh");
  EXPECT_EQ(doc["sweep"]["indices"], json::array({1, 2}));
  EXPECT_THROW(apply_override(doc, "no_equals_sign"), ConfigError);
  EXPECT_THROW(apply_override(doc, "=5"), ConfigError);
}

TEST(Config, TomlDocuments) {
  const json doc = parse_toml("recipe = \"theory_fig4\"\nseeds = 2\n[train]\nlearning_rate = 0.01\n");
  EXPECT_EQ(doc["recipe"], "theory_fig4");
  const ExperimentConfig c = ExperimentConfig::from_json(doc);
  EXPECT_EQ(c.seeds(), 2u);
  EXPECT_DOUBLE_EQ(c.train_config().learning_rate, 0.01);
  EXPECT_THROW(parse_toml("recipe = \n"), ParseError);
}

TEST(Config, LoadsFilesByExtension) {
  const fs::path dir = fresh_dir("load");
  std::ofstream(dir / "a.toml") << "recipe = \"impulse_probe\"\n";
  std::ofstream(dir / "b.json") << R"({"recipe": "impulse_probe"})";
  std::ofstream(dir / "c.json") << "{ broken";
  EXPECT_EQ(load_config_document((dir / "a.toml").string()), load_config_document((dir / "b.json").string()));
  EXPECT_THROW(load_config_document((dir / "c.json").string()), ParseError);
}

TEST(SelectSads, Rules) {
  const auto fml = select_sads("first_middle_last", 4, 0, 64);
  EXPECT_EQ(fml, (std::vector<std::size_t>{0, 1, 2, 3, 30, 31, 32, 33, 60, 61, 62, 63}));
  const auto spread = select_sads("spread", 0, 12, 64);
  ASSERT_EQ(spread.size(), 12u);
  EXPECT_EQ(spread.front(), 0u);
  EXPECT_EQ(spread.back(), 63u);
  EXPECT_TRUE(std::is_sorted(spread.begin(), spread.end()));
  EXPECT_EQ(std::adjacent_find(spread.begin(), spread.end()), spread.end());
  EXPECT_EQ(select_sads("all", 0, 0, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_THROW(select_sads("best", 1, 1, 8), ConfigError);
}

TEST(Report, CsvRoundTrip) {
  const fs::path dir = fresh_dir("csv");
  ExperimentReport r;
  ReportRow a;
  a.unit = "sad_0";
  a.seed = 1;
  a.set("msw2", 0.125);
  a.set("label", "x,\"y\"");
  ReportRow b;
  b.unit = "sad_1";
  b.seed = 0;
  b.ok = false;
  b.error = "diverged, step 3";
  b.set("extra", 7);
  r.rows = {a, b};
  EXPECT_EQ(r.columns(), (std::vector<std::string>{"msw2", "label", "extra"}));
  r.write_csv((dir / "r.csv").string());
  const auto back = read_report_csv((dir / "r.csv").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].unit, "sad_0");
  EXPECT_EQ(back[0].seed, 1u);
  EXPECT_DOUBLE_EQ(back[0].number("msw2"), 0.125);
  EXPECT_EQ(back[0].get("label"), "x,\"y\"");
  EXPECT_TRUE(back[0].get("extra").is_null());
  EXPECT_FALSE(back[1].ok);
  EXPECT_EQ(back[1].error, "diverged, step 3");
  EXPECT_DOUBLE_EQ(back[1].number("extra"), 7.0);
  std::ofstream(dir / "bad.csv") << "a,b\n1,2\n";
  EXPECT_THROW(read_report_csv((dir / "bad.csv").string()), ParseError);
}

TEST(Heatmap, FrequencyLayoutIsCentredAndMirrored) {
  const OrthoTransform dct = build_basis(BasisKind::dct, 2, 3);
  std::vector<ReportRow> rows;
  for (std::size_t k = 0; k < dct.dim; ++k)
    for (std::size_t seed = 0; seed < 2; ++seed) {
      ReportRow r;
      r.unit = "col_" + std::to_string(k);
      r.seed = seed;
      r.set("index", k);
      const BasisIndex& bi = dct.index_layout[k];
      r.set("msw2", 10.0 * bi.grid_row + bi.grid_col + (seed == 0 ? -0.5 : 0.5));
      rows.push_back(r);
    }
  const Matrix g = heatmap_grid(rows, dct, "msw2");
  ASSERT_EQ(g.rows(), 3u);
  ASSERT_EQ(g.cols(), 5u);
  EXPECT_DOUBLE_EQ(g(1, 2), 0.0);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const double fr = std::abs(static_cast<double>(r) - 1.0);
      const double fc = std::abs(static_cast<double>(c) - 2.0);
      EXPECT_DOUBLE_EQ(g(r, c), 10.0 * fr + fc);
    }
  rows.pop_back();
  rows.pop_back();
  EXPECT_THROW(heatmap_grid(rows, dct, "msw2"), PreconditionError);
  EXPECT_THROW(heatmap_grid(rows, dct, "missing"), PreconditionError);
}

TEST(Heatmap, PixelLayoutKeepsShape) {
  const OrthoTransform canon = build_basis(BasisKind::canonical, 2, 2);
  std::vector<ReportRow> rows;
  for (std::size_t k = 0; k < 4; ++k) {
    ReportRow r;
    r.set("index", k);
    r.set("msw2", 3.0);
    rows.push_back(r);
  }
  const Matrix g = heatmap_grid(rows, canon, "msw2");
  EXPECT_EQ(g, Matrix(2, 2, 3.0));
}

TEST(Recipes, TheoryWritesRatesAndTraces) {
  const fs::path dir = fresh_dir("theory");
  json doc = ExperimentConfig::defaults(Recipe::theory_fig4);
  doc["out"] = dir.string();
  doc["seeds"] = 1;
  const ExperimentReport r = run_experiment(ExperimentConfig::from_json(doc));
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(r.failures(), 0u);
  for (const auto& row : r.rows) {
    EXPECT_LT(row.number("relative_error"), 0.02) << row.unit;
    EXPECT_TRUE(fs::exists(dir / "theory_fig4" / row.unit / "0" / "trace.csv"));
  }
  EXPECT_TRUE(fs::exists(dir / "theory_fig4" / "rates.json"));
  EXPECT_TRUE(fs::exists(dir / "theory_fig4" / "report.csv"));
  EXPECT_TRUE(fs::exists(dir / "theory_fig4" / "report.json"));
  const ExperimentConfig echoed = ExperimentConfig::from_json(json::parse(slurp(dir / "theory_fig4" / "config.json")));
  EXPECT_EQ(echoed, ExperimentConfig::from_json(doc));
}

TEST(Recipes, SadSweepRowsArtifactsAndDeterminism) {
  const fs::path a = fresh_dir("sweep_a");
  const fs::path b = fresh_dir("sweep_b");
  const ExperimentReport ra = run_experiment(ExperimentConfig::from_json(tiny_sweep(a)));
  json doc_b = tiny_sweep(b);
  doc_b["workers"] = 2;
  run_experiment(ExperimentConfig::from_json(doc_b));
  ASSERT_EQ(ra.rows.size(), 4u * 2u);
  EXPECT_EQ(ra.failures(), 0u);
  std::size_t pgm = 0;
  for (const auto& e : fs::recursive_directory_iterator(a / "sad_sweep")) pgm += e.path().extension() == ".pgm";
  EXPECT_EQ(pgm, 4u);
  for (const auto& row : ra.rows) {
    EXPECT_TRUE(std::isfinite(row.number("msw2")));
    EXPECT_GE(row.number("msw2"), row.number("sw2"));
    EXPECT_NEAR(row.number("alpha"), 4.0 * row.number("eigenvalue"), 1e-12);
  }
  EXPECT_EQ(slurp(a / "sad_sweep" / "report.csv"), slurp(b / "sad_sweep" / "report.csv"));
  EXPECT_EQ(slurp(a / "sad_sweep" / "sad_2" / "1" / "samples.csv"),
            slurp(b / "sad_sweep" / "sad_2" / "1" / "samples.csv"));
  EXPECT_EQ(ra.summary.at("audit").at("match"), true);
}

TEST(Recipes, FailingTaskIsRecordedAndOthersContinue) {
  const fs::path dir = fresh_dir("fail");
  json doc = tiny_sweep(dir);
  doc["seeds"] = 1;
  doc["train"]["optimizer"] = "sgd";
  doc["train"]["learning_rate"] = 1e12;
  const ExperimentReport r = run_experiment(ExperimentConfig::from_json(doc));
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.failures(), 4u);
  for (const auto& row : r.rows) EXPECT_FALSE(row.error.empty());
  const auto back = read_report_csv((dir / "sad_sweep" / "report.csv").string());
  ASSERT_EQ(back.size(), 4u);
  EXPECT_FALSE(back[0].ok);
}

TEST(Recipes, ImpulseProbeSymmetry) {
  const fs::path dir = fresh_dir("impulse");
  json doc = ExperimentConfig::defaults(Recipe::impulse_probe);
  doc["out"] = dir.string();
  doc["seeds"] = 2;
  const ExperimentReport r = run_experiment(ExperimentConfig::from_json(doc));
  ASSERT_EQ(r.rows.size(), 4u);
  for (const auto& row : r.rows) {
    if (row.get("resample") == "area") EXPECT_LE(row.number("asymmetry"), 1e-8);
    else EXPECT_GT(row.number("asymmetry"), 1e-3);
  }
}

TEST(Recipes, TaskStreamsAreDistinct) {
  EXPECT_NE(task_stream(0, 0, 1).next_u64(), task_stream(0, 1, 0).next_u64());
  EXPECT_EQ(task_stream(5, 2, 3).next_u64(), task_stream(5, 2, 3).next_u64());
  EXPECT_NE(task_stream(5, 2, 3).next_u64(), task_stream(6, 2, 3).next_u64());
}

TEST(Recipes, VectorImageShapes) {
  const Vector v(16, 1.0);
  EXPECT_EQ(vector_image(v, std::nullopt).rows(), 4u);
  EXPECT_EQ(vector_image(Vector(6, 1.0), std::nullopt).rows(), 1u);
  const Matrix img = vector_image(Vector(18, 1.0), ImageShape{2, 3, 3});
  EXPECT_EQ(img.rows(), 3u);
  EXPECT_EQ(img.cols(), 3u);
}
