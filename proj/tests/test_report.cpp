#include "nnpi/config.hpp"
#include "nnpi/report.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <limits>
#include <sstream>

using namespace nnpi;

namespace {

Dataset small_synth(std::size_t n, std::size_t subjects, std::size_t clusters) {
  SynthConfig sc;
  sc.n = n;
  sc.d = 3;
  sc.subjects = subjects;
  sc.clusters = clusters;
  sc.seed = 21;
  return synth_generate(sc);
}

ScenarioConfig quick(Method m) {
  ScenarioConfig c;
  c.method = m;
  c.net.hidden_layers = {10};
  c.folds = 3;
  c.gd.max_epochs = 10;
  c.ga.generations = 4;
  c.bootstrap_members = 3;
  c.bootstrap_gd.max_epochs = 4;
  c.clusters = 2;
  return c;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::string section(const std::string& text, const std::string& name) {
  const auto start = text.find("# " + name + "\n");
  if (start == std::string::npos) return {};
  const auto body = start + name.size() + 3;
  const auto end = text.find("\n# ", body);
  return text.substr(body, end == std::string::npos ? std::string::npos : end + 1 - body);
}

}  // namespace

TEST(Config, DefaultsRoundTripThroughJson) {
  RunConfig rc;
  const auto j = to_json(rc);
  RunConfig back;
  back.settings.folds = 99;
  merge_json(back, j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_TRUE(j.at("loss_s").at("eta").is_null());
  EXPECT_TRUE(j.at("loss_l").at("mu").is_null());
}

TEST(Config, PartialOverlayKeepsOtherDefaults) {
  RunConfig rc;
  merge_json(rc, nlohmann::json::parse(R"({"method":"loss_l","gd":{"learning_rate":0.05},
                                           "loss_s":{"eta":100,"penalty":"literal"},"confidences":[0.9]})"));
  EXPECT_EQ(rc.settings.method, Method::loss_l);
  EXPECT_DOUBLE_EQ(rc.settings.gd.learning_rate, 0.05);
  EXPECT_EQ(rc.settings.gd.batch_size, ScenarioConfig{}.gd.batch_size);
  EXPECT_FALSE(rc.settings.eta_is_batch_size);
  EXPECT_DOUBLE_EQ(rc.settings.soft_for(0.9).eta, 100.0);
  EXPECT_EQ(rc.settings.loss_s.penalty, PenaltyForm::literal);
  EXPECT_EQ(rc.confidences, std::vector<double>{0.9});
}

TEST(Config, EtaFollowsBatchSizeWhenNull) {
  RunConfig rc;
  merge_json(rc, nlohmann::json::parse(R"({"gd":{"batch_size":32}})"));
  EXPECT_DOUBLE_EQ(rc.settings.soft_for(0.85).eta, 32.0);
}

TEST(Config, BadValuesAreConfigErrors) {
  RunConfig rc;
  EXPECT_THROW(merge_json(rc, nlohmann::json::parse(R"({"method":"magic"})")), Error);
  EXPECT_THROW(merge_json(rc, nlohmann::json::parse(R"({"folds":"ten"})")), ConfigError);
  EXPECT_THROW(merge_json(rc, nlohmann::json::parse(R"({"loss_s":{"penalty":"cubic"}})")), ConfigError);

  auto expect_invalid = [](const char* text) {
    RunConfig r;
    merge_json(r, nlohmann::json::parse(text));
    EXPECT_THROW(validate(r), ConfigError) << text;
  };
  expect_invalid(R"({"confidences":[]})");
  expect_invalid(R"({"confidences":[1.2]})");
  expect_invalid(R"({"folds":1})");
  expect_invalid(R"({"validation_fraction":1.0})");
  expect_invalid(R"({"clusters":0})");
  expect_invalid(R"({"network":{"hidden_layers":[5]}})");
  expect_invalid(R"({"network":{"hidden_layers":[10,10,10,10,10]}})");
  expect_invalid(R"({"gd":{"learning_rate":0.5}})");
  expect_invalid(R"({"method":"loss_l","ga":{"population":3}})");
  expect_invalid(R"({"method":"bootstrap","bootstrap":{"members":1}})");
  RunConfig ok;
  EXPECT_NO_THROW(validate(ok));
}

TEST(Config, LoadReportsMissingAndMalformedFiles) {
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
  const auto path = std::filesystem::temp_directory_path() / "nnpi_bad_config.json";
  write_text_file(path.string(), "{ not json");
  EXPECT_THROW(load_run_config(path.string()), ConfigError);
  write_text_file(path.string(), R"({"folds": 4})");
  EXPECT_EQ(load_run_config(path.string()).settings.folds, 4u);
  std::filesystem::remove(path);
}

TEST(Tables, QualityTableHasOneRowPerConfidence) {
  const auto ds = small_synth(200, 5, 1);
  const auto rep = run_generalized(ds, quick(Method::loss_s), default_confidences());
  const auto text = report_text(rep);
  const auto quality = section(text, "quality");
  EXPECT_EQ(count_lines(quality), 1u + 4u + 1u);  // header, rows, blank separator
  EXPECT_NE(quality.find("generalized,loss_s,85%,"), std::string::npos);
  // level table: up to five levels per confidence
  const auto levels = section(text, "level_bounds");
  EXPECT_LE(count_lines(levels), 1u + 5u * 4u + 1u);
  EXPECT_GE(count_lines(levels), 1u + 4u + 1u);
  for (const char* name : {"quality", "level_bounds", "groups", "warnings"})
    EXPECT_NE(text.find(std::string("# ") + name), std::string::npos);
}

TEST(Tables, PercentLabels) {
  EXPECT_EQ(percent_label(0.85), "85%");
  EXPECT_EQ(percent_label(0.5), "50%");
  EXPECT_EQ(percent_label(0.975), "97.5%");
}

TEST(RunFile, RoundTripReproducesReportExactly) {
  const auto ds = small_synth(240, 6, 2);
  for (auto kind : {ScenarioKind::generalized, ScenarioKind::personalized, ScenarioKind::hybrid})
    for (auto m : {Method::loss_s, Method::loss_l, Method::bootstrap}) {
      const auto run = train_scenario(ds, kind, quick(m), {0.5, 0.95});
      const auto text = to_json(run).dump();
      const auto back = run_from_json(nlohmann::json::parse(text));
      EXPECT_EQ(report_text(assemble_report(ds, run)), report_text(assemble_report(ds, back)))
          << to_string(kind) << " " << to_string(m);
      EXPECT_EQ(to_json(back).dump(), text);
      EXPECT_NO_THROW(check_run_matches(back, ds));
    }
}

TEST(RunFile, RejectsForeignOrDamagedFiles) {
  EXPECT_THROW(run_from_json(nlohmann::json::parse(R"({"format":"other"})")), SchemaError);
  EXPECT_THROW(run_from_json(nlohmann::json::parse(R"({"format":"nnpi-run","version":99})")), SchemaError);
  EXPECT_THROW(run_from_json(nlohmann::json::parse(R"({"format":"nnpi-run","version":1})")), SchemaError);

  const auto ds = small_synth(120, 4, 1);
  const auto run = train_generalized(ds, quick(Method::loss_s), {0.85});
  auto j = to_json(run);
  j["units"][0]["group"] = 7;
  EXPECT_THROW(run_from_json(j), SchemaError);

  SynthConfig other;
  other.n = 50;
  other.d = 5;
  other.subjects = 2;
  other.clusters = 1;
  EXPECT_THROW(check_run_matches(run, synth_generate(other)), ConfigError);
  EXPECT_THROW(check_run_matches(run, ds.subset({0, 1, 2, 3})), ConfigError);
}

TEST(History, NanCellsAreEmpty) {
  TrainHistory h{{1, 2.5, std::numeric_limits<double>::quiet_NaN(), 0.8, 1.2}};
  std::ostringstream s;
  write_history(s, h);
  EXPECT_EQ(s.str(), "epoch,train_loss,val_loss,picp,mpiw\n1,2.5,,0.8,1.2\n");
}

TEST(Sweep, CsvHasOneLinePerRow) {
  std::vector<SweepRow> rows(3);
  std::ostringstream s;
  write_sweep(s, rows);
  EXPECT_EQ(count_lines(s.str()), 4u);
}

TEST(Distances, OneSeriesRowPerWithinClusterPair) {
  const auto ds = small_synth(200, 8, 2);
  auto cfg = quick(Method::loss_s);
  const auto cm = cluster_subjects(ds, cfg);
  std::ostringstream series, summary;
  write_cluster_distances(series, summary, cm);
  std::vector<std::size_t> sizes(2, 0);
  for (auto a : cm.kmeans.assignments) ++sizes[a];
  EXPECT_EQ(count_lines(series.str()), 1u + sizes[0] * (sizes[0] - 1) / 2 + sizes[1] * (sizes[1] - 1) / 2);
  EXPECT_EQ(count_lines(summary.str()), 1u + 2u);
  const auto back = cluster_model_from_json(to_json(cm));
  EXPECT_EQ(back.kmeans.assignments, cm.kmeans.assignments);
  EXPECT_TRUE(back.kmeans.centroids == cm.kmeans.centroids);
}
