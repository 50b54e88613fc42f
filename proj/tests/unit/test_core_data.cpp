#include "doctest.h"
#include "test_support.hpp"

#include "rsfc/core_data.hpp"
#include "rsfc/error.hpp"

using namespace rsfc;
using rsfc::testing::TempDir;
using rsfc::testing::write_text;

TEST_CASE("assign_stage follows the four age bins") {
  CHECK(assign_stage(19).label == "YA");
  CHECK(assign_stage(19).index == 1);
  CHECK(assign_stage(34).label == "MA");
  CHECK(assign_stage(34).index == 2);
  CHECK(assign_stage(54).label == "E");
  CHECK(assign_stage(54).index == 4);
  CHECK(assign_stage(53.9).label == "ML");  // floor(age) decides
  CHECK(assign_stage(20.0).label == "MA");
  CHECK_FALSE(assign_stage(7).out_of_range);
  CHECK_FALSE(assign_stage(89.5).out_of_range);
}

TEST_CASE("ages outside 7..89 snap to the nearest stage with a flag") {
  const StageId young = assign_stage(3.0);
  CHECK(young.index == 1);
  CHECK(young.out_of_range);
  const StageId old = assign_stage(104.0);
  CHECK(old.index == 4);
  CHECK(old.out_of_range);
  CHECK_THROWS_AS(assign_stage(std::nan("")), DataError);
}

TEST_CASE("stage bins cover every integer age 7..89 exactly once") {
  const StageBins bins;
  for (int age = 7; age <= 89; ++age) {
    int hits = 0;
    for (const auto& b : bins.bins()) hits += (age >= b.min_age && age <= b.max_age) ? 1 : 0;
    CHECK(hits == 1);
    CHECK_FALSE(assign_stage(age).out_of_range);
  }
}

TEST_CASE("assign_stage is monotone over [0, 120]") {
  int previous = 0;
  for (int step = 0; step <= 1200; ++step) {
    const int idx = assign_stage(step / 10.0).index;
    CHECK(idx >= previous);
    previous = idx;
  }
}

TEST_CASE("custom stage bins must be contiguous") {
  CHECK_THROWS_AS(StageBins({{1, "A", 0, 10}, {2, "B", 12, 20}}), ConfigError);
  CHECK_NOTHROW(StageBins({{1, "A", 0, 10}, {2, "B", 11, 20}}));
}

TEST_CASE("load_manifest parses rows and leaves stages unassigned") {
  TempDir dir("manifest");
  write_text(dir / "m.csv",
             "subject_id,age_years,timeseries_path\nS01,12,a.csv\nS02,28,sub/b.csv\nS03,70,/abs/c.csv\n");
  Cohort c = load_manifest(dir / "m.csv");
  REQUIRE(c.subjects.size() == 3);
  CHECK(c.subjects[1].subject_id == "S02");
  CHECK(c.subjects[1].age_years == 28.0);
  CHECK(c.subjects[1].source_path == dir.path() / "sub/b.csv");
  CHECK(c.subjects[2].source_path == std::filesystem::path("/abs/c.csv"));
  for (const auto& s : c.subjects) CHECK_FALSE(s.stage.has_value());
  assign_stages(c);
  CHECK(c.subjects[0].stage->label == "YA");
  CHECK(c.subjects[1].stage->label == "MA");
  CHECK(c.subjects[2].stage->label == "E");
}

TEST_CASE("load_manifest rejects bad input") {
  TempDir dir("manifest_bad");
  write_text(dir / "dup.csv", "subject_id,age_years,timeseries_path\nS01,12,a.csv\nS01,13,b.csv\n");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "dup.csv"), doctest::Contains("duplicate"), DataError);
  write_text(dir / "age.csv", "subject_id,age_years,timeseries_path\nS01,121,a.csv\n");
  CHECK_THROWS_AS(load_manifest(dir / "age.csv"), DataError);
  write_text(dir / "row.csv", "subject_id,age_years,timeseries_path\nS01,12\n");
  CHECK_THROWS_AS(load_manifest(dir / "row.csv"), DataError);
  write_text(dir / "hdr.csv", "id,age,path\nS01,12,a.csv\n");
  CHECK_THROWS_AS(load_manifest(dir / "hdr.csv"), DataError);
  CHECK_THROWS_AS(load_manifest(dir / "missing.csv"), DataError);
}

TEST_CASE("load_timeseries checks shape and finiteness") {
  TempDir dir("ts");
  Eigen::MatrixXd m = rsfc::testing::gaussian_matrix(200, 160, 1);
  write_timeseries(dir / "ok.csv", TimeSeriesMatrix(m));
  const TimeSeriesMatrix ts = load_timeseries(dir / "ok.csv", 160);
  CHECK(ts.n_timepoints() == 200);
  CHECK(ts.n_rois() == 160);
  CHECK(ts.values() == m);  // shortest round-trip formatting is exact

  write_timeseries(dir / "narrow.csv", TimeSeriesMatrix(m.leftCols(159)));
  CHECK_THROWS_AS(load_timeseries(dir / "narrow.csv", 160), DataError);

  write_text(dir / "nan.csv", "1,2\n3,NaN\n4,5\n");
  CHECK_THROWS_AS(load_timeseries(dir / "nan.csv", 2), DataError);
  write_text(dir / "text.csv", "1,2\n3,abc\n");
  CHECK_THROWS_AS(load_timeseries(dir / "text.csv", 2), DataError);
  write_text(dir / "short.csv", "1,2\n");
  CHECK_THROWS_AS(load_timeseries(dir / "short.csv", 2), DataError);
  write_text(dir / "hdr.csv", "a,b\n1,2\n3,4\n");
  CHECK(load_timeseries(dir / "hdr.csv", 2, /*skip_header=*/true).n_timepoints() == 2);
}

TEST_CASE("timeseries CSV round-trip is the identity on random finite matrices") {
  TempDir dir("roundtrip");
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> mag(-300.0, 300.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd m = rsfc::testing::gaussian_matrix(5 + trial, 2 + trial % 4, 100 + trial);
    m = m.unaryExpr([&](double v) { return v * std::pow(10.0, mag(rng) / 30.0); });
    write_timeseries(dir / "r.csv", TimeSeriesMatrix(m));
    CHECK(load_timeseries(dir / "r.csv", m.cols()).values() == m);
  }
}

TEST_CASE("ROI table: sample table and CSV round-trip") {
  const RoiTable t = sample_roi_table();
  REQUIRE(t.size() == 160);
  std::array<int, kNetworkCount> counts{};
  for (const auto& r : t.rows()) ++counts[static_cast<std::size_t>(r.network)];
  CHECK(counts == kTemplateNetworkSizes);

  TempDir dir("rois");
  write_roi_table(dir / "rois.csv", t);
  const RoiTable back = load_roi_table(dir / "rois.csv");
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(back[i].mni_xyz == t[i].mni_xyz);
    CHECK(back[i].network == t[i].network);
    CHECK(back[i].name == t[i].name);
  }
  write_text(dir / "bad.csv", "roi_index,x,y,z,network,name\n0,1,2,3,DMN,a\n1,1,2,3,XYZ,b\n");
  CHECK_THROWS_AS(load_roi_table(dir / "bad.csv"), DataError);
  write_text(dir / "gap.csv", "roi_index,x,y,z,network,name\n0,1,2,3,DMN,a\n2,1,2,3,ON,b\n");
  CHECK_THROWS_AS(load_roi_table(dir / "gap.csv"), DataError);
}
