#include "doctest.h"
#include "test_support.hpp"

#include <algorithm>
#include <random>

#include "rsfc/error.hpp"
#include "rsfc/netmetrics.hpp"
#include "rsfc/synth.hpp"

using namespace rsfc;

namespace {

Eigen::MatrixXd random_symmetric(int n, std::uint64_t seed) {
  Eigen::MatrixXd m = rsfc::testing::gaussian_matrix(n, n, seed);
  m = (m + m.transpose()).eval() / 2.0;
  m.diagonal().setZero();
  return m;
}

NetworkMap random_map(int n, int k, std::mt19937_64& rng) {
  NetworkMap map{Eigen::VectorXi(n), {}};
  for (int c = 0; c < k; ++c) map.labels.push_back("N" + std::to_string(c));
  // every network gets at least two nodes
  for (int i = 0; i < n; ++i) map.assignments(i) = i < 2 * k ? i / 2 : std::uniform_int_distribution<int>(0, k - 1)(rng);
  std::shuffle(map.assignments.data(), map.assignments.data() + n, rng);
  return map;
}

double brute_within(const Eigen::MatrixXd& z, const NetworkMap& m, int net) {
  double s = 0;
  long c = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = i + 1; j < z.rows(); ++j)
      if (m.assignments(i) == net && m.assignments(j) == net) {
        s += z(i, j);
        ++c;
      }
  return s / static_cast<double>(c);
}

double brute_between(const Eigen::MatrixXd& z, const NetworkMap& m, int net) {
  double s = 0;
  long c = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.rows(); ++j)
      if (m.assignments(i) == net && m.assignments(j) != net) {
        s += z(i, j);
        ++c;
      }
  return s / static_cast<double>(c);
}

// numpy's default 'linear' percentile
double np_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

NetworkMap two_blocks() {
  NetworkMap map{Eigen::VectorXi(5), {"A", "B"}};
  map.assignments << 0, 0, 0, 1, 1;
  return map;
}

}  // namespace

TEST_CASE("within/between: hand cases") {
  NetworkMap pair{Eigen::VectorXi(3), {"A", "B"}};
  pair.assignments << 0, 0, 1;
  Eigen::Matrix3d z;
  z << 0, 0.8, 0.1, 0.8, 0, 0.3, 0.1, 0.3, 0;
  CHECK(within_connectivity(z, pair, 0) == 0.8);
  CHECK(between_connectivity(z, pair, 0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS_AS(within_connectivity(z, pair, 1), DataError);

  const NetworkMap blocks = two_blocks();
  const Eigen::MatrixXd bz = synth::block_z_matrix({3, 2}, 0.6, 0.1, 0.0, 1);
  CHECK(within_connectivity(bz, blocks, 0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(within_connectivity(bz, blocks, 1) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(between_connectivity(bz, blocks, 1) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(between_connectivity(Eigen::MatrixXd::Zero(5, 5), blocks, 0) == 0.0);

  NetworkMap all{Eigen::VectorXi::Zero(4), {"A"}};
  CHECK_THROWS_AS(between_connectivity(Eigen::MatrixXd::Zero(4, 4), all, 0), DataError);
}

TEST_CASE("within/between equal pair enumeration over random partitions") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::MatrixXd z = random_symmetric(60, static_cast<std::uint64_t>(trial));
    const int k = std::uniform_int_distribution<int>(2, 8)(rng);
    const NetworkMap map = random_map(60, k, rng);
    for (int c = 0; c < k; ++c) {
      CHECK(std::abs(within_connectivity(z, map, c) - brute_within(z, map, c)) <= 1e-12);
      CHECK(std::abs(between_connectivity(z, map, c) - brute_between(z, map, c)) <= 1e-12);
    }
  }
}

TEST_CASE("segregation identities") {
  CHECK(segregation(0.5, 0.1).value == doctest::Approx(0.8).epsilon(1e-15));
  for (double w : {0.01, 0.3, 2.0, 17.0}) {
    CHECK(segregation(w, 0.0).value == 1.0);
    CHECK(segregation(w, w).value == 0.0);
    CHECK(segregation(w, 1.5 * w).value < 0.0);
    CHECK(segregation(w, 0.5 * w).value > 0.0);
  }
  CHECK_FALSE(segregation(0.0, 0.2).defined);
}

TEST_CASE("subject_network_stats on a block-constant matrix") {
  // Within 0.6 in both blocks; cross 0.2. NS = (0.6 - 0.2) / 0.6 = 2/3.
  const Eigen::MatrixXd z = synth::block_z_matrix({3, 2}, 0.6, 0.2, 0.0, 1);
  const auto rows = subject_network_stats("S1", 30.0, z, two_blocks());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].network == "A");
  CHECK(rows[1].ns.value == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(rows[0].ns.value == (rows[0].wnc - rows[0].bnc) / rows[0].wnc);
}

TEST_CASE("percentile and outlier filter") {
  const std::vector<double> v = {3, 1, 4, 1, 5, 9, 2, 6};
  for (double q : {0.0, 2.5, 10.0, 50.0, 97.5, 100.0}) CHECK(percentile(v, q) == doctest::Approx(np_percentile(v, q)).epsilon(1e-15));

  std::vector<Point> pts;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 100; ++i) pts.push_back({static_cast<double>(i), g(rng)});
  CHECK(percentile_outlier_filter(pts, 0.0, 100.0) == pts);

  pts[40].y = 1e6;
  const auto kept = percentile_outlier_filter(pts, 2.5, 97.5);
  CHECK(std::none_of(kept.begin(), kept.end(), [](const Point& p) { return p.y == 1e6; }));

  std::vector<double> ys;
  for (const auto& p : pts) ys.push_back(p.y);
  const double lo = np_percentile(ys, 2.5), hi = np_percentile(ys, 97.5);
  std::vector<Point> expected;
  for (const auto& p : pts)
    if (p.y >= lo && p.y <= hi) expected.push_back(p);
  CHECK(kept == expected);

  CHECK_THROWS_AS(percentile_outlier_filter({{0, 1}, {1, 2}}, 0, 100), DataError);
  CHECK_THROWS_AS(percentile_outlier_filter(pts, 50, 50), ConfigError);
}

TEST_CASE("linear_fit") {
  std::vector<Point> line;
  for (int i = 0; i < 10; ++i) line.push_back({static_cast<double>(i), 2.0 * i + 1.0});
  const LinearFit f = linear_fit(line);
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(f.intercept == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(f.r_squared == doctest::Approx(1.0).epsilon(1e-14));

  const LinearFit flat = linear_fit({{1, 3}, {2, 3}, {5, 3}});
  CHECK(flat.slope == 0.0);
  CHECK(flat.r_squared == 0.0);
  CHECK(flat.degenerate);

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> age(7.0, 89.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<Point> planted;
  for (int i = 0; i < 200; ++i) {
    const double x = age(rng);
    planted.push_back({x, -0.003 * x + 0.4 + noise(rng)});
  }
  CHECK(std::abs(linear_fit(planted).slope + 0.003) <= 0.0003);
  const LinearFit pf = linear_fit(planted);
  CHECK(pf.r_squared >= 0.0);
  CHECK(pf.r_squared <= 1.0);

  CHECK_THROWS_AS(linear_fit({{1, 1}, {1, 2}, {1, 3}}), DataError);
  CHECK_THROWS_AS(linear_fit({{1, 1}, {2, 2}}), DataError);
}

namespace {

std::vector<NetworkConnectivityStats> synthetic_stats(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> age(7.0, 89.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<NetworkConnectivityStats> out;
  for (int i = 0; i < n; ++i) {
    const double a = age(rng);
    for (const char* net : {"DMN", "ON"}) {
      NetworkConnectivityStats s;
      s.subject_id = "S" + std::to_string(i);
      s.age_years = a;
      s.network = net;
      s.wnc = (net[0] == 'D' ? 0.6 - 0.004 * a : 0.3 + 0.003 * a) + noise(rng);
      s.bnc = 0.1 + noise(rng);
      s.ns = segregation(s.wnc, s.bnc);
      out.push_back(s);
    }
  }
  return out;
}

const SegregationTrend& cell(const TrendTable& t, const std::string& net, Measure m) {
  for (const auto& tr : t.trends)
    if (tr.network == net && tr.measure == m) return tr;
  throw std::runtime_error("missing cell");
}

}  // namespace

TEST_CASE("cohort_trends: signs, order invariance, duplication invariance") {
  const auto stats = synthetic_stats(150, 3);
  const TrendTable t = cohort_trends(stats);
  CHECK(t.trends.size() == 6);
  CHECK(cell(t, "DMN", Measure::Wnc).fit.slope < 0.0);
  CHECK(cell(t, "ON", Measure::Wnc).fit.slope > 0.0);
  CHECK(cell(t, "DMN", Measure::Wnc).n_used < cell(t, "DMN", Measure::Wnc).n_input);

  auto shuffled = stats;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(trend_table_csv(cohort_trends(shuffled)) == trend_table_csv(t));

  // Duplicating every subject leaves OLS unchanged. Percentile cut points
  // move with duplication, so compare with the filter disabled.
  auto doubled = stats;
  doubled.insert(doubled.end(), stats.begin(), stats.end());
  const TrendTable a = cohort_trends(stats, 0.0, 100.0);
  const TrendTable b = cohort_trends(doubled, 0.0, 100.0);
  for (std::size_t i = 0; i < a.trends.size(); ++i) {
    CHECK(std::abs(a.trends[i].fit.slope - b.trends[i].fit.slope) <= 1e-12);
    CHECK(std::abs(a.trends[i].fit.intercept - b.trends[i].fit.intercept) <= 1e-12);
  }
}

TEST_CASE("cohort_trends: identical subjects give zero slopes; small cells are skipped") {
  std::vector<NetworkConnectivityStats> same;
  for (int i = 0; i < 20; ++i) {
    NetworkConnectivityStats s{"S" + std::to_string(i), 7.0 + 4.0 * i, "CN", 0.5, 0.1, segregation(0.5, 0.1)};
    same.push_back(s);
  }
  const TrendTable t = cohort_trends(same);
  for (const auto& tr : t.trends) CHECK(tr.fit.slope == 0.0);

  std::vector<NetworkConnectivityStats> tiny(same.begin(), same.begin() + 2);
  const TrendTable skipped = cohort_trends(tiny);
  CHECK(skipped.trends.empty());
  CHECK(skipped.skipped.size() == 3);

  // wnc == 0 rows are dropped from NS only, and counted
  auto with_zero = same;
  with_zero[3].wnc = 0.0;
  with_zero[3].ns = segregation(0.0, 0.1);
  const TrendTable z = cohort_trends(with_zero);
  CHECK(cell(z, "CN", Measure::Ns).n_undefined == 1);
  CHECK(cell(z, "CN", Measure::Ns).n_input == 20);
  CHECK(cell(z, "CN", Measure::Ns).n_used <= 19);
}

TEST_CASE("csv writers") {
  const TrendTable t = cohort_trends(synthetic_stats(30, 8));
  const std::string csv = trend_table_csv(t);
  CHECK(csv.starts_with("network,measure,slope,intercept,r_squared,n_used\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  const std::string s = subject_stats_csv(synthetic_stats(2, 8));
  CHECK(s.starts_with("subject_id,age_years,network,wnc,bnc,ns,ns_defined\n"));
}
