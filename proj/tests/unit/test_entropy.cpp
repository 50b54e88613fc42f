#include "doctest.h"
#include "test_support.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "rsfc/entropy.hpp"
#include "rsfc/error.hpp"

using namespace rsfc;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Eigen::VectorXd white_noise(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = u(rng);
  return x;
}

Eigen::VectorXd cumsum(Eigen::VectorXd x) {
  for (Eigen::Index i = 1; i < x.size(); ++i) x(i) += x(i - 1);
  return x;
}

Eigen::VectorXd sine(Eigen::Index n, double period) {
  Eigen::VectorXd x(n);
  for (Eigen::Index t = 0; t < n; ++t) x(t) = std::sin(2.0 * std::numbers::pi * t / period);
  return x;
}

EntropyParams abs_params(int m, double r, int tau = 1) { return {m, Tolerance::absolute(r), tau}; }

}  // namespace

TEST_CASE("resolve_tolerance") {
  const Eigen::VectorXd x = white_noise(100, 3);
  CHECK(resolve_tolerance(x, Tolerance::absolute(0.15)) == 0.15);
  // [0, 4, 0, 4] has population SD 2
  CHECK(resolve_tolerance(vec({0, 4, 0, 4}), Tolerance::fraction_of_sd(0.2)) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(resolve_tolerance(Eigen::VectorXd::Constant(50, 5.0), Tolerance::fraction_of_sd(0.2)),
                  DataError);
}

TEST_CASE("hand-counted sample entropy values") {
  // m=1, r=0.5: length-1 matches sum to 8, length-2 matches to 4.
  const Eigen::VectorXd a = vec({1, 2, 1, 2, 1, 3});
  CHECK(sample_entropy_oracle(a, abs_params(1, 0.5)).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(sample_entropy(a, abs_params(1, 0.5)).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // m=2: sums 8 and 4.
  const Eigen::VectorXd b = vec({1, 2, 1, 2, 1, 2, 2, 1});
  CHECK(sample_entropy_oracle(b, abs_params(2, 0.5)).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(sample_entropy(b, abs_params(2, 0.5)).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // m=1, tau=2: sums 6 and 4.
  const Eigen::VectorXd c = vec({1, 5, 2, 5, 1, 6, 2, 7, 1});
  CHECK(sample_entropy_oracle(c, abs_params(1, 0.5, 2)).value == doctest::Approx(std::log(1.5)).epsilon(1e-14));
  CHECK(sample_entropy(c, abs_params(1, 0.5, 2)).value == doctest::Approx(std::log(1.5)).epsilon(1e-14));
}

TEST_CASE("alternating series: parity decides every match, so SampEn is 0") {
  // Hand count at N=10: 8 templates, 4 per parity, 3 matches each for both
  // lengths -> ratio 1.
  for (Eigen::Index n : {Eigen::Index{10}, Eigen::Index{64}}) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x(i) = i % 2 == 0 ? 1.0 : 2.0;
    const SampEn o = sample_entropy_oracle(x, abs_params(2, 0.5));
    CHECK(o.status == SampEn::Status::Finite);
    CHECK(o.value == 0.0);
    CHECK(sample_entropy(x, abs_params(2, 0.5)).value == 0.0);
  }
}

TEST_CASE("constant series gives exactly zero on both paths") {
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(50, 5.0);
  const SampEn o = sample_entropy_oracle(x, abs_params(2, 0.1));
  const SampEn f = sample_entropy(x, abs_params(2, 0.1));
  CHECK(o.value == 0.0);
  CHECK(f.value == 0.0);
  CHECK(o.status == f.status);
}

TEST_CASE("degenerate outcomes are flagged, not thrown") {
  Eigen::VectorXd ramp(10);
  for (int i = 0; i < 10; ++i) ramp(i) = i;
  const SampEn u = sample_entropy(ramp, abs_params(2, 0.5));
  CHECK(u.status == SampEn::Status::Undefined);
  CHECK(sample_entropy_oracle(ramp, abs_params(2, 0.5)).status == SampEn::Status::Undefined);

  // Length-1 matches exist but no length-2 match does.
  const Eigen::VectorXd x = vec({0, 1, 0, 2, 0, 3, 0, 4});
  const SampEn inf = sample_entropy(x, abs_params(1, 0.5));
  CHECK(inf.status == SampEn::Status::Infinite);
  CHECK(std::isinf(inf.value));
  CHECK(sample_entropy_oracle(x, abs_params(1, 0.5)).status == SampEn::Status::Infinite);
}

TEST_CASE("input errors") {
  CHECK_THROWS_AS(sample_entropy(vec({1, 2, 3}), abs_params(2, 0.5)), DataError);
  CHECK_THROWS_AS(sample_entropy_oracle(vec({1, 2, 3}), abs_params(2, 0.5)), DataError);
  CHECK_THROWS_AS(sample_entropy(vec({1, 2, std::nan(""), 4, 5, 6}), abs_params(1, 0.5)), DataError);
  CHECK_THROWS_AS(sample_entropy(vec({1, 2, 3, 4, 5}), abs_params(0, 0.5)), ConfigError);
  CHECK_THROWS_AS(sample_entropy(vec({1, 2, 3, 4, 5}), {1, Tolerance::fraction_of_sd(2.5), 1}),
                  ConfigError);
}

TEST_CASE("fast path matches the oracle over the parameter grid") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> len(20, 160);
  int checked = 0;
  for (int m : {1, 2, 3})
    for (int tau : {1, 2})
      for (double frac : {0.1, 0.2, 0.5})
        for (int rep = 0; rep < 4; ++rep) {
          Eigen::VectorXd x = white_noise(len(rng), rng());
          if (rep % 2) x = cumsum(x);  // random walk: more structure
          const EntropyParams p{m, Tolerance::fraction_of_sd(frac), tau};
          const SampEn o = sample_entropy_oracle(x, p);
          const SampEn f = sample_entropy(x, p);
          REQUIRE(o.status == f.status);
          if (o.finite()) CHECK(std::abs(o.value - f.value) <= 1e-12);
          ++checked;
        }
  CHECK(checked == 72);
}

TEST_CASE("shift invariance and scale covariance") {
  // Dyadic samples keep x + c exact, so the tolerance and every distance
  // are bit-identical.
  Eigen::VectorXd x = white_noise(300, 21);
  x = (x * 1024.0).array().round() / 1024.0;
  const EntropyParams p;
  const SampEn base = sample_entropy(x, p);
  for (double c : {-7.0, 3.5, 1024.0}) {
    const Eigen::VectorXd shifted = x.array() + c;
    CHECK(sample_entropy(shifted, p).value == base.value);
    CHECK(sample_entropy_oracle(shifted, p).value == sample_entropy_oracle(x, p).value);
  }
  // Powers of two scale exactly.
  for (double a : {0.25, 2.0, 8.0}) CHECK(sample_entropy(Eigen::VectorXd(a * x), p).value == base.value);
  // Other factors agree to rounding.
  CHECK(sample_entropy(Eigen::VectorXd(3.7 * x), p).value == doctest::Approx(base.value).epsilon(1e-9));
}

TEST_CASE("SampEn is non-increasing in r") {
  const Eigen::VectorXd x = cumsum(white_noise(400, 5));
  double previous = std::numeric_limits<double>::infinity();
  for (double f = 0.05; f <= 1.0; f += 0.05) {
    const SampEn s = sample_entropy(x, {2, Tolerance::fraction_of_sd(f), 1});
    REQUIRE(s.finite());
    CHECK(s.value <= previous + 1e-12);
    previous = s.value;
  }
}

TEST_CASE("white noise is more irregular than a sine") {
  const Eigen::VectorXd noise = white_noise(500, 99);
  const Eigen::VectorXd wave = sine(500, 50.0);
  CHECK(sample_entropy_oracle(noise).value > sample_entropy_oracle(wave).value);
}

TEST_CASE("fast path beats the pair scan by at least 5x at N = 10000") {
  const Eigen::VectorXd x = white_noise(10000, 1234);
  const auto t0 = std::chrono::steady_clock::now();
  const SampEn o = sample_entropy_oracle(x);
  const auto t1 = std::chrono::steady_clock::now();
  const SampEn f = sample_entropy(x);
  const auto t2 = std::chrono::steady_clock::now();
  CHECK(std::abs(o.value - f.value) <= 1e-12);
  const double oracle_s = std::chrono::duration<double>(t1 - t0).count();
  const double fast_s = std::chrono::duration<double>(t2 - t1).count();
  MESSAGE("oracle " << oracle_s << " s, fast " << fast_s << " s");
  CHECK(oracle_s >= 5.0 * fast_s);
}

TEST_CASE("entropy_features: shape, isolation of degenerate columns, determinism") {
  Eigen::MatrixXd m = rsfc::testing::gaussian_matrix(200, 160, 8);
  m.col(7).setConstant(2.5);
  m.col(20) = m.col(3);
  const auto feats = entropy_features(TimeSeriesMatrix(m));
  REQUIRE(feats.size() == 160);
  CHECK(feats[7].status == SampEn::Status::DegenerateSeries);
  CHECK(feats[20].value == feats[3].value);
  int finite = 0;
  for (const auto& f : feats) finite += f.finite() ? 1 : 0;
  CHECK(finite == 159);
}

TEST_CASE("entropy_features names the failing ROI") {
  Eigen::MatrixXd m = rsfc::testing::gaussian_matrix(4, 3, 8);
  CHECK_THROWS_WITH_AS(entropy_features(TimeSeriesMatrix(m), {3, Tolerance::absolute(0.2), 1}),
                       doctest::Contains("ROI 0"), DataError);
}

TEST_CASE("feature table round-trip") {
  std::vector<EntropyFeatureRow> rows = {
      {"S1", 12.5, {{1.25, SampEn::Status::Finite}, {std::numeric_limits<double>::infinity(), SampEn::Status::Infinite}}},
      {"S2", 40.0, {{0.5, SampEn::Status::Finite}, {0.75, SampEn::Status::Finite}}}};
  const std::string csv = feature_table_csv(rows);
  CHECK(csv.starts_with("subject_id,age_years,sampen_000,sampen_001\n"));
  const auto back = parse_feature_table(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0].sampen[1].status == SampEn::Status::Infinite);
  CHECK(back[1].sampen[1].value == 0.75);
  CHECK(back[0].age_years == 12.5);
}
