#include "rsfc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rsfc/error.hpp"
#include "rsfc/io.hpp"
#include "rsfc/parallel.hpp"

namespace rsfc::synth {

int TrendSpec::roi_count() const {
  int r = 0;
  for (const auto& n : networks) r += n.size;
  return r;
}

void TrendSpec::validate() const {
  if (networks.size() < 2) throw ConfigError("trend spec: needs at least two networks");
  if (t_points < 3) throw ConfigError("trend spec: t_points must be >= 3");
  if (!(noise_sd >= 0.0)) throw ConfigError("trend spec: noise_sd must be >= 0");
  for (const auto& n : networks) {
    if (n.size < 2) throw ConfigError("trend spec: every network needs at least two ROIs");
    for (double age : {7.0, 89.0})
      for (double v : {n.wnc.at(age), n.bnc.at(age)})
        if (!(v > -0.95 && v < 0.95))
          throw ConfigError("trend spec: target for " + std::string(to_string(n.network)) +
                            " leaves (-0.95, 0.95) between ages 7 and 89");
  }
}

NetworkMap TrendSpec::network_map() const {
  NetworkMap map;
  map.assignments.resize(roi_count());
  Eigen::Index at = 0;
  for (std::size_t n = 0; n < networks.size(); ++n) {
    map.labels.emplace_back(to_string(networks[n].network));
    for (int i = 0; i < networks[n].size; ++i) map.assignments(at++) = static_cast<int>(n);
  }
  return map;
}

RoiTable TrendSpec::roi_table() const {
  std::vector<std::pair<Network, int>> blocks;
  for (const auto& n : networks) blocks.emplace_back(n.network, n.size);
  return synthetic_roi_table(blocks);
}

TrendSpec default_trend_spec() {
  TrendSpec spec;
  for (std::size_t n = 0; n < kNetworkCount; ++n)
    spec.networks.push_back({static_cast<Network>(n), kTemplateNetworkSizes[n], {0.45, 0.0}, {0.10, 0.0}});
  return spec;
}

Eigen::MatrixXd target_correlation(const TrendSpec& spec, double age, std::uint64_t rng_seed) {
  const std::size_t k = spec.networks.size();
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::vector<double> within(k);
  std::vector<double> between(k);
  for (std::size_t n = 0; n < k; ++n) {
    within[n] = spec.networks[n].wnc.at(age);
    between[n] = spec.networks[n].bnc.at(age);
    if (spec.noise_sd > 0.0) {
      within[n] += spec.noise_sd * jitter(rng);
      between[n] += spec.noise_sd * jitter(rng);
    }
    within[n] = std::clamp(within[n], -0.95, 0.95);
    between[n] = std::clamp(between[n], -0.95, 0.95);
  }
  const int r = spec.roi_count();
  std::vector<std::size_t> block(static_cast<std::size_t>(r));
  std::size_t at = 0;
  for (std::size_t n = 0; n < k; ++n)
    for (int i = 0; i < spec.networks[n].size; ++i) block[at++] = n;

  Eigen::MatrixXd c(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      const auto a = block[static_cast<std::size_t>(i)];
      const auto b = block[static_cast<std::size_t>(j)];
      c(i, j) = i == j ? 1.0 : a == b ? within[a] : 0.5 * (between[a] + between[b]);
    }
  return c;
}

PdRepair nearest_correlation_pd(const Eigen::Ref<const Eigen::MatrixXd>& target, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(target);
  PdRepair out;
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  if (out.min_eigenvalue >= floor) {
    out.matrix = target;
    return out;
  }
  out.repaired = true;
  const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(floor);
  Eigen::MatrixXd m = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::VectorXd inv_sd = m.diagonal().cwiseSqrt().cwiseInverse();
  m = inv_sd.asDiagonal() * m * inv_sd.asDiagonal();
  m = 0.5 * (m + m.transpose());
  m.diagonal().setOnes();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> check(m, Eigen::EigenvaluesOnly);
  if (!(check.eigenvalues().minCoeff() > 0.0))
    throw DataError("synthetic target could not be repaired to positive definite");
  out.matrix = std::move(m);
  return out;
}

SyntheticSubject generate_subject(const TrendSpec& spec, double age, std::uint64_t seed) {
  spec.validate();
  const PdRepair pd = nearest_correlation_pd(target_correlation(spec, age, derive_seed(seed, 1)));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pd.matrix);
  const Eigen::MatrixXd root = eig.eigenvectors() *
                               eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                               eig.eigenvectors().transpose();
  const int r = spec.roi_count();
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd z(spec.t_points, r);
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = gauss(rng);
  Eigen::MatrixXd x(spec.t_points, r);
  x.noalias() = z * root;
  // Quantise to 1e-6 so the written CSVs are compact and read back exactly.
  x = (x.array() * 1e6).round() / 1e6;
  return {TimeSeriesMatrix(std::move(x)), pd.matrix, pd.repaired};
}

namespace {

struct Ols {
  double slope;
  double intercept;
};

Ols ols(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mx};
}

}  // namespace

SyntheticCohort generate_cohort(const TrendSpec& spec, const std::vector<double>& ages,
                                std::uint64_t seed) {
  spec.validate();
  if (ages.size() < 3) throw ConfigError("synthetic cohort: needs at least three subjects");
  for (double a : ages)
    if (!(a >= 7.0 && a <= 89.0)) throw ConfigError("synthetic cohort: ages must lie in [7, 89]");

  std::vector<std::size_t> order(ages.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ages[a] < ages[b]; });

  SyntheticCohort cohort;
  cohort.networks = spec.network_map();
  cohort.roi_table = spec.roi_table();
  const std::size_t k = spec.networks.size();
  std::vector<std::vector<double>> wnc(k), bnc(k), ns(k);
  std::vector<double> xs;

  const int width = std::max<int>(3, static_cast<int>(std::to_string(ages.size()).size()));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const double age = ages[order[pos]];
    SyntheticSubject subject = generate_subject(spec, age, derive_seed(seed, pos));
    std::string id = std::to_string(pos + 1);
    id.insert(0, static_cast<std::size_t>(width) - std::min<std::size_t>(id.size(), width), '0');
    SubjectRecord rec;
    rec.subject_id = "S" + id;
    rec.age_years = age;
    rec.source_path = std::filesystem::path("timeseries") / (rec.subject_id + ".csv");
    cohort.subjects.push_back(rec);
    if (subject.repaired) ++cohort.repaired_subjects;

    // Population block means in z space, enumerated directly.
    const auto& a = cohort.networks.assignments;
    const Eigen::MatrixXd& c = subject.correlation;
    for (std::size_t n = 0; n < k; ++n) {
      double w_sum = 0.0, w_cnt = 0.0, b_sum = 0.0, b_cnt = 0.0;
      for (Eigen::Index i = 0; i < c.rows(); ++i) {
        if (a(i) != static_cast<int>(n)) continue;
        for (Eigen::Index j = 0; j < c.cols(); ++j) {
          if (j == i) continue;
          const double z = std::atanh(c(i, j));
          if (a(j) == static_cast<int>(n)) {
            w_sum += z;
            w_cnt += 1.0;
          } else {
            b_sum += z;
            b_cnt += 1.0;
          }
        }
      }
      const double w = w_sum / w_cnt;
      const double b = b_sum / b_cnt;
      wnc[n].push_back(w);
      bnc[n].push_back(b);
      ns[n].push_back((w - b) / w);
    }
    xs.push_back(age);
    cohort.series.push_back(std::move(subject.series));
  }

  for (std::size_t n = 0; n < k; ++n) {
    const std::string label(to_string(spec.networks[n].network));
    for (auto [m, ys] : {std::pair{Measure::Wnc, &wnc[n]}, std::pair{Measure::Bnc, &bnc[n]},
                         std::pair{Measure::Ns, &ns[n]}}) {
      const Ols fit = ols(xs, *ys);
      cohort.ground_truth.push_back({label, m, fit.slope, fit.intercept});
    }
  }
  return cohort;
}

nlohmann::json ground_truth_json(const TrendSpec& spec, const SyntheticCohort& cohort) {
  nlohmann::json doc;
  doc["measure_space"] = "fisher_z";
  doc["noise_sd"] = spec.noise_sd;
  doc["t_points"] = spec.t_points;
  doc["repaired_subjects"] = cohort.repaired_subjects;
  nlohmann::json planted = nlohmann::json::array();
  for (const auto& n : spec.networks)
    planted.push_back({{"network", std::string(to_string(n.network))},
                       {"size", n.size},
                       {"wnc_r_base", n.wnc.base},
                       {"wnc_r_slope", n.wnc.slope},
                       {"bnc_r_base", n.bnc.base},
                       {"bnc_r_slope", n.bnc.slope}});
  doc["planted"] = std::move(planted);
  nlohmann::json trends = nlohmann::json::array();
  for (const auto& t : cohort.ground_truth)
    trends.push_back({{"network", t.network},
                      {"measure", std::string(to_string(t.measure))},
                      {"slope", t.slope},
                      {"intercept", t.intercept}});
  doc["trends"] = std::move(trends);
  return doc;
}

void write_cohort(const std::filesystem::path& dir, const TrendSpec& spec,
                  const SyntheticCohort& cohort) {
  std::filesystem::create_directories(dir / "timeseries");
  for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
    write_timeseries(dir / cohort.subjects[i].source_path, cohort.series[i]);
  write_manifest(dir / "manifest.csv", cohort.subjects);
  write_roi_table(dir / "rois.csv", cohort.roi_table);
  io::write_file_atomic(dir / "ground_truth.json", ground_truth_json(spec, cohort).dump(2) + "\n");
}

std::vector<double> spread_ages(int n, double lo, double hi, std::uint64_t seed) {
  if (n < 2) throw ConfigError("spread_ages: n must be >= 2");
  std::mt19937_64 rng(seed);
  const double step = (hi - lo) / (n - 1);
  std::uniform_real_distribution<double> jit(-0.5 * step, 0.5 * step);
  std::vector<double> ages;
  for (int i = 0; i < n; ++i)
    ages.push_back(std::clamp(lo + step * i + jit(rng), lo, hi));
  return ages;
}

LabeledDataset stage_features(const std::vector<int>& counts_per_stage, std::uint64_t seed,
                              const StageFeatureOptions& options) {
  const StageBins bins;
  if (counts_per_stage.size() != bins.size())
    throw ConfigError("stage_features: one count per stage is required");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int d = options.n_rois;
  Eigen::MatrixXd centres(static_cast<Eigen::Index>(bins.size()), d);
  for (Eigen::Index s = 0; s < centres.rows(); ++s)
    for (int j = 0; j < d; ++j)
      centres(s, j) = 1.6 + options.separation * options.noise_sd * gauss(rng) / std::sqrt(2.0);

  const int n = std::accumulate(counts_per_stage.begin(), counts_per_stage.end(), 0);
  LabeledDataset ds;
  ds.features.resize(n, d + 1);
  ds.labels.resize(n);
  for (int j = 0; j < d; ++j) {
    std::string digits = std::to_string(j);
    digits.insert(0, 3 - std::min<std::size_t>(digits.size(), 3), '0');
    ds.feature_names.push_back("sampen_" + digits);
  }
  ds.feature_names.emplace_back("age_years");
  int row = 0;
  for (std::size_t s = 0; s < bins.size(); ++s) {
    std::uniform_real_distribution<double> age(bins[s].min_age, bins[s].max_age + 1.0);
    for (int i = 0; i < counts_per_stage[s]; ++i, ++row) {
      for (int j = 0; j < d; ++j)
        ds.features(row, j) = centres(static_cast<Eigen::Index>(s), j) + options.noise_sd * gauss(rng);
      ds.features(row, d) = std::min(age(rng), bins[s].max_age + 0.999);
      ds.labels(row) = static_cast<int>(s);
    }
  }
  return ds;
}

Eigen::MatrixXd block_z_matrix(const std::vector<int>& sizes, double within, double between,
                               double noise_sd, std::uint64_t seed) {
  const int r = std::accumulate(sizes.begin(), sizes.end(), 0);
  std::vector<int> block;
  for (std::size_t b = 0; b < sizes.size(); ++b) block.insert(block.end(), static_cast<std::size_t>(sizes[b]), static_cast<int>(b));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(r, r);
  for (int j = 0; j < r; ++j)
    for (int i = j + 1; i < r; ++i) {
      const double base = block[static_cast<std::size_t>(i)] == block[static_cast<std::size_t>(j)] ? within : between;
      const double v = base + (noise_sd > 0.0 ? gauss(rng) : 0.0);
      z(i, j) = v;
      z(j, i) = v;
    }
  return z;
}

}  // namespace rsfc::synth
