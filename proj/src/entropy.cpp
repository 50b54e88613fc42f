#include "rsfc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "rsfc/error.hpp"
#include "rsfc/io.hpp"

namespace rsfc {

void EntropyParams::validate() const {
  if (m < 1) throw ConfigError("sample entropy: m must be >= 1");
  if (tau < 1) throw ConfigError("sample entropy: tau must be >= 1");
  if (!std::isfinite(r.value) || r.value <= 0.0)
    throw ConfigError("sample entropy: tolerance must be > 0");
  if (r.kind == Tolerance::Kind::FractionOfSd && r.value > 2.0)
    throw ConfigError("sample entropy: fractional tolerance must lie in (0, 2]");
}

std::string_view to_string(SampEn::Status s) {
  switch (s) {
    case SampEn::Status::Finite: return "finite";
    case SampEn::Status::Infinite: return "infinite";
    case SampEn::Status::Undefined: return "undefined";
    case SampEn::Status::DegenerateSeries: return "degenerate_series";
  }
  return "unknown";
}

double resolve_tolerance(const Eigen::Ref<const Eigen::VectorXd>& series, const Tolerance& spec) {
  if (series.size() < 2) throw DataError("tolerance: series needs at least 2 samples");
  if (spec.kind == Tolerance::Kind::Absolute) return spec.value;
  // Deviations are taken against the first sample so that adding a constant
  // to the series leaves every intermediate unchanged whenever the shift
  // itself is exact.
  const Eigen::ArrayXd dev = series.array() - series(0);
  const double mean = dev.mean();
  const double var = (dev - mean).square().mean();
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) throw DataError("tolerance: zero standard deviation (degenerate series)");
  return spec.value * sd;
}

namespace {

struct Layout {
  Eigen::Index n;          // N
  Eigen::Index templates;  // N - m*tau
  double norm_pattern;     // N - (m+1)*tau, per-template normalisation
  double norm_series;      // N - m*tau, per-series normalisation
};

Layout check_inputs(const Eigen::Ref<const Eigen::VectorXd>& series, const EntropyParams& p) {
  p.validate();
  const Eigen::Index n = series.size();
  const Eigen::Index templates = n - static_cast<Eigen::Index>(p.m) * p.tau;
  if (templates < 2 || n - static_cast<Eigen::Index>(p.m + 1) * p.tau < 1)
    throw DataError("sample entropy: series too short for m=" + std::to_string(p.m) +
                    ", tau=" + std::to_string(p.tau) + " (N=" + std::to_string(n) + ")");
  if (!series.allFinite()) throw DataError("sample entropy: non-finite input");
  return {n, templates, static_cast<double>(n - static_cast<Eigen::Index>(p.m + 1) * p.tau),
          static_cast<double>(templates)};
}

SampEn finish(double u_m, double u_m1) {
  if (u_m == 0.0) return {std::numeric_limits<double>::quiet_NaN(), SampEn::Status::Undefined};
  if (u_m1 == 0.0) return {std::numeric_limits<double>::infinity(), SampEn::Status::Infinite};
  return {-std::log(u_m1 / u_m) + 0.0, SampEn::Status::Finite};
}

}  // namespace

SampEn sample_entropy_oracle(const Eigen::Ref<const Eigen::VectorXd>& series,
                             const EntropyParams& params) {
  const Layout lay = check_inputs(series, params);
  const double r = resolve_tolerance(series, params.r);
  const Eigen::Index m = params.m;
  const Eigen::Index tau = params.tau;

  auto chebyshev = [&](Eigen::Index i, Eigen::Index j, Eigen::Index len) {
    double d = 0.0;
    for (Eigen::Index k = 0; k < len; ++k)
      d = std::max(d, std::abs(series(i + k * tau) - series(j + k * tau)));
    return d;
  };

  auto u_for_length = [&](Eigen::Index len) {
    double u = 0.0;
    for (Eigen::Index i = 0; i < lay.templates; ++i) {
      std::int64_t b = 0;
      for (Eigen::Index j = 0; j < lay.templates; ++j)
        if (j != i && chebyshev(i, j, len) <= r) ++b;
      u += static_cast<double>(b) / lay.norm_pattern;
    }
    return u / lay.norm_series;
  };

  return finish(u_for_length(m), u_for_length(m + 1));
}

SampEn sample_entropy(const Eigen::Ref<const Eigen::VectorXd>& series, const EntropyParams& params) {
  const Layout lay = check_inputs(series, params);
  const double r = resolve_tolerance(series, params.r);
  const Eigen::Index m = params.m;
  const Eigen::Index tau = params.tau;
  const Eigen::Index count = lay.templates;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return series(a) < series(b); });

  // coords(k, a): k-th coordinate of the a-th template in sorted order, for
  // k = 0..m (the last row extends patterns to length m+1).
  Eigen::MatrixXd coords(m + 1, count);
  for (Eigen::Index a = 0; a < count; ++a) {
    const Eigen::Index i = order[static_cast<std::size_t>(a)];
    for (Eigen::Index k = 0; k <= m; ++k) coords(k, a) = series(i + k * tau);
  }

  std::int64_t matches_m = 0;
  std::int64_t matches_m1 = 0;
  for (Eigen::Index a = 0; a < count; ++a) {
    const double lead = coords(0, a);
    for (Eigen::Index b = a + 1; b < count && coords(0, b) - lead <= r; ++b) {
      bool ok = true;
      for (Eigen::Index k = 1; k < m && ok; ++k) ok = std::abs(coords(k, a) - coords(k, b)) <= r;
      if (!ok) continue;
      ++matches_m;
      if (std::abs(coords(m, a) - coords(m, b)) <= r) ++matches_m1;
    }
  }
  // Each unordered pair stands for the two ordered pairs (i,j) and (j,i).
  const double u_m = static_cast<double>(2 * matches_m) / lay.norm_pattern / lay.norm_series;
  const double u_m1 = static_cast<double>(2 * matches_m1) / lay.norm_pattern / lay.norm_series;
  return finish(u_m, u_m1);
}

std::vector<SampEn> entropy_features(const TimeSeriesMatrix& subject, const EntropyParams& params) {
  params.validate();
  std::vector<SampEn> out(static_cast<std::size_t>(subject.n_rois()));
  for (Eigen::Index c = 0; c < subject.n_rois(); ++c) {
    const Eigen::VectorXd column = subject.roi(c);
    if (params.r.kind == Tolerance::Kind::FractionOfSd &&
        (column.array() == column(0)).all()) {
      out[static_cast<std::size_t>(c)] = {std::numeric_limits<double>::quiet_NaN(),
                                          SampEn::Status::DegenerateSeries};
      continue;
    }
    try {
      out[static_cast<std::size_t>(c)] = sample_entropy(column, params);
    } catch (const Error& e) {
      throw DataError("ROI " + std::to_string(c) + ": " + e.what());
    }
  }
  return out;
}

namespace {
std::string column_name(std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "sampen_" + digits;
}
}  // namespace

std::string feature_table_csv(const std::vector<EntropyFeatureRow>& rows) {
  const std::size_t width = rows.empty() ? 0 : rows.front().sampen.size();
  std::string out = "subject_id,age_years";
  for (std::size_t i = 0; i < width; ++i) out += "," + column_name(i);
  out += '\n';
  for (const auto& row : rows) {
    if (row.sampen.size() != width) throw DataError("feature rows have differing widths");
    out += row.subject_id + ',' + io::format_double(row.age_years);
    for (const auto& s : row.sampen) out += ',' + io::format_double(s.value);
    out += '\n';
  }
  return out;
}

std::vector<EntropyFeatureRow> parse_feature_table(const std::string& csv) {
  std::vector<EntropyFeatureRow> rows;
  std::size_t start = 0;
  std::size_t width = 0;
  bool header = true;
  while (start < csv.size()) {
    auto end = csv.find('\n', start);
    if (end == std::string::npos) end = csv.size();
    std::string_view line(csv.data() + start, end - start);
    start = end + 1;
    if (io::trim(line).empty()) continue;
    const auto f = io::split(line, ',');
    if (header) {
      if (f.size() < 2 || f[0] != "subject_id" || f[1] != "age_years")
        throw DataError("feature table: bad header");
      width = f.size() - 2;
      header = false;
      continue;
    }
    if (f.size() != width + 2) throw DataError("feature table: ragged row");
    EntropyFeatureRow row;
    row.subject_id = std::string(f[0]);
    row.age_years = io::parse_double(f[1]);
    for (std::size_t i = 0; i < width; ++i) {
      const double v = io::parse_double(f[i + 2]);
      SampEn::Status st = SampEn::Status::Finite;
      if (std::isnan(v)) st = SampEn::Status::Undefined;
      else if (std::isinf(v)) st = SampEn::Status::Infinite;
      row.sampen.push_back({v, st});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rsfc
