#include "rsfc/netmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rsfc/error.hpp"
#include "rsfc/io.hpp"

namespace rsfc {

namespace {

void check_shape(const Eigen::Ref<const Eigen::MatrixXd>& z, const NetworkMap& map, int network) {
  if (z.rows() != z.cols() || z.rows() != map.assignments.size())
    throw DataError("network metrics: matrix and partition sizes differ");
  if (network < 0 || network >= map.network_count())
    throw DataError("network metrics: network id out of range");
}

}  // namespace

double within_connectivity(const Eigen::Ref<const Eigen::MatrixXd>& z, const NetworkMap& map,
                           int network) {
  check_shape(z, map, network);
  std::vector<Eigen::Index> nodes;
  for (Eigen::Index i = 0; i < map.assignments.size(); ++i)
    if (map.assignments(i) == network) nodes.push_back(i);
  if (nodes.size() < 2)
    throw DataError("within connectivity: network " + map.labels[static_cast<std::size_t>(network)] +
                    " has fewer than two nodes");
  double sum = 0.0;
  for (std::size_t b = 1; b < nodes.size(); ++b)
    for (std::size_t a = 0; a < b; ++a) sum += z(nodes[a], nodes[b]);
  const double pairs = static_cast<double>(nodes.size() * (nodes.size() - 1) / 2);
  return sum / pairs;
}

double between_connectivity(const Eigen::Ref<const Eigen::MatrixXd>& z, const NetworkMap& map,
                            int network) {
  check_shape(z, map, network);
  std::vector<Eigen::Index> inside;
  std::vector<Eigen::Index> outside;
  for (Eigen::Index i = 0; i < map.assignments.size(); ++i)
    (map.assignments(i) == network ? inside : outside).push_back(i);
  if (inside.empty()) throw DataError("between connectivity: empty network");
  if (outside.empty()) throw DataError("between connectivity: network covers every node");
  double sum = 0.0;
  for (auto i : inside)
    for (auto o : outside) sum += z(i, o);
  return sum / static_cast<double>(inside.size() * outside.size());
}

std::vector<NetworkConnectivityStats> subject_network_stats(const std::string& subject_id,
                                                            double age_years,
                                                            const Eigen::Ref<const Eigen::MatrixXd>& z,
                                                            const NetworkMap& map) {
  std::vector<NetworkConnectivityStats> out;
  for (int n = 0; n < map.network_count(); ++n) {
    NetworkConnectivityStats s;
    s.subject_id = subject_id;
    s.age_years = age_years;
    s.network = map.labels[static_cast<std::size_t>(n)];
    s.wnc = within_connectivity(z, map, n);
    s.bnc = between_connectivity(z, map, n);
    s.ns = segregation(s.wnc, s.bnc);
    out.push_back(std::move(s));
  }
  return out;
}

double percentile(std::vector<double> values, double pct) {
  if (values.empty()) throw DataError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double pos = pct / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<Point> percentile_outlier_filter(const std::vector<Point>& points, double lo_pct,
                                             double hi_pct) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
    throw ConfigError("outlier filter: need 0 <= lo < hi <= 100");
  if (points.size() < 3) throw DataError("outlier filter: needs at least 3 points");
  std::vector<double> ys;
  ys.reserve(points.size());
  for (const auto& p : points) ys.push_back(p.y);
  const double lo = percentile(ys, lo_pct);
  const double hi = percentile(ys, hi_pct);
  std::vector<Point> kept;
  for (const auto& p : points)
    if (p.y >= lo && p.y <= hi) kept.push_back(p);
  return kept;
}

LinearFit linear_fit(const std::vector<Point>& points) {
  if (points.size() < 3) throw DataError("linear fit: needs at least 3 points");
  const double n = static_cast<double>(points.size());
  double mx = 0.0;
  double my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (const auto& p : points) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  if (!(sxx > 0.0)) throw DataError("linear fit: x values are all equal");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (!(syy > 0.0)) {
    fit.r_squared = 0.0;
    fit.degenerate = true;
    return fit;
  }
  double ss_res = 0.0;
  for (const auto& p : points) {
    const double e = p.y - (fit.intercept + fit.slope * p.x);
    ss_res += e * e;
  }
  fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return fit;
}

std::string_view to_string(Measure m) {
  switch (m) {
    case Measure::Wnc: return "wnc";
    case Measure::Bnc: return "bnc";
    case Measure::Ns: return "ns";
  }
  return "unknown";
}

TrendTable cohort_trends(const std::vector<NetworkConnectivityStats>& stats, double lo_pct,
                         double hi_pct) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
    throw ConfigError("cohort trends: need 0 <= lo < hi <= 100");
  // Networks in order of first appearance would depend on subject order;
  // sort labels instead.
  std::map<std::string, std::vector<const NetworkConnectivityStats*>> by_network;
  for (const auto& s : stats) by_network[s.network].push_back(&s);

  TrendTable table;
  for (const auto& [network, rows] : by_network) {
    for (Measure m : {Measure::Wnc, Measure::Bnc, Measure::Ns}) {
      SegregationTrend t;
      t.network = network;
      t.measure = m;
      t.n_input = static_cast<int>(rows.size());
      std::vector<Point> pts;
      for (const auto* r : rows) {
        if (m == Measure::Ns && !r->ns.defined) {
          ++t.n_undefined;
          continue;
        }
        const double y = m == Measure::Wnc ? r->wnc : m == Measure::Bnc ? r->bnc : r->ns.value;
        pts.push_back({r->age_years, y});
      }
      std::sort(pts.begin(), pts.end(),
                [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
      const std::string cell = network + "/" + std::string(to_string(m));
      if (pts.size() < 3) {
        table.skipped.push_back(cell + ": fewer than 3 points");
        continue;
      }
      std::vector<Point> kept = percentile_outlier_filter(pts, lo_pct, hi_pct);
      if (kept.size() < 3) {
        table.skipped.push_back(cell + ": fewer than 3 points after outlier removal");
        continue;
      }
      try {
        t.fit = linear_fit(kept);
      } catch (const DataError& e) {
        table.skipped.push_back(cell + ": " + e.what());
        continue;
      }
      t.n_used = static_cast<int>(kept.size());
      t.used = std::move(kept);
      table.trends.push_back(std::move(t));
    }
  }
  return table;
}

std::string trend_table_csv(const TrendTable& table) {
  std::string out = "network,measure,slope,intercept,r_squared,n_used\n";
  for (const auto& t : table.trends)
    out += t.network + ',' + std::string(to_string(t.measure)) + ',' + io::format_double(t.fit.slope) +
           ',' + io::format_double(t.fit.intercept) + ',' + io::format_double(t.fit.r_squared) + ',' +
           std::to_string(t.n_used) + '\n';
  return out;
}

std::string subject_stats_csv(const std::vector<NetworkConnectivityStats>& stats) {
  std::string out = "subject_id,age_years,network,wnc,bnc,ns,ns_defined\n";
  for (const auto& s : stats)
    out += s.subject_id + ',' + io::format_double(s.age_years) + ',' + s.network + ',' +
           io::format_double(s.wnc) + ',' + io::format_double(s.bnc) + ',' +
           (s.ns.defined ? io::format_double(s.ns.value) : std::string("nan")) + ',' +
           (s.ns.defined ? "1" : "0") + '\n';
  return out;
}

}  // namespace rsfc
