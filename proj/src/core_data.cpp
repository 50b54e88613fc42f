#include "rsfc/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "rsfc/error.hpp"
#include "rsfc/io.hpp"

namespace rsfc {

TimeSeriesMatrix::TimeSeriesMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
  if (values_.rows() < 2) throw DataError("time series needs at least 2 timepoints");
  if (values_.cols() < 2) throw DataError("time series needs at least 2 ROIs");
  if (!values_.allFinite()) throw DataError("time series contains non-finite values");
}

// ---------------------------------------------------------------------------

StageBins::StageBins()
    : bins_{{1, "YA", 7, 19}, {2, "MA", 20, 34}, {3, "ML", 35, 53}, {4, "E", 54, 89}} {}

StageBins::StageBins(std::vector<StageBin> bins) : bins_(std::move(bins)) {
  if (bins_.empty()) throw ConfigError("stage bins must not be empty");
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    const auto& b = bins_[i];
    if (b.index != static_cast<int>(i) + 1)
      throw ConfigError("stage bin indices must be 1..n in order");
    if (b.min_age > b.max_age) throw ConfigError("stage bin " + b.label + " has min > max");
    if (i > 0 && b.min_age != bins_[i - 1].max_age + 1)
      throw ConfigError("stage bins must be contiguous and ascending");
  }
}

StageId assign_stage(double age_years, const StageBins& bins) {
  if (!std::isfinite(age_years)) throw DataError("age must be finite");
  const double whole = std::floor(age_years);
  const StageBin* hit = nullptr;
  bool out_of_range = false;
  if (whole < bins.min_age()) {
    hit = &bins[0];
    out_of_range = true;
  } else if (whole > bins.max_age()) {
    hit = &bins[bins.size() - 1];
    out_of_range = true;
  } else {
    for (const auto& b : bins.bins())
      if (whole >= b.min_age && whole <= b.max_age) {
        hit = &b;
        break;
      }
  }
  return StageId{hit->index, hit->label, hit->min_age, hit->max_age, out_of_range};
}

// ---------------------------------------------------------------------------

std::string_view to_string(Network n) { return kNetworkLabels[static_cast<std::size_t>(n)]; }

Network parse_network(std::string_view label) {
  for (std::size_t i = 0; i < kNetworkCount; ++i)
    if (kNetworkLabels[i] == label) return static_cast<Network>(i);
  throw DataError("unknown network label: '" + std::string(label) + "'");
}

RoiTable::RoiTable(std::vector<RoiEntry> rows) : rows_(std::move(rows)) {
  if (rows_.size() < 2) throw DataError("ROI table needs at least 2 rows");
  for (std::size_t i = 0; i < rows_.size(); ++i)
    if (rows_[i].roi_index != static_cast<int>(i))
      throw DataError("ROI table indices must be dense 0..R-1 in order (row " + std::to_string(i) +
                      ")");
}

Eigen::VectorXi RoiTable::network_assignments() const {
  Eigen::VectorXi out(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t i = 0; i < rows_.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = static_cast<int>(rows_[i].network);
  return out;
}

RoiTable load_roi_table(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  std::vector<RoiEntry> rows;
  std::size_t start = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto f = io::split(line, ',');
    if (!header_seen) {
      if (io::trim(line) != "roi_index,x,y,z,network,name")
        throw DataError(path.string() + ": expected header 'roi_index,x,y,z,network,name'");
      header_seen = true;
      continue;
    }
    if (f.size() != 6)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 6 fields");
    try {
      RoiEntry e;
      const double idx = io::parse_double(f[0]);
      if (idx != std::floor(idx)) throw DataError("roi_index must be an integer");
      e.roi_index = static_cast<int>(idx);
      e.mni_xyz = {io::parse_double(f[1]), io::parse_double(f[2]), io::parse_double(f[3])};
      if (!e.mni_xyz.allFinite()) throw DataError("non-finite coordinate");
      e.network = parse_network(f[4]);
      e.name = std::string(f[5]);
      rows.push_back(std::move(e));
    } catch (const DataError& err) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + err.what());
    }
  }
  if (!header_seen) throw DataError(path.string() + ": empty ROI table");
  return RoiTable(std::move(rows));
}

void write_roi_table(const std::filesystem::path& path, const RoiTable& table) {
  std::string out = "roi_index,x,y,z,network,name\n";
  for (const auto& r : table.rows()) {
    out += std::to_string(r.roi_index) + ',' + io::format_double(r.mni_xyz.x()) + ',' +
           io::format_double(r.mni_xyz.y()) + ',' + io::format_double(r.mni_xyz.z()) + ',' +
           std::string(to_string(r.network)) + ',' + r.name + '\n';
  }
  io::write_file_atomic(path, out);
}

RoiTable sample_roi_table() {
  std::vector<std::pair<Network, int>> blocks;
  for (std::size_t n = 0; n < kNetworkCount; ++n)
    blocks.emplace_back(static_cast<Network>(n), kTemplateNetworkSizes[n]);
  return synthetic_roi_table(blocks);
}

RoiTable synthetic_roi_table(const std::vector<std::pair<Network, int>>& blocks) {
  // Each network gets a made-up centre; members sit on a golden-angle spiral
  // around it, rounded to whole millimetres.
  static constexpr std::array<std::array<double, 3>, kNetworkCount> centres = {
      {{0, -52, 28}, {40, 20, 40}, {-30, 10, 4}, {0, -24, 60}, {0, -86, 4}, {0, -64, -30}}};
  std::vector<RoiEntry> rows;
  int index = 0;
  for (const auto& [network, size] : blocks) {
    const auto n = static_cast<std::size_t>(network);
    for (int k = 0; k < size; ++k) {
      const double theta = k * std::numbers::pi * (3.0 - std::sqrt(5.0));
      const double radius = 6.0 + 1.5 * k;
      const double x = centres[n][0] + std::round(radius * std::cos(theta));
      const double y = centres[n][1] + std::round(radius * std::sin(theta) * 0.6);
      const double z = centres[n][2] + static_cast<double>((k % 5) * 4 - 8);
      RoiEntry e;
      e.roi_index = index;
      e.mni_xyz = {std::clamp(x, -70.0, 70.0), std::clamp(y, -105.0, 70.0), std::clamp(z, -45.0, 75.0)};
      e.network = network;
      e.name = std::string(kNetworkLabels[n]) + "_" + std::to_string(k + 1);
      rows.push_back(std::move(e));
      ++index;
    }
  }
  return RoiTable(std::move(rows));
}

// ---------------------------------------------------------------------------

Cohort load_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("manifest not found: " + path.string());
  const std::string text = io::read_file(path);
  const auto base = path.parent_path();
  Cohort cohort;
  std::set<std::string> seen;
  std::size_t start = 0;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (io::trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    if (!header_seen) {
      if (io::trim(line) != "subject_id,age_years,timeseries_path")
        throw DataError(where + "expected header 'subject_id,age_years,timeseries_path'");
      header_seen = true;
      continue;
    }
    const auto f = io::split(line, ',');
    if (f.size() != 3) throw DataError(where + "expected 3 fields, found " + std::to_string(f.size()));
    if (f[0].empty()) throw DataError(where + "empty subject_id");
    if (f[2].empty()) throw DataError(where + "empty timeseries_path");
    SubjectRecord rec;
    rec.subject_id = std::string(f[0]);
    try {
      rec.age_years = io::parse_double(f[1]);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (!std::isfinite(rec.age_years) || rec.age_years < 0.0 || rec.age_years > 120.0)
      throw DataError(where + "age outside [0, 120]: " + std::string(f[1]));
    if (!seen.insert(rec.subject_id).second)
      throw DataError(where + "duplicate subject_id '" + rec.subject_id + "'");
    std::filesystem::path p{std::string(f[2])};
    rec.source_path = p.is_absolute() ? p : base / p;
    cohort.subjects.push_back(std::move(rec));
  }
  if (!header_seen) throw DataError(path.string() + ": empty manifest");
  if (cohort.subjects.empty()) throw DataError(path.string() + ": manifest lists no subjects");
  return cohort;
}

void write_manifest(const std::filesystem::path& path, const std::vector<SubjectRecord>& subjects) {
  std::string out = "subject_id,age_years,timeseries_path\n";
  const auto base = path.parent_path();
  for (const auto& s : subjects) {
    auto p = s.source_path;
    if (p.is_absolute() && !base.empty()) p = std::filesystem::proximate(p, base);
    out += s.subject_id + ',' + io::format_double(s.age_years) + ',' + p.generic_string() + '\n';
  }
  io::write_file_atomic(path, out);
}

void assign_stages(Cohort& cohort, const StageBins& bins) {
  for (auto& s : cohort.subjects) s.stage = assign_stage(s.age_years, bins);
}

TimeSeriesMatrix load_timeseries(const std::filesystem::path& path, Eigen::Index expected_rois,
                                 bool skip_header) {
  Eigen::MatrixXd m = io::read_matrix_csv(path, skip_header, /*allow_nonfinite=*/false);
  if (m.cols() != expected_rois)
    throw DataError(path.string() + ": expected " + std::to_string(expected_rois) +
                    " ROI columns, found " + std::to_string(m.cols()));
  if (m.rows() < 2) throw DataError(path.string() + ": needs at least 2 timepoints");
  return TimeSeriesMatrix(std::move(m));
}

void write_timeseries(const std::filesystem::path& path, const TimeSeriesMatrix& series) {
  io::write_matrix_csv(path, series.values());
}

}  // namespace rsfc
