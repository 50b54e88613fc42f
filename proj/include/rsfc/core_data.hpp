#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rsfc {

/// One subject's BOLD series: rows are timepoints, columns are ROIs.
class TimeSeriesMatrix {
 public:
  TimeSeriesMatrix() = default;
  /// Throws DataError unless T >= 2, R >= 2 and every entry is finite.
  explicit TimeSeriesMatrix(Eigen::MatrixXd values);

  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::Index n_timepoints() const { return values_.rows(); }
  Eigen::Index n_rois() const { return values_.cols(); }
  auto roi(Eigen::Index i) const { return values_.col(i); }

 private:
  Eigen::MatrixXd values_;
};

// ---------------------------------------------------------------------------
// Developmental stages

struct StageBin {
  int index;  // 1-based
  std::string label;
  int min_age;  // inclusive, whole years
  int max_age;  // inclusive
};

/// Ordered, contiguous age bins. The default is the four-stage layout
/// YA 7-19, MA 20-34, ML 35-53, E 54-89.
class StageBins {
 public:
  StageBins();
  /// Throws ConfigError unless bins are non-empty, ascending and contiguous.
  explicit StageBins(std::vector<StageBin> bins);

  const std::vector<StageBin>& bins() const { return bins_; }
  std::size_t size() const { return bins_.size(); }
  const StageBin& operator[](std::size_t i) const { return bins_[i]; }
  int min_age() const { return bins_.front().min_age; }
  int max_age() const { return bins_.back().max_age; }

 private:
  std::vector<StageBin> bins_;
};

struct StageId {
  int index = 0;  // 1-based
  std::string label;
  int min_age = 0;
  int max_age = 0;
  /// Age fell outside the covered range and was snapped to the nearest bin.
  bool out_of_range = false;

  int zero_based() const { return index - 1; }
};

/// Stage whose bin contains floor(age). Ages below/above the covered range
/// map to the first/last bin with `out_of_range` set. Throws DataError for a
/// non-finite age.
StageId assign_stage(double age_years, const StageBins& bins = StageBins{});

// ---------------------------------------------------------------------------
// ROI table

enum class Network { DMN = 0, FPN, CON, SMN, ON, CN };
inline constexpr std::size_t kNetworkCount = 6;
inline constexpr std::array<std::string_view, kNetworkCount> kNetworkLabels = {"DMN", "FPN", "CON",
                                                                              "SMN", "ON", "CN"};

std::string_view to_string(Network n);
/// Throws DataError for labels outside the six-network vocabulary.
Network parse_network(std::string_view label);

struct RoiEntry {
  int roi_index = 0;
  Eigen::Vector3d mni_xyz = Eigen::Vector3d::Zero();
  Network network = Network::DMN;
  std::string name;
};

class RoiTable {
 public:
  RoiTable() = default;
  /// Throws DataError unless roi_index values are exactly 0..R-1 in order.
  explicit RoiTable(std::vector<RoiEntry> rows);

  const std::vector<RoiEntry>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  const RoiEntry& operator[](std::size_t i) const { return rows_[i]; }
  /// Network index (0..5) per ROI.
  Eigen::VectorXi network_assignments() const;

 private:
  std::vector<RoiEntry> rows_;
};

RoiTable load_roi_table(const std::filesystem::path& path);
void write_roi_table(const std::filesystem::path& path, const RoiTable& table);

/// Network sizes of the 160-ROI template, in Network order.
inline constexpr std::array<int, kNetworkCount> kTemplateNetworkSizes = {34, 21, 32, 33, 22, 18};

/// A synthetic, non-clinical 160-ROI table with the template's network sizes
/// and made-up MNI coordinates. Intended for tests and demos only.
RoiTable sample_roi_table();

/// Same made-up layout for an arbitrary list of (network, size) blocks, in order.
RoiTable synthetic_roi_table(const std::vector<std::pair<Network, int>>& blocks);

// ---------------------------------------------------------------------------
// Cohort

struct SubjectRecord {
  std::string subject_id;
  double age_years = 0.0;
  std::optional<StageId> stage;
  std::filesystem::path source_path;
};

struct Cohort {
  std::vector<SubjectRecord> subjects;
  std::optional<RoiTable> roi_table;
};

/// Parses `subject_id,age_years,timeseries_path`. Relative series paths are
/// resolved against the manifest's directory. Stages are left unassigned.
Cohort load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<SubjectRecord>& subjects);

/// Assigns every subject's stage in place.
void assign_stages(Cohort& cohort, const StageBins& bins = StageBins{});

TimeSeriesMatrix load_timeseries(const std::filesystem::path& path, Eigen::Index expected_rois,
                                 bool skip_header = false);
void write_timeseries(const std::filesystem::path& path, const TimeSeriesMatrix& series);

}  // namespace rsfc
