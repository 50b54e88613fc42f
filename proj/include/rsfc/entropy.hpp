#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rsfc/core_data.hpp"

namespace rsfc {

/// Match tolerance for sample entropy: either an absolute distance or a
/// fraction of the series' population standard deviation.
struct Tolerance {
  enum class Kind { Absolute, FractionOfSd };
  Kind kind = Kind::FractionOfSd;
  double value = 0.2;

  static Tolerance absolute(double r) { return {Kind::Absolute, r}; }
  static Tolerance fraction_of_sd(double f) { return {Kind::FractionOfSd, f}; }
};

struct EntropyParams {
  int m = 2;    // pattern length
  Tolerance r;  // defaults to 0.2 x SD
  int tau = 1;  // time delay

  /// Throws ConfigError on m < 1, tau < 1, or a tolerance outside its range.
  void validate() const;
};

/// Sample entropy outcome. `Infinite` means no (m+1)-matches were found;
/// `Undefined` means not even m-matches were found (0/0); `DegenerateSeries`
/// means the tolerance could not be resolved (zero SD with fractional r).
struct SampEn {
  enum class Status { Finite, Infinite, Undefined, DegenerateSeries };
  double value = 0.0;
  Status status = Status::Finite;

  bool finite() const { return status == Status::Finite; }
};

std::string_view to_string(SampEn::Status s);

/// Absolute tolerance for `series`. Throws DataError for a zero-SD series
/// under a fractional spec.
double resolve_tolerance(const Eigen::Ref<const Eigen::VectorXd>& series, const Tolerance& spec);

/// Literal double-loop evaluation: every ordered pair (i, j != i) of the
/// N - m*tau templates is compared with the Chebyshev distance, once for
/// length m and once for length m+1, and the counts pass through the
/// per-template and per-series normalisations before taking -ln(U_{m+1}/U_m).
/// O(N^2). Throws DataError when N - m*tau < 2 or the input is non-finite.
SampEn sample_entropy_oracle(const Eigen::Ref<const Eigen::VectorXd>& series,
                             const EntropyParams& params = {});

/// Same value as the oracle (to 1e-12) from a sort-and-sweep over the
/// templates' leading coordinate: only pairs whose first coordinates lie
/// within r are examined, each unordered pair once.
SampEn sample_entropy(const Eigen::Ref<const Eigen::VectorXd>& series,
                      const EntropyParams& params = {});

/// Per-ROI sample entropy of a subject. Columns that cannot resolve a
/// tolerance are flagged `DegenerateSeries`; other errors are rethrown as
/// DataError naming the ROI.
std::vector<SampEn> entropy_features(const TimeSeriesMatrix& subject,
                                     const EntropyParams& params = {});

struct EntropyFeatureRow {
  std::string subject_id;
  double age_years = 0.0;
  std::vector<SampEn> sampen;
};

/// Feature table `subject_id,age_years,sampen_000..`; non-finite entries are
/// written as "inf"/"nan".
std::string feature_table_csv(const std::vector<EntropyFeatureRow>& rows);
std::vector<EntropyFeatureRow> parse_feature_table(const std::string& csv);

}  // namespace rsfc
