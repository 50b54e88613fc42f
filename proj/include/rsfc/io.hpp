#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace rsfc::io {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double value);

/// Strict decimal parse; accepts "nan", "inf" and "-inf". Throws DataError.
double parse_double(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep);
std::vector<std::string_view> split_whitespace(std::string_view line);
std::string_view trim(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename, so readers never see a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Numeric CSV without header. Every row must have the same width and every
/// cell must be finite unless `allow_nonfinite`.
Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, bool skip_header = false,
                                bool allow_nonfinite = false);
std::string matrix_to_csv(const Eigen::Ref<const Eigen::MatrixXd>& m, char sep = ',');
void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::Ref<const Eigen::MatrixXd>& m);

/// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace rsfc::io
