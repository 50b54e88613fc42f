#include "rsfc/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rsfc/error.hpp"

namespace rsfc::io {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (text == "nan" || text == "NaN" || text == "NAN") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf" || text == "Inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf" || text == "-Inf") return -std::numeric_limits<double>::infinity();
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw DataError("not a number: '" + std::string(text) + "'");
  return value;
}

std::string_view trim(std::string_view text) {
  constexpr std::string_view ws = " \t\r\n";
  const auto b = text.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = text.find_last_not_of(ws);
  return text.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const auto start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Eigen::MatrixXd read_matrix_csv(const std::filesystem::path& path, bool skip_header,
                                bool allow_nonfinite) {
  const std::string text = read_file(path);
  std::vector<double> cells;
  Eigen::Index cols = -1;
  Eigen::Index rows = 0;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + start, end - start);
    start = end + 1;
    ++line_no;
    if (skip_header && line_no == 1) continue;
    if (trim(line).empty()) continue;
    const auto fields = split(line, ',');
    if (cols < 0) cols = static_cast<Eigen::Index>(fields.size());
    if (static_cast<Eigen::Index>(fields.size()) != cols)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(cols) + " columns, found " + std::to_string(fields.size()));
    for (auto f : fields) {
      double v = 0.0;
      try {
        v = parse_double(f);
      } catch (const DataError& e) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (!allow_nonfinite && !std::isfinite(v))
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
      cells.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError(path.string() + ": no data rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = cells[static_cast<std::size_t>(r * cols + c)];
  return m;
}

std::string matrix_to_csv(const Eigen::Ref<const Eigen::MatrixXd>& m, char sep) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 12);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += sep;
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_matrix_csv(const std::filesystem::path& path,
                      const Eigen::Ref<const Eigen::MatrixXd>& m) {
  write_file_atomic(path, matrix_to_csv(m));
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[value & 0xF];
    value >>= 4;
  }
  return s;
}

}  // namespace rsfc::io
