#pragma once

#include <Eigen/Dense>

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "stochred/error.hpp"

namespace stochred::harness {

/// Shortest text for a double with 17 significant digits (round-trips).
inline std::string format_double(double v) {
  std::array<char, 40> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 17);
  return std::string(buf.data(), r.ptr);
}

/// Column-oriented CSV table. Missing cells (failed or disabled models) are
/// written as empty fields.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::optional<double>> cells) {
    if (cells.size() != header_.size()) throw InvalidDimension("CSV row width differs from header");
    rows_.push_back(std::move(cells));
  }

  std::size_t rows() const noexcept { return rows_.size(); }

  /// RFC 4180: CRLF line ends, fields quoted only when needed.
  std::string str() const {
    std::string out;
    for (std::size_t c = 0; c < header_.size(); ++c) {
      if (c) out += ',';
      out += quote(header_[c]);
    }
    out += "\r\n";
    for (const auto& row : rows_) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out += ',';
        if (row[c]) out += format_double(*row[c]);
      }
      out += "\r\n";
    }
    return out;
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char ch : s) {
      if (ch == '"') q += '"';
      q += ch;
    }
    return q + "\"";
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::optional<double>>> rows_;
};

// Sampled series on disk: 8-byte magic, rows and cols as u64, the sample
// interval, then row-major little-endian doubles.
inline constexpr char kSeriesMagic[8] = {'S', 'T', 'R', 'D', 'S', 'E', 'R', '1'};

struct StoredSeries {
  Eigen::MatrixXd samples;
  double sample_dt = 0.0;
};

static_assert(std::endian::native == std::endian::little, "series files assume a little-endian host");

inline void save_series(const std::filesystem::path& path, const Eigen::MatrixXd& samples,
                        double sample_dt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  const std::uint64_t rows = static_cast<std::uint64_t>(samples.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(samples.cols());
  f.write(kSeriesMagic, sizeof kSeriesMagic);
  f.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  f.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  f.write(reinterpret_cast<const char*>(&sample_dt), sizeof sample_dt);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = samples;
  f.write(reinterpret_cast<const char*>(rm.data()),
          static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!f) throw ConfigError("failed while writing " + path.string());
}

inline StoredSeries load_series(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open series file " + path.string());
  char magic[8];
  std::uint64_t rows = 0, cols = 0;
  StoredSeries s;
  f.read(magic, sizeof magic);
  f.read(reinterpret_cast<char*>(&rows), sizeof rows);
  f.read(reinterpret_cast<char*>(&cols), sizeof cols);
  f.read(reinterpret_cast<char*>(&s.sample_dt), sizeof s.sample_dt);
  if (!f || std::memcmp(magic, kSeriesMagic, sizeof magic) != 0) {
    throw ConfigError(path.string() + " is not a series file");
  }
  if (rows > (std::uint64_t{1} << 32) || cols > (std::uint64_t{1} << 20)) {
    throw ConfigError(path.string() + " has an implausible shape");
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
      static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  f.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!f) throw ConfigError(path.string() + " is truncated");
  s.samples = rm;
  return s;
}

}  // namespace stochred::harness
