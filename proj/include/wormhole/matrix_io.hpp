#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wormhole/edm.hpp"
#include "wormhole/pointcloud.hpp"

namespace wormhole {

namespace io_detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace io_detail

// Full matrix as CSV, row-major, one row per line.
inline void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << io_detail::format_double(m(i, j));
    }
    out << '\n';
  }
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        std::ostringstream msg;
        msg << "cannot parse '" << cell << "' at line " << line_no << ", field "
            << row.size() + 1 << " of " << path.string();
        throw std::runtime_error(msg.str());
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      std::ostringstream msg;
      msg << "ragged row at line " << line_no << " of " << path.string();
      throw std::runtime_error(msg.str());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty matrix file " + path.string());
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

// Binary square matrix: u64 N header, then N*N float64 row-major.
inline void write_matrix_binary(const std::filesystem::path& path, const Matrix& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("binary matrix format is for square matrices");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::uint64_t n = static_cast<std::uint64_t>(m.rows());
  out.write(reinterpret_cast<const char*>(&n), 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline Matrix read_matrix_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), 8);
  if (!in) throw std::runtime_error("unexpected end of file at byte 0 reading N header");
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < n; ++j) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), 8);
      if (!in) {
        std::ostringstream msg;
        msg << "unexpected end of file at byte " << 8 + 8 * (i * n + j)
            << " reading entry (" << i << ", " << j << ")";
        throw std::runtime_error(msg.str());
      }
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  return m;
}

// Dispatch on extension: .csv is text, anything else the binary container.
inline Matrix read_matrix_auto(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? read_matrix_csv(path)
                                    : read_matrix_binary(path);
}

inline void write_matrix_auto(const std::filesystem::path& path, const Matrix& m) {
  if (path.extension() == ".csv")
    write_matrix_csv(path, m);
  else
    write_matrix_binary(path, m);
}

inline nlohmann::json bounds_to_json(const BoundsReport& report) {
  nlohmann::json j;
  j["lower"] = report.lower;
  j["upper"] = report.upper;
  j["spectrum"] = std::vector<double>(
      report.spectrum.data(), report.spectrum.data() + report.spectrum.size());
  return j;
}

}  // namespace wormhole
