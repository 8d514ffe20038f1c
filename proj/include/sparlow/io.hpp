#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sparlow/errors.hpp"
#include "sparlow/graphs.hpp"
#include "sparlow/manifold.hpp"

namespace sparlow {

enum class DataFormat { csv, raw };

inline DataFormat format_from_name(const std::string& name) {
  if (name == "csv") return DataFormat::csv;
  if (name == "raw") return DataFormat::raw;
  throw ValidationError("unknown format '" + name + "' (expected csv or raw)");
}

namespace io_detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw IoError(std::string("unexpected end of file reading ") + what);
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw IoError(std::string("unexpected end of file reading ") + what);
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& in, const char* what) {
  std::uint64_t bits = get_u64(in, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void put_matrix(std::ostream& out, const Matrix& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) put_f64(out, m(i, j));
  }
}

inline Matrix get_matrix(std::istream& in, const char* what) {
  const std::uint32_t rows = get_u32(in, what);
  const std::uint32_t cols = get_u32(in, what);
  if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1u << 28)) {
    throw IoError(std::string("implausible matrix dimensions in ") + what);
  }
  Matrix m(rows, cols);
  for (std::uint32_t j = 0; j < cols; ++j) {
    for (std::uint32_t i = 0; i < rows; ++i) m(i, j) = get_f64(in, what);
  }
  return m;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

} // namespace io_detail

/// Raw matrix container: magic "SPLWDATA", u32 rows, u32 cols, then
/// rows*cols little-endian doubles in column-major order. Used both for the
/// raw dataset format (columns are samples) and dictionary dumps.
inline constexpr char kRawMagic[8] = {'S', 'P', 'L', 'W', 'D', 'A', 'T', 'A'};

inline void save_matrix_raw(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(kRawMagic, 8);
  io_detail::put_matrix(out, m);
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline Matrix load_matrix_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kRawMagic, 8) != 0) {
    throw IoError("'" + path + "' is not a raw matrix file (bad magic)");
  }
  return io_detail::get_matrix(in, path.c_str());
}

/// CSV matrix: one sample per row, comma-separated decimals. Returned with
/// samples as columns. Parse failures report line and byte offset.
inline Matrix load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string field = line.substr(pos, comma - pos);
      try {
        size_t used = 0;
        const double v = std::stod(field, &used);
        while (used < field.size() && std::isspace(static_cast<unsigned char>(field[used]))) {
          ++used;
        }
        if (used != field.size()) throw std::invalid_argument("trailing characters");
        row.push_back(v);
      } catch (const std::exception&) {
        throw IoError("'" + path + "': parse error at line " + std::to_string(lineno) +
                      ", byte " + std::to_string(pos) + " ('" + field + "')");
      }
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("'" + path + "': line " + std::to_string(lineno) + " has " +
                    std::to_string(row.size()) + " fields, expected " +
                    std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError("'" + path + "' contains no samples");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(rows.front().size());
  Matrix x(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) {
      x(i, j) = rows[static_cast<size_t>(j)][static_cast<size_t>(i)];
    }
  }
  return x;
}

/// Writes a matrix as CSV, one row per line.
inline void save_matrix_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << io_detail::format_double(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Label file: one integer per line, -1 marking an unlabeled sample.
inline std::vector<int> load_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      size_t used = 0;
      const int v = std::stoi(line, &used);
      while (used < line.size() && std::isspace(static_cast<unsigned char>(line[used]))) ++used;
      if (used != line.size()) throw std::invalid_argument("trailing characters");
      labels.push_back(v);
    } catch (const std::exception&) {
      throw IoError("'" + path + "': bad label at line " + std::to_string(lineno));
    }
  }
  return labels;
}

/// Training inputs: unit-normalized samples as columns plus optional labels.
struct Dataset {
  Matrix x;
  std::optional<LabelSet> labels;
  std::vector<std::string> names;

  Eigen::Index dim() const { return x.rows(); }
  Eigen::Index samples() const { return x.cols(); }
};

/// Loads a dataset and unit-normalizes every sample. Labels come from
/// `labels_path` when given, otherwise from a sibling "<path>.labels" file if
/// one exists.
inline Dataset load_dataset(const std::string& path, DataFormat format,
                            const std::string& labels_path = "") {
  Dataset ds;
  ds.x = format == DataFormat::csv ? load_matrix_csv(path) : load_matrix_raw(path);
  for (Eigen::Index j = 0; j < ds.x.cols(); ++j) {
    const double n = ds.x.col(j).norm();
    if (n < 1e-12 || !std::isfinite(n)) {
      throw ValidationError("sample " + std::to_string(j) + " has zero or non-finite norm");
    }
    ds.x.col(j) /= n;
  }
  std::string lp = labels_path;
  if (lp.empty()) {
    const std::string sibling = path + ".labels";
    if (std::ifstream probe(sibling); probe.good()) lp = sibling;
  }
  if (!lp.empty()) {
    std::vector<int> raw = load_labels_file(lp);
    if (static_cast<Eigen::Index>(raw.size()) != ds.x.cols()) {
      throw ValidationError("label file has " + std::to_string(raw.size()) +
                            " entries for " + std::to_string(ds.x.cols()) + " samples");
    }
    ds.labels = LabelSet::fromLabels(std::move(raw));
  }
  return ds;
}

} // namespace sparlow
