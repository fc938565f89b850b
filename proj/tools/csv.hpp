#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mfg/types.hpp"

namespace mfg::cli {

/// 17 significant digits, enough to recover every double exactly.
std::string format_number(double x);

/// Rows are buffered and the file is written in one go by save().
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header);

  CsvWriter& cell(double x);
  CsvWriter& cell(long long x);
  CsvWriter& cell(int x) { return cell(static_cast<long long>(x)); }
  CsvWriter& cell(const std::string& s);
  void end_row();

  /// Throws Io naming the path on failure.
  void save(const std::string& path) const;

 private:
  std::ostringstream body_;
  std::size_t columns_;
  std::size_t filled_ = 0;
};

/// One row per grid node: node, t, then every column's value at that node.
/// Columns refer to the paths passed to add(), which must outlive the table.
class WideTable {
 public:
  explicit WideTable(const TimeGrid& grid) : grid_(grid) {}

  void add(const std::string& name, std::function<double(int)> value);
  /// Entries name_i_j in row-major order.
  void add(const std::string& name, const MatrixPath& path);
  /// Entries name_i.
  void add(const std::string& name, const VectorPath& path);
  void add(const std::string& name, const ScalarPath& path);

  void save(const std::string& path) const;

 private:
  TimeGrid grid_;
  std::vector<std::string> names_;
  std::vector<std::function<double(int)>> values_;
};

}  // namespace mfg::cli
