#include "csv.hpp"

#include <cstdio>
#include <fstream>

namespace mfg::cli {

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) body_ << (i ? "," : "") << header[i];
  body_ << '\n';
}

CsvWriter& CsvWriter::cell(double x) { return cell(format_number(x)); }

CsvWriter& CsvWriter::cell(long long x) { return cell(std::to_string(x)); }

CsvWriter& CsvWriter::cell(const std::string& s) {
  if (filled_ == columns_) throw Error(ErrorKind::InvalidArgument, "CSV row has more cells than the header");
  body_ << (filled_ ? "," : "");
  if (s.find_first_of(",\"\n") == std::string::npos) {
    body_ << s;
  } else {
    body_ << '"';
    for (char c : s) body_ << (c == '"' ? "\"\"" : std::string(1, c));
    body_ << '"';
  }
  ++filled_;
  return *this;
}

void CsvWriter::end_row() {
  if (filled_ != columns_)
    throw Error(ErrorKind::InvalidArgument, "CSV row has " + std::to_string(filled_) + " cells, header has " +
                                                std::to_string(columns_));
  body_ << '\n';
  filled_ = 0;
}

void CsvWriter::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << body_.str();
  if (!out) throw Error(ErrorKind::Io, "failed writing '" + path + "'");
}

void WideTable::add(const std::string& name, std::function<double(int)> value) {
  names_.push_back(name);
  values_.push_back(std::move(value));
}

void WideTable::add(const std::string& name, const MatrixPath& path) {
  if (path.size() != grid_.size()) throw Error(ErrorKind::GridMismatch, name + " is not sampled on the table grid");
  const Matrix& m = path.front();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      add(name + "_" + std::to_string(i) + "_" + std::to_string(j), [&path, i, j](int node) { return path[node](i, j); });
}

void WideTable::add(const std::string& name, const VectorPath& path) {
  if (path.size() != grid_.size()) throw Error(ErrorKind::GridMismatch, name + " is not sampled on the table grid");
  for (Eigen::Index i = 0; i < path.front().size(); ++i)
    add(name + "_" + std::to_string(i), [&path, i](int node) { return path[node](i); });
}

void WideTable::add(const std::string& name, const ScalarPath& path) {
  if (path.size() != grid_.size()) throw Error(ErrorKind::GridMismatch, name + " is not sampled on the table grid");
  add(name, [&path](int node) { return path[node]; });
}

void WideTable::save(const std::string& path) const {
  std::vector<std::string> header = {"node", "t"};
  header.insert(header.end(), names_.begin(), names_.end());
  CsvWriter w(header);
  for (int k = 0; k < grid_.size(); ++k) {
    w.cell(k).cell(grid_.node(k));
    for (const auto& v : values_) w.cell(v(k));
    w.end_row();
  }
  w.save(path);
}

}  // namespace mfg::cli
