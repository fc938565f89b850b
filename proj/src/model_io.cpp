#include "mfg/model_io.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mfg {

namespace {

std::string where(const std::string& source, const std::string& key) { return source + ": key '" + key + "'"; }

double scalar(const YAML::Node& node, const std::string& ctx) {
  if (!node.IsScalar()) throw Error(ErrorKind::Parse, ctx + " expects a number");
  try {
    return node.as<double>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::Parse, ctx + ": '" + node.Scalar() + "' is not a number");
  }
}

int integer(const YAML::Node& node, const std::string& ctx) {
  if (!node.IsScalar()) throw Error(ErrorKind::Parse, ctx + " expects an integer");
  try {
    return node.as<int>();
  } catch (const YAML::Exception&) {
    throw Error(ErrorKind::Parse, ctx + ": '" + node.Scalar() + "' is not an integer");
  }
}

Vector vector(const YAML::Node& node, const std::string& ctx) {
  if (node.IsScalar()) return Vector::Constant(1, scalar(node, ctx));
  if (!node.IsSequence()) throw Error(ErrorKind::Parse, ctx + " expects a list of numbers");
  Vector v(static_cast<Eigen::Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) v(static_cast<Eigen::Index>(i)) = scalar(node[i], ctx);
  return v;
}

// A plain number is accepted for a 1 x 1 matrix.
Matrix matrix(const YAML::Node& node, const std::string& ctx) {
  if (node.IsScalar()) return Matrix::Constant(1, 1, scalar(node, ctx));
  if (!node.IsSequence() || node.size() == 0) throw Error(ErrorKind::Parse, ctx + " expects a list of rows");
  const std::size_t rows = node.size();
  const std::size_t cols = node[0].IsSequence() ? node[0].size() : 0;
  if (cols == 0) throw Error(ErrorKind::Parse, ctx + " expects rows written as [a, b, ...]");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!node[r].IsSequence() || node[r].size() != cols)
      throw Error(ErrorKind::Parse, ctx + ": row " + std::to_string(r) + " does not have " + std::to_string(cols) +
                                        " entries");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = scalar(node[r][c], ctx);
  }
  return m;
}

// `A` lists one matrix per type; a single matrix is accepted when K = 1.
std::vector<Matrix> type_matrices(const YAML::Node& node, const std::string& ctx) {
  if (node.IsScalar()) return {matrix(node, ctx)};
  if (node.IsSequence() && node.size() > 0 && node[0].IsSequence() && node[0].size() > 0 && !node[0][0].IsSequence())
    return {matrix(node, ctx)};
  if (!node.IsSequence()) throw Error(ErrorKind::Parse, ctx + " expects a list of matrices");
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < node.size(); ++k) out.push_back(matrix(node[k], ctx + "[" + std::to_string(k) + "]"));
  return out;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string fmt_vector(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v(i));
  return s + "]";
}

std::string fmt_matrix(const Matrix& m) {
  std::string s = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) s += (r ? ", " : "") + fmt_vector(m.row(r).transpose());
  return s + "]";
}

struct Fields {
  std::vector<std::pair<std::string, Matrix ModelParams::*>> matrices = {
      {"A0", &ModelParams::A0},         {"B0", &ModelParams::B0},       {"F0", &ModelParams::F0},
      {"D0", &ModelParams::D0},         {"B", &ModelParams::B},         {"F", &ModelParams::F},
      {"G", &ModelParams::G},           {"D", &ModelParams::D},         {"Q0", &ModelParams::Q0},
      {"Q0f", &ModelParams::Q0f},       {"Q", &ModelParams::Q},         {"Qf", &ModelParams::Qf},
      {"Gamma0", &ModelParams::Gamma0}, {"Gamma0f", &ModelParams::Gamma0f}, {"Gamma1", &ModelParams::Gamma1},
      {"Gamma1f", &ModelParams::Gamma1f}, {"Gamma2", &ModelParams::Gamma2}, {"Gamma2f", &ModelParams::Gamma2f},
      {"R0", &ModelParams::R0},         {"R", &ModelParams::R},         {"cov0", &ModelParams::cov0},
      {"cov", &ModelParams::cov}};
  std::vector<std::pair<std::string, Vector ModelParams::*>> vectors = {
      {"eta0", &ModelParams::eta0}, {"eta0f", &ModelParams::eta0f},   {"eta", &ModelParams::eta},
      {"etaf", &ModelParams::etaf}, {"pi", &ModelParams::pi},         {"alpha0", &ModelParams::alpha0},
      {"x0_mean", &ModelParams::x0_mean}};
};

const Fields& fields() {
  static const Fields f;
  return f;
}

}  // namespace

ModelParams parse_model(const std::string& text, const std::string& source) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::Parse, source + ": " + e.what());
  }
  if (!doc.IsMap()) throw Error(ErrorKind::Parse, source + ": expected 'key: value' entries");

  for (const char* key : {"n", "n1", "n2", "K"})
    if (!doc[key]) throw Error(ErrorKind::Parse, where(source, key) + " is required");
  const int n = integer(doc["n"], where(source, "n"));
  const int n1 = integer(doc["n1"], where(source, "n1"));
  const int n2 = integer(doc["n2"], where(source, "n2"));
  const int K = integer(doc["K"], where(source, "K"));
  if (n < 1 || n1 < 1 || n2 < 1 || K < 1)
    throw Error(ErrorKind::Parse, source + ": dimensions n, n1, n2, K must be positive integers");
  ModelParams p = ModelParams::zeros(n, n1, n2, K);

  std::map<std::string, std::function<void(const YAML::Node&, const std::string&)>> setters;
  for (const char* key : {"n", "n1", "n2", "K"}) setters[key] = [](const YAML::Node&, const std::string&) {};
  setters["T"] = [&](const YAML::Node& v, const std::string& ctx) { p.T = scalar(v, ctx); };
  setters["rho"] = [&](const YAML::Node& v, const std::string& ctx) { p.rho = scalar(v, ctx); };
  setters["A"] = [&](const YAML::Node& v, const std::string& ctx) { p.A = type_matrices(v, ctx); };
  for (const auto& [key, member] : fields().matrices)
    setters[key] = [&p, member = member](const YAML::Node& v, const std::string& ctx) { p.*member = matrix(v, ctx); };
  for (const auto& [key, member] : fields().vectors)
    setters[key] = [&p, member = member](const YAML::Node& v, const std::string& ctx) { p.*member = vector(v, ctx); };

  for (const auto& entry : doc) {
    const std::string key = entry.first.as<std::string>();
    const auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorKind::Parse, source + ": unknown key '" + key + "'");
    it->second(entry.second, where(source, key));
  }
  return p;
}

ModelParams read_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open model file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str(), path);
}

std::string format_model(const ModelParams& p) {
  std::ostringstream os;
  os << "n: " << p.n << "\nn1: " << p.n1 << "\nn2: " << p.n2 << "\nK: " << p.K << "\n";
  os << "T: " << num(p.T) << "\nrho: " << num(p.rho) << "\n";
  os << "A: [";
  for (std::size_t k = 0; k < p.A.size(); ++k) os << (k ? ", " : "") << fmt_matrix(p.A[k]);
  os << "]\n";
  for (const auto& [key, member] : fields().matrices) os << key << ": " << fmt_matrix(p.*member) << "\n";
  for (const auto& [key, member] : fields().vectors) os << key << ": " << fmt_vector(p.*member) << "\n";
  return os.str();
}

void write_model_file(const std::string& path, const ModelParams& p) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write model file '" + path + "'");
  out << format_model(p);
}

}  // namespace mfg
