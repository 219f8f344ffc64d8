#include "goca/matrix_io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace goca {

void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      if (j > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

Matrix read_matrix(std::istream& in) {
  long rows = 0;
  long cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) {
    throw std::runtime_error("matrix: bad header, expected 'M N'");
  }
  Matrix m(rows, cols);
  std::string token;
  for (long i = 0; i < rows; ++i) {
    for (long j = 0; j < cols; ++j) {
      if (!(in >> token)) {
        throw std::runtime_error("matrix: truncated at row " + std::to_string(i));
      }
      char* end = nullptr;
      m(i, j) = std::strtod(token.c_str(), &end);
      if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error("matrix: not a number: '" + token + "'");
      }
    }
  }
  if (in >> token) {
    throw std::runtime_error("matrix: trailing data after " + std::to_string(rows) + " rows");
  }
  return m;
}

void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_matrix(out, m);
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_matrix(in);
}

void save_labels(const std::filesystem::path& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (int v : labels) out << v << '\n';
}

std::vector<int> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    int v = std::stoi(line, &pos);
    if (line.find_first_not_of(" \t\r", pos) != std::string::npos) {
      throw std::runtime_error("labels: bad line '" + line + "'");
    }
    labels.push_back(v);
  }
  return labels;
}

}  // namespace goca
