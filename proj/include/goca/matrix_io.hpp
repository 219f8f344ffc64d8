#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "goca/matrix.hpp"

namespace goca {

// Text matrix format: a header line "M N" followed by M lines of N
// whitespace-separated decimals, written at 17 significant digits.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);

void save_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& path);

// One integer per line.
void save_labels(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> load_labels(const std::filesystem::path& path);

}  // namespace goca
