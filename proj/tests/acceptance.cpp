// Acceptance suite: one PASS/FAIL line per criterion on the shipped benchmark.

#include <iostream>
#include <vector>

#include "goca/checks.hpp"

int main() {
  const goca::RunConfig cfg;  // shipped defaults are the locked benchmark
  std::vector<int> ids;
  for (const auto& info : goca::checks::catalog()) ids.push_back(info.id);
  const auto results = goca::checks::run(ids, cfg, 1, [](const goca::checks::CheckResult& r) {
    std::cout << goca::checks::format(r) << std::endl;
  });
  int failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << results.size() - static_cast<std::size_t>(failed) << "/" << results.size()
            << " acceptance criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
