#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "goca/config.hpp"

namespace goca::checks {

struct CheckInfo {
  int id = 0;
  std::string name;
  std::string summary;
  bool heavy = false;  // trains models; minutes rather than seconds
};

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

// The verification battery, in run order.
const std::vector<CheckInfo>& catalog();

// Runs the listed checks in catalog order. `cfg` is the benchmark used by the
// heavy checks; light checks are self-contained. `on_done` is called as each
// check finishes.
std::vector<CheckResult> run(std::span<const int> ids, const RunConfig& cfg, int jobs,
                             const std::function<void(const CheckResult&)>& on_done = {});

// "[PASS]  3 kernel-reduction  <detail> (0.1 s)"
std::string format(const CheckResult& r);

}  // namespace goca::checks
