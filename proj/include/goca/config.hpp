#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "goca/ssl_engine.hpp"
#include "goca/synth_data.hpp"

namespace goca {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Everything a run needs: data generator, trainer (with its solver and
// prototype optimizer settings) and the evaluation protocol.
struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  int seeds = 5;              // independent data/training seeds per experiment
  int kmeans_restarts = 10;
  int eval_repetitions = 10;  // k-means repetitions averaged per evaluation

  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

// Documented keys in dump order.
const std::vector<ConfigKey>& config_keys();

// "key = value" lines; '#' starts a comment. Unknown or repeated keys and
// invalid values throw ConfigError. Missing keys keep their defaults.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

// Canonical form: every key, in config_keys() order, one "key = value" per line.
std::string dump_config(const RunConfig& cfg);

// Applies one key = value assignment (used for CLI overrides too).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace goca
