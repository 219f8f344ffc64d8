#include "goca/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>

namespace goca {

namespace {

std::string format(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format(bool v) { return v ? "true" : "false"; }

template <typename Int>
std::string format_int(Int v) {
  return std::to_string(v);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config: " + key + " expects a number, got '" + text + "'");
  }
  return v;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& text) {
  Int v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config: " + key + " expects an integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + text + "'");
}

struct Field {
  ConfigKey key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define GOCA_DOUBLE(name, member, help)                                                 \
  Field {                                                                               \
    {name, help}, [](const RunConfig& c) { return format(c.member); },                  \
        [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); }    \
  }
#define GOCA_INT(name, member, help)                                                             \
  Field {                                                                                        \
    {name, help}, [](const RunConfig& c) { return format_int(c.member); },                       \
        [](RunConfig& c, const std::string& v) { c.member = parse_int<decltype(c.member)>(name, v); } \
  }
#define GOCA_BOOL(name, member, help)                                               \
  Field {                                                                           \
    {name, help}, [](const RunConfig& c) { return format(c.member); },              \
        [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      GOCA_INT("synth.num_classes", synth.num_classes, "number of classes K (>= 2)"),
      GOCA_INT("synth.samples_per_class", synth.samples_per_class, "samples generated per class"),
      GOCA_INT("synth.signal_dim", synth.signal_dim, "dimension of the class signal in each view"),
      GOCA_INT("synth.distractor_dim", synth.distractor_dim, "extra view-A dimensions carrying the distractor"),
      GOCA_INT("synth.distractor_modes", synth.distractor_modes, "number of class-independent distractor directions"),
      GOCA_DOUBLE("synth.distractor_strength", synth.distractor_strength, "distractor magnitude in view A"),
      GOCA_DOUBLE("synth.view_a_noise", synth.view_a_noise, "noise std of the class signal in view A"),
      GOCA_DOUBLE("synth.view_b_noise", synth.view_b_noise, "noise std of the class signal in view B"),
      GOCA_INT("synth.seed", synth.seed, "base data seed"),
      Field{{"train.mode", "sview, avg, sep or goca"},
            [](const RunConfig& c) { return std::string(mode_name(c.train.mode)); },
            [](RunConfig& c, const std::string& v) {
              try {
                c.train.mode = parse_mode(v);
              } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string("config: train.mode: ") + e.what());
              }
            }},
      GOCA_INT("train.epochs", train.epochs, "passes over the dataset"),
      GOCA_INT("train.batch_size", train.batch_size, "minibatch size M (>= 2)"),
      GOCA_DOUBLE("train.temperature", train.temperature, "softmax temperature of the prototype scores"),
      GOCA_DOUBLE("train.learning_rate", train.learning_rate, "SGD step size"),
      GOCA_INT("train.hidden_dim", train.hidden_dim, "backbone hidden width"),
      GOCA_INT("train.feature_dim", train.feature_dim, "feature / prototype dimension"),
      GOCA_INT("train.num_prototypes", train.num_prototypes, "number of prototypes N"),
      GOCA_DOUBLE("train.aug_noise", train.aug_noise, "augmentation noise std"),
      GOCA_DOUBLE("train.aug_dropout", train.aug_dropout, "augmentation coordinate dropout rate"),
      GOCA_INT("train.seed", train.seed, "base training seed"),
      GOCA_DOUBLE("solver.lambda1", train.solver.lambda1, "entropic regularization weight"),
      GOCA_DOUBLE("solver.lambda2", train.solver.lambda2, "prior (KL) weight; 0 disables guidance"),
      GOCA_INT("solver.max_iters", train.solver.max_iters, "Sinkhorn iteration cap"),
      GOCA_DOUBLE("solver.tolerance", train.solver.tolerance, "L-infinity marginal residual target"),
      GOCA_DOUBLE("solver.prior_floor", train.solver.prior_floor, "floor applied to prior entries before log"),
      GOCA_BOOL("solver.log_domain", train.solver.log_domain, "log-domain iterations"),
      GOCA_BOOL("solver.newton", train.solver.newton, "finish stalled scaling runs with Newton steps on the dual"),
      GOCA_INT("proto.steps", train.proto.steps, "prototype descent steps per restart"),
      GOCA_DOUBLE("proto.learning_rate", train.proto.learning_rate, "initial prototype step size"),
      GOCA_DOUBLE("proto.final_learning_rate", train.proto.final_learning_rate, "step size at the end of cosine decay"),
      GOCA_INT("proto.restarts", train.proto.restarts, "independent prototype initializations"),
      GOCA_INT("proto.seed", train.proto.seed, "prototype seed (mixed with train.seed)"),
      GOCA_BOOL("proto.smooth", train.proto.smooth, "use the log-sum-exp relaxation of the row max"),
      GOCA_DOUBLE("proto.sharpness", train.proto.sharpness, "log-sum-exp sharpness"),
      GOCA_INT("eval.seeds", seeds, "seeds per experiment (ablate, lambda-grid)"),
      GOCA_INT("eval.kmeans_restarts", kmeans_restarts, "k-means restarts per clustering"),
      GOCA_INT("eval.repetitions", eval_repetitions, "k-means repetitions averaged per evaluation"),
  };
  return table;
}

#undef GOCA_DOUBLE
#undef GOCA_INT
#undef GOCA_BOOL

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  try {
    synth.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (seeds < 1) throw ConfigError("config: eval.seeds must be >= 1");
  if (kmeans_restarts < 1) throw ConfigError("config: eval.kmeans_restarts must be >= 1");
  if (eval_repetitions < 1) throw ConfigError("config: eval.repetitions must be >= 1");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key.name == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config: key '" + key + "' given twice");
    set_config_value(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  return parse_config(in);
}

std::string dump_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key.name + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace goca
