#include <doctest.h>

#include <random>
#include <sstream>

#include "goca/config.hpp"
#include "goca/matrix_io.hpp"
#include "test_util.hpp"

using namespace goca;

TEST_CASE("config round trip") {
  const RunConfig defaults;
  std::istringstream empty("");
  CHECK(dump_config(parse_config(empty)) == dump_config(defaults));

  RunConfig cfg;
  cfg.train.solver.lambda1 = 0.0123456789012345;
  cfg.train.mode = Mode::Sep;
  cfg.synth.seed = 77;
  cfg.seeds = 3;
  std::istringstream in(dump_config(cfg));
  const RunConfig back = parse_config(in);
  CHECK(dump_config(back) == dump_config(cfg));
  CHECK(back.train.solver.lambda1 == cfg.train.solver.lambda1);
  CHECK(back.train.mode == Mode::Sep);

  // Every documented key appears exactly once in the dump.
  const std::string text = dump_config(defaults);
  for (const auto& key : config_keys()) {
    CAPTURE(key.name);
    const auto at = text.find(key.name + " = ");
    CHECK(at != std::string::npos);
    CHECK(text.find("\n" + key.name + " = ", at + 1) == std::string::npos);
  }
}

TEST_CASE("config parsing") {
  std::istringstream ok("# comment\n\n solver.lambda2 = 0.5   # trailing\neval.seeds=2\n");
  const RunConfig cfg = parse_config(ok);
  CHECK(cfg.train.solver.lambda2 == 0.5);
  CHECK(cfg.seeds == 2);

  for (const char* bad : {"nope = 1\n", "eval.seeds = 2\neval.seeds = 3\n", "eval.seeds = two\n", "eval.seeds\n", "solver.lambda1 = -1\n",
                          "solver.log_domain = maybe\n", "train.mode = bogus\n", "eval.seeds = 2.5\n"}) {
    CAPTURE(bad);
    std::istringstream in(bad);
    CHECK_THROWS_AS(parse_config(in), ConfigError);
  }
  RunConfig c;
  set_config_value(c, "solver.lambda1", "0.04");
  CHECK(c.train.solver.lambda1 == 0.04);
  CHECK_THROWS_AS(set_config_value(c, "missing.key", "1"), ConfigError);
  CHECK_THROWS(load_config("/nonexistent/config.txt"));
}

TEST_CASE("matrix io") {
  std::mt19937_64 rng(81);
  const Matrix m = goca::test::random_matrix(4, 3, -1e3, 1e3, rng) / 7.0;
  std::stringstream s;
  write_matrix(s, m);
  CHECK(read_matrix(s) == m);

  for (const char* bad : {"2 2\n1 2\n3\n", "x y\n", "1 2\n1 abc\n", ""}) {
    CAPTURE(bad);
    std::istringstream in(bad);
    CHECK_THROWS(read_matrix(in));
  }

  const auto dir = std::filesystem::temp_directory_path() / "goca_io_test";
  std::filesystem::create_directories(dir);
  save_matrix(dir / "m.mat", m);
  CHECK(load_matrix(dir / "m.mat") == m);
  const std::vector<int> labels{3, 0, 2, 2};
  save_labels(dir / "l.txt", labels);
  CHECK(load_labels(dir / "l.txt") == labels);
  CHECK_THROWS(load_matrix(dir / "missing.mat"));
  std::filesystem::remove_all(dir);
}
