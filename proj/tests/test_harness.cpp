#include "doctest.h"

#include "wmlab/harness.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace wmlab;

namespace {

// A world small enough for unit tests: every experiment finishes in seconds.
ExperimentConfig small_config() {
  ExperimentConfig c;
  c.vocab_size = 128;
  c.corpus_docs = 300;
  c.corpus_doc_len = 120;
  c.doc_len = 100;
  c.c = 20;
  c.t_grid = {200, 400};
  c.h_grid = {1};
  c.trials = 40;
  c.dataset_docs = 60;
  c.dataset_doc_len = 120;
  c.delta = 4.0;
  c.shuffle_len = 100;
  c.ablation_T = 200;
  c.dataset_grid = {30, 90};
  c.noise_grid = {0.0, 5.0};
  return c;
}

std::string slurp(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::filesystem::path scratch_dir(const std::string &name) {
  const auto dir = std::filesystem::temp_directory_path() / ("wmlab_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

void check_error(auto &&fn, ErrorCode code) {
  try {
    fn();
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.code() == code);
  }
}

} // namespace

TEST_CASE("config parses key=value text and echoes canonically") {
  std::istringstream in("# comment\n h = 2 \ngamma=0.5\nt_grid=500,1000\n\nscheme=aar # trailing\n");
  const ExperimentConfig c = ExperimentConfig::parse(in);
  CHECK(c.h == 2);
  CHECK(c.gamma == doctest::Approx(0.5));
  CHECK(c.t_grid == std::vector<std::size_t>{500, 1000});
  CHECK(c.scheme == Scheme::Aar);

  std::istringstream again(c.echo());
  CHECK(ExperimentConfig::parse(again).echo() == c.echo());
}

TEST_CASE("config validation rejects malformed settings") {
  ExperimentConfig c;
  c.trials = 0;
  check_error([&] { c.validate(); }, ErrorCode::InvalidArgument);

  c = ExperimentConfig{};
  c.t_grid = {1000, 500};
  check_error([&] { c.validate(); }, ErrorCode::InvalidArgument);

  c = ExperimentConfig{};
  c.t_grid = {300};
  check_error([&] { c.validate(); }, ErrorCode::InvalidArgument);

  check_error([&] { ExperimentConfig{}.set("no_such_key", "1"); }, ErrorCode::InvalidArgument);
  check_error([&] { ExperimentConfig{}.set("trials", "many"); }, ErrorCode::InvalidArgument);
}

TEST_CASE("trials_for follows the run mode") {
  ExperimentConfig c;
  c.trials = 7;
  CHECK(c.trials_for(1000) == 7);
  c.run_mode = RunMode::Budget;
  c.token_budget = 1000000;
  CHECK(c.trials_for(1000) == 1000);
  CHECK(c.trials_for(3000) == 333);
}

TEST_CASE("rate points carry Wilson intervals") {
  const CurvePoint zero = rate_point(0.0, 0, 100);
  CHECK(zero.rate == 0.0);
  CHECK(zero.ci_low == 0.0);
  CHECK(zero.ci_high > 0.0);
  const CurvePoint half = rate_point(0.5, 50, 100);
  CHECK(half.ci_low == doctest::Approx(0.4038).epsilon(1e-3));
  CHECK(half.ci_high == doctest::Approx(0.5962).epsilon(1e-3));
  const CurvePoint all = rate_point(1.0, 100, 100);
  CHECK(all.ci_high == 1.0);
}

TEST_CASE("unit streams depend on master seed, experiment and unit only") {
  auto a = unit_rng(1, "x", 3), b = unit_rng(1, "x", 3), c = unit_rng(1, "y", 3), d = unit_rng(2, "x", 3);
  const auto va = a.next_u64();
  CHECK(va == b.next_u64());
  CHECK(va != c.next_u64());
  CHECK(va != d.next_u64());
}

TEST_CASE("world construction is deterministic") {
  const ExperimentConfig c = small_config();
  const World a = build_world(c), b = build_world(c);
  CHECK(a.provider_corpus.documents == b.provider_corpus.documents);
  CHECK(a.reference_corpus.documents != a.provider_corpus.documents);
  CHECK(prompt_for(a, 3, 5) == prompt_for(b, 3, 5));
  CHECK(prompt_for(a, 3, 5).size() == 5);
}

TEST_CASE("fpr curve: alpha 0 never rejects and every rate has an interval") {
  ExperimentConfig c = small_config();
  c.alpha_grid = {0.0, 0.05, 0.5};
  c.t_grid = {200};
  const World w = build_world(c);
  const FprResult r = run_fpr_curve(c, w);
  REQUIRE(r.curves.size() == 1);
  const auto &pts = r.curves.front().points;
  REQUIRE(pts.size() == 3);
  CHECK(pts[0].rate == 0.0);
  for (const auto &p : pts) {
    CHECK(p.n > 0);
    CHECK(p.ci_low <= p.rate);
    CHECK(p.rate <= p.ci_high);
  }
}

TEST_CASE("shuffle check: the identity permutation leaves samples unchanged") {
  ExperimentConfig c = small_config();
  c.shuffle_identity = true;
  const World w = build_world(c);
  const ShuffleResult r = run_shuffle_check(c, w);
  REQUIRE(r.rows.size() == 2);
  for (const auto &row : r.rows) {
    CHECK(row.z == row.z_shuffled);
    CHECK(row.test.p_value >= 0.9);
  }
}

TEST_CASE("power: an unreachable detector threshold leaves no spoofs") {
  ExperimentConfig c = small_config();
  c.rho = 1e6;
  const World w = build_world(c);
  check_error([&] { run_power(c, w); }, ErrorCode::NoSpoofsPassed);
}

TEST_CASE("dataset-size ablation with a singleton grid yields one point") {
  ExperimentConfig c = small_config();
  c.dataset_grid = {60};
  c.spoofers = {SpooferKind::Stealing};
  const World w = build_world(c);
  const AblationResult r = run_dataset_size_ablation(c, w);
  REQUIRE(r.points.size() == 1);
  CHECK(r.points[0].x == 60.0);
  CHECK(r.points[0].tpr.ci_low <= r.points[0].tpr.rate);
}

TEST_CASE("dtilde ablation: zero noise sits at zero total variation") {
  ExperimentConfig c = small_config();
  c.noise_grid = {0.0};
  const World w = build_world(c);
  const AblationResult r = run_dtilde_ablation(c, w);
  REQUIRE(!r.points.empty());
  CHECK(r.points.front().x == doctest::Approx(0.0));
  for (const auto &p : r.points) {
    CHECK(p.median_p >= 0.0);
    CHECK(p.median_p <= 1.0);
  }
}

TEST_CASE("run_experiment reruns are byte-identical") {
  ExperimentConfig c = small_config();
  c.t_grid = {200};
  c.trials = 20;
  const auto d1 = scratch_dir("rerun_a"), d2 = scratch_dir("rerun_b");
  c.out_dir = d1.string();
  const auto files1 = run_experiment("fpr-curve", c);
  c.out_dir = d2.string();
  const auto files2 = run_experiment("fpr-curve", c);
  REQUIRE(files1.size() == files2.size());
  std::size_t csvs = 0;
  for (std::size_t i = 0; i < files1.size(); ++i) {
    CHECK(files1[i].filename() == files2[i].filename());
    if (files1[i].extension() != ".csv") continue;
    ++csvs;
    CHECK(slurp(files1[i]) == slurp(files2[i]));
  }
  CHECK(csvs >= 2);
  CHECK(slurp(d1 / "fpr_h1_T200_mix0.csv").rfind("alpha,rate,ci_low,ci_high,n\n", 0) == 0);
  const std::string manifest = slurp(d1 / "fpr-curve_manifest.txt");
  CHECK(manifest.find(kVersionString) != std::string::npos);
  CHECK(manifest.find("trials=20") != std::string::npos);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("run_experiment rejects unknown names and invalid configs") {
  check_error([] { run_experiment("nope", ExperimentConfig{}); }, ErrorCode::InvalidArgument);
  ExperimentConfig c;
  c.trials = 0;
  check_error([&] { run_experiment("normality", c); }, ErrorCode::InvalidArgument);
}

TEST_CASE("SVG helpers emit self-contained documents") {
  const std::string h = histogram_svg("z <&>", {0.0, 1.0, -1.0, 0.5});
  CHECK(h.rfind("<svg", 0) == 0);
  CHECK(h.find("&lt;&amp;&gt;") != std::string::npos);
  const std::string l = line_svg("t", "x", "y", {Series{"s", {1, 2, 3}, {0.1, 0.2, 0.4}}});
  CHECK(l.find("</svg>") != std::string::npos);
}
