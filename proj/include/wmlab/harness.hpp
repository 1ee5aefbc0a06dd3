#pragma once

// Experiment orchestration over a toy world: a synthetic language supplies
// "human" corpora, a Markov LM trained on one of them plays the provider, and
// simulated spoofers learn from provider output. Every experiment derives its
// randomness from (master seed, experiment name, unit index) so reruns are
// byte-identical and units are order-independent.

#include "wmlab/altschemes.hpp"
#include "wmlab/spoofer.hpp"
#include "wmlab/spooftest.hpp"
#include "wmlab/statkit.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace wmlab {

inline constexpr const char *kVersionString = "wmlab 0.1.0";

enum class ScoreKind { Ngram, Unigram };
const char *to_string(ScoreKind k);
ScoreKind parse_score_kind(std::string_view s);

enum class RunMode { Trials, Budget };
const char *to_string(RunMode m);
RunMode parse_run_mode(std::string_view s);

struct ExperimentConfig {
  // Synthetic language and corpora (A: provider training, B: defender
  // reference D̃ and prompt source, C: spoofer base corpus).
  std::size_t vocab_size = 512;
  double zipf_exponent = 1.0;
  std::size_t max_branching = 64;
  double unigram_mix = 0.02;
  std::uint64_t language_seed = 7;
  std::size_t corpus_docs = 2000;
  std::size_t corpus_doc_len = 250;
  /// Optional user corpus replacing corpus A.
  std::string corpus_path;

  // Provider LM.
  std::size_t lm_order = 2;
  double lm_alpha = 0.01;
  double tau = 1.0;
  std::uint32_t lm_min_count = 2;

  // Watermark.
  Scheme scheme = Scheme::RedGreen;
  std::size_t h = 1;
  double gamma = 0.25;
  double delta = 2.0;
  double rho = 4.0;
  HashVariant variant = HashVariant::SumHash;
  DedupMode dedup = DedupMode::HGram;
  std::uint64_t key = 15485863;
  /// Null experiments without a spoofer draw a fresh key per unit.
  bool per_trial_key = true;
  std::size_t aar_h = 3;
  std::size_t kth_n_key = 256;
  std::size_t kth_shifts = 256;
  KthAlignment kth_alignment = KthAlignment::ShiftOnly;
  std::size_t kth_pseudo_h = 5;

  // Spoofer.
  SpooferKind spoofer = SpooferKind::Stealing;
  std::vector<SpooferKind> spoofers{SpooferKind::Stealing, SpooferKind::Distill};
  KnowledgeMode knowledge = KnowledgeMode::RatioScore;
  double spoof_beta = 4.0;
  double spoof_epsilon = 3.0;
  std::size_t dataset_docs = 120;
  std::size_t dataset_doc_len = 250;
  std::size_t distill_order = 0;
  double distill_alpha = 0.01;
  std::uint32_t distill_min_count = 1;

  // Test.
  TestMethod method = TestMethod::Reprompting;
  ScoreKind score = ScoreKind::Ngram;
  Sidedness sidedness = Sidedness::TwoSided;
  std::size_t c = 25;
  std::size_t prompt_len = 5;
  /// Tested tokens per document; T must be a multiple.
  std::size_t doc_len = 250;
  std::vector<std::size_t> t_grid{500, 1000, 2000, 3000};
  std::vector<double> alpha_grid{0.01, 0.05, 0.1};
  std::vector<std::size_t> h_grid{1, 2, 3};
  /// Human-token fractions; 0 is plain watermarked text.
  std::vector<double> mix_grid{0.0};
  std::vector<double> noise_grid{0.0, 1.0, 2.0, 5.0, 10.0, 20.0};
  std::vector<std::size_t> dataset_grid{120, 1080};
  RunMode run_mode = RunMode::Trials;
  std::size_t trials = 1000;
  std::size_t token_budget = 1000000;
  /// Tested tokens per text in the shuffle check.
  std::size_t shuffle_len = 150;
  bool shuffle_identity = false;
  /// Tested tokens and α for the ablations.
  std::size_t ablation_T = 1000;
  double ablation_alpha = 0.05;
  /// Texts for the KTH shift-recovery check.
  std::size_t kth_recovery_len = 200;

  std::uint64_t seed = 1;
  std::string out_dir;

  void validate() const;
  /// Applies one key=value pair; unknown keys are an InvalidArgument error.
  void set(const std::string &key, const std::string &value);
  /// Flat key=value text; '#' starts a comment.
  static ExperimentConfig parse(std::istream &in);
  static ExperimentConfig load(const std::filesystem::path &path);
  /// Canonical key=value echo, one per line, sorted by key.
  std::string echo() const;
  /// Units for a tested length under the run mode.
  std::size_t trials_for(std::size_t T) const;

  RedGreenParams redgreen() const;
  AarParams aar() const;
  KthParams kth() const;
};

struct CurvePoint {
  double x = 0.0; ///< α, T, ρ or TV distance depending on the curve
  double rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n = 0;
};

CurvePoint rate_point(double x, std::size_t hits, std::size_t n);

// ---------------------------------------------------------------------------
// World

struct World {
  ExperimentConfig cfg;
  std::shared_ptr<const SyntheticLanguage> language;
  Corpus provider_corpus;
  Corpus reference_corpus;
  Corpus spoofer_corpus;
  MarkovLM provider_lm;
  MarkovLM aux_lm;
};

/// Deterministic in cfg.language_seed and the corpus/LM fields only.
World build_world(const ExperimentConfig &cfg);

/// A spoofer's learned state against the provider's fixed key.
struct SpoofKit {
  SpooferConfig config;
  SpoofDataset dataset;
  KnowledgeTable knowledge;
};

SpoofKit build_spoof_kit(const World &world, const ExperimentConfig &cfg, SpooferKind kind, std::size_t dataset_docs);

/// Document prompts: the first `prompt_len` tokens of reference documents.
TokenSeq prompt_for(const World &world, std::size_t index, std::size_t prompt_len);

/// Deterministic per-unit stream.
RngStream unit_rng(std::uint64_t master, std::string_view experiment, std::uint64_t unit);

// ---------------------------------------------------------------------------
// Experiment results

struct NormalityRow {
  TestMethod method = TestMethod::Standard;
  ScoreKind score = ScoreKind::Ngram;
  std::size_t h = 1;
  std::vector<double> z;
  double mean = 0.0;
  double sd = 0.0;
  stat::GofReport ks;
  stat::GofReport dagostino;
};

struct NormalityResult {
  std::vector<NormalityRow> rows;
};

struct FprCurve {
  std::size_t h = 1;
  std::size_t T = 0;
  double mix = 0.0;
  std::size_t filtered_out = 0;
  std::vector<CurvePoint> points;
};

struct FprResult {
  std::vector<FprCurve> curves;
};

struct PowerRow {
  SpooferKind spoofer = SpooferKind::Stealing;
  std::size_t T = 0;
  std::vector<CurvePoint> points; ///< TPR per α
  std::vector<double> z;
  double mean_z = 0.0;
  double success_rate = 0.0; ///< detector pass rate of spoofed documents
};

struct PowerResult {
  std::vector<PowerRow> rows;
  std::map<SpooferKind, stat::LinearFit> fits; ///< mean z against √T
};

struct ShuffleRow {
  std::string corpus; ///< "watermarked" or "spoofed"
  std::vector<double> z;
  std::vector<double> z_shuffled;
  stat::GofReport test;
};

struct ShuffleResult {
  std::vector<ShuffleRow> rows;
};

struct AblationPoint {
  std::string label;
  double x = 0.0; ///< TV distance or |D| in documents
  double median_p = 1.0;
  CurvePoint tpr;
  double success_rate = 0.0;
};

struct AblationResult {
  std::vector<AblationPoint> points;
};

struct DependenceRow {
  std::size_t h = 1;
  std::vector<double> z;
  double mean = 0.0;
  stat::GofReport t_test;
  stat::GofReport dagostino;
  double mean_kept = 0.0;
};

struct DependenceResult {
  std::vector<DependenceRow> rows;
};

struct NullTailResult {
  std::size_t trials = 0;
  std::size_t hits = 0;
  double threshold = 4.0;
  double expected_rate = 0.0; ///< Gaussian tail at the threshold
  double poisson_p = 1.0;     ///< two-sided Poisson consistency of the hit count
  double mean_kept = 0.0;
};

struct AltSchemeResult {
  stat::GofReport aar_null;
  stat::GofReport kth_null;
  double kth_shift_recovery = 0.0;
  std::size_t kth_shift_trials = 0;
  std::size_t T = 0;
  std::vector<CurvePoint> aar_fpr;
  std::vector<CurvePoint> aar_tpr;
  std::vector<CurvePoint> redgreen_tpr;
  double aar_success_mean_x = 0.0;
};

NormalityResult run_normality(const ExperimentConfig &cfg, const World &world);
FprResult run_fpr_curve(const ExperimentConfig &cfg, const World &world);
PowerResult run_power(const ExperimentConfig &cfg, const World &world);
ShuffleResult run_shuffle_check(const ExperimentConfig &cfg, const World &world);
AblationResult run_dtilde_ablation(const ExperimentConfig &cfg, const World &world);
AblationResult run_dataset_size_ablation(const ExperimentConfig &cfg, const World &world);
DependenceResult run_dependence(const ExperimentConfig &cfg, const World &world);
NullTailResult run_null_tail(const ExperimentConfig &cfg);
AltSchemeResult run_alt_schemes(const ExperimentConfig &cfg, const World &world);

/// Names accepted by run_experiment.
const std::vector<std::string> &experiment_names();

/// Builds the world, runs `name` and writes CSV, SVG and manifest files to
/// cfg.out_dir. Returns the paths written.
std::vector<std::filesystem::path> run_experiment(const std::string &name, const ExperimentConfig &cfg);

// ---------------------------------------------------------------------------
// Output helpers

std::string format_double(double v);
void write_text(const std::filesystem::path &path, const std::string &content);
std::string histogram_svg(const std::string &title, const std::vector<double> &values, std::size_t bins = 40);
struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
std::string line_svg(const std::string &title, const std::string &x_label, const std::string &y_label,
                     const std::vector<Series> &series);

} // namespace wmlab
