#pragma once

// Statistical subroutines: rank correlation, goodness-of-fit tests, two-sample
// rank test, binomial intervals and the Monte-Carlo check of the asymptotic
// normality of the Fisher-transformed rank correlation.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace wmlab::stat {

struct GofReport {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::string test;
};

double normal_cdf(double x);
double normal_sf(double x);
double normal_quantile(double p);
double student_t_sf(double t, double dof);

/// Fractional ranks (1-based); ties share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation. Throws ConstantScores if either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Pearson correlation of average ranks, in [-1, 1].
double spearman_rho(std::span<const double> a, std::span<const double> b);

/// Clamp bound applied to rho before arctanh.
inline constexpr double kRhoClamp = 1.0 - 1e-10;

/// Variance factor of the Fisher-transformed Spearman coefficient.
inline constexpr double kSpearmanVarianceFactor = 1.06;

/// arctanh of the clamped Spearman coefficient.
double fisher_spearman(std::span<const double> x, std::span<const double> y);

/// Standard deviation of fisher_spearman under independence, sqrt(1.06/(n-3)).
double fisher_spearman_sd(std::size_t n);

/// Kolmogorov distribution survival function Q(lambda) = P(K > lambda).
double kolmogorov_sf(double lambda);

/// One-sample Kolmogorov-Smirnov test against an arbitrary continuous CDF.
GofReport ks_test(std::span<const double> samples, const std::function<double(double)> &cdf,
                  std::string name = "ks");
GofReport ks_test_std_normal(std::span<const double> samples);
GofReport ks_test_uniform(std::span<const double> samples);
GofReport ks_test_exponential(std::span<const double> samples);

/// D'Agostino-Pearson K^2 omnibus normality test (mean and scale free).
GofReport dagostino_pearson(std::span<const double> samples);

/// Mann-Whitney U with tie-corrected normal approximation, two-sided.
/// `statistic` holds U for the first sample.
GofReport mann_whitney_u(std::span<const double> a, std::span<const double> b);

/// One-sample t-test of mean == mu0, two-sided. `statistic` holds t.
GofReport one_sample_t_test(std::span<const double> samples, double mu0 = 0.0);

/// Wilson score interval.
std::pair<double, double> binomial_ci(std::size_t successes, std::size_t trials, double level = 0.95);

struct Moments {
  double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
  double mean() const { return m1; }
  double variance() const { return m2 - m1 * m1; }
};

double mean(std::span<const double> v);
double stddev(std::span<const double> v);

/// Simple least-squares line y = a + b x with coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

struct ScoreDistribution {
  enum class Kind { Uniform, Constant, Exponential, Normal };
  Kind kind = Kind::Uniform;
  double a = 0.0; ///< Uniform low / Constant value / Exponential rate / Normal mean
  double b = 1.0; ///< Uniform high / Normal sd

  Moments moments() const;
};

/// Independent Bernoulli colors with average success g1 and average squared
/// success g2, scores i.i.d. from `scores`, drawn independently of the colors.
struct LemmaSimConfig {
  std::size_t T = 1000;
  std::size_t trials = 5000;
  double g1 = 0.25;
  double g2 = 0.0625;
  ScoreDistribution scores{};
  std::uint64_t seed = 1;
};

struct LemmaSimResult {
  GofReport ks;
  double mean_z = 0.0;
  double sd_z = 0.0;
  std::vector<double> z;
};

/// Draws `trials` independent (X, Y) samples, computes the rank-corrected Z_S
/// of each and tests the collection against N(0, 1).
LemmaSimResult lemma_monte_carlo(const LemmaSimConfig &cfg);

} // namespace wmlab::stat
