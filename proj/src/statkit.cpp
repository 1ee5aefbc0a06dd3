#include "wmlab/statkit.hpp"

#include "wmlab/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace wmlab::stat {

namespace {

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

} // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (p <= 0.0 || p >= 1.0) throw Error(ErrorCode::InvalidArgument, "normal_quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double student_t_sf(double t, double dof) {
  boost::math::students_t_distribution<double> dist(dof);
  return boost::math::cdf(boost::math::complement(dist, t));
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "pearson: unequal lengths");
  if (a.size() < 2) throw Error(ErrorCode::InvalidArgument, "pearson: need at least 2 points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0) throw Error(ErrorCode::ConstantColors, "first sequence is constant");
  if (sbb <= 0.0) throw Error(ErrorCode::ConstantScores, "second sequence is constant");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman_rho(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "spearman: unequal lengths");
  if (a.size() < 2) throw Error(ErrorCode::InvalidArgument, "spearman: need at least 2 points");
  if (is_constant(a)) throw Error(ErrorCode::ConstantColors, "first sequence is constant");
  if (is_constant(b)) throw Error(ErrorCode::ConstantScores, "second sequence is constant");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

double fisher_spearman(std::span<const double> x, std::span<const double> y) {
  const double rho = std::clamp(spearman_rho(x, y), -kRhoClamp, kRhoClamp);
  return std::atanh(rho);
}

double fisher_spearman_sd(std::size_t n) {
  if (n <= 3) throw Error(ErrorCode::TooFewKept, "need more than 3 points");
  return std::sqrt(kSpearmanVarianceFactor / static_cast<double>(n - 3));
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    // Small-lambda form of the CDF, converges fast where the alternating series does not.
    const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
    double sum = 0.0;
    for (int k = 1; k <= 64; ++k) {
      const double term = std::pow(y, static_cast<double>((2 * k - 1) * (2 * k - 1)));
      sum += term;
      if (term < 1e-12 * sum) break;
    }
    const double cdf = std::sqrt(2.0 * std::numbers::pi) / lambda * sum;
    return clamp01(1.0 - cdf);
  }
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return clamp01(2.0 * sum);
}

GofReport ks_test(std::span<const double> samples, const std::function<double(double)> &cdf, std::string name) {
  const std::size_t n = samples.size();
  if (n < 10) throw Error(ErrorCode::InvalidArgument, "ks_test needs at least 10 samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double nd = static_cast<double>(n);
  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = cdf(sorted[i]);
    d = std::max({d, static_cast<double>(i + 1) / nd - f, f - static_cast<double>(i) / nd});
  }
  const double sqrt_n = std::sqrt(nd);
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  return GofReport{d, kolmogorov_sf(lambda), n, std::move(name)};
}

GofReport ks_test_std_normal(std::span<const double> samples) {
  return ks_test(samples, normal_cdf, "ks_std_normal");
}

GofReport ks_test_uniform(std::span<const double> samples) {
  return ks_test(samples, [](double x) { return std::clamp(x, 0.0, 1.0); }, "ks_uniform");
}

GofReport ks_test_exponential(std::span<const double> samples) {
  return ks_test(samples, [](double x) { return x <= 0.0 ? 0.0 : -std::expm1(-x); }, "ks_exponential");
}

namespace {

double skew_z(double b2, double n) {
  double y = b2 * std::sqrt(((n + 1) * (n + 3)) / (6.0 * (n - 2)));
  const double beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) / ((n - 2) * (n + 5) * (n + 7) * (n + 9));
  const double w2 = -1.0 + std::sqrt(2.0 * (beta2 - 1.0));
  const double delta = 1.0 / std::sqrt(0.5 * std::log(w2));
  const double alpha = std::sqrt(2.0 / (w2 - 1.0));
  if (y == 0.0) y = 1.0;
  const double ya = y / alpha;
  return delta * std::log(ya + std::sqrt(ya * ya + 1.0));
}

double kurtosis_z(double b2, double n) {
  const double e = 3.0 * (n - 1) / (n + 1);
  const double varb2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1) * (n + 3) * (n + 5));
  const double x = (b2 - e) / std::sqrt(varb2);
  const double sqrtbeta1 =
      6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) * std::sqrt((6.0 * (n + 3) * (n + 5)) / (n * (n - 2) * (n - 3)));
  const double a = 6.0 + 8.0 / sqrtbeta1 * (2.0 / sqrtbeta1 + std::sqrt(1.0 + 4.0 / (sqrtbeta1 * sqrtbeta1)));
  const double term1 = 1.0 - 2.0 / (9.0 * a);
  const double denom = 1.0 + x * std::sqrt(2.0 / (a - 4.0));
  double term2;
  if (denom == 0.0) {
    term2 = 99.0;
  } else {
    term2 = std::copysign(std::cbrt((1.0 - 2.0 / a) / std::abs(denom)), denom);
  }
  return (term1 - term2) / std::sqrt(2.0 / (9.0 * a));
}

} // namespace

GofReport dagostino_pearson(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 20) throw Error(ErrorCode::InvalidArgument, "dagostino_pearson needs at least 20 samples");
  const double nd = static_cast<double>(n);
  const double mu = mean(samples);
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : samples) {
    const double d = v - mu;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= nd;
  m3 /= nd;
  m4 /= nd;
  if (m2 <= 0.0) throw Error(ErrorCode::InvalidArgument, "dagostino_pearson: constant sample");
  const double skew = m3 / std::pow(m2, 1.5);
  const double kurt = m4 / (m2 * m2);
  const double zs = skew_z(skew, nd);
  const double zk = kurtosis_z(kurt, nd);
  const double k2 = zs * zs + zk * zk;
  return GofReport{k2, clamp01(std::exp(-0.5 * k2)), n, "dagostino_pearson"};
}

GofReport mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::InvalidArgument, "mann_whitney_u: empty sample");
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  std::vector<double> pooled;
  pooled.reserve(n1 + n2);
  pooled.insert(pooled.end(), a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = average_ranks(pooled);
  const double r1 = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(n1), 0.0);
  const double dn1 = static_cast<double>(n1);
  const double dn2 = static_cast<double>(n2);
  const double u1 = r1 - dn1 * (dn1 + 1.0) / 2.0;
  const double u2 = dn1 * dn2 - u1;

  std::vector<double> sorted = pooled;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double n = dn1 + dn2;
  const double mu = dn1 * dn2 / 2.0;
  const double var = dn1 * dn2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  double p = 1.0;
  if (var > 0.0) {
    const double u = std::max(u1, u2);
    const double z = (u - mu - 0.5) / std::sqrt(var);
    p = clamp01(2.0 * normal_sf(z));
  }
  return GofReport{u1, p, n1 + n2, "mann_whitney_u"};
}

GofReport one_sample_t_test(std::span<const double> samples, double mu0) {
  const std::size_t n = samples.size();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "t-test needs at least 2 samples");
  const double sd = stddev(samples);
  if (sd <= 0.0) throw Error(ErrorCode::InvalidArgument, "t-test: constant sample");
  const double t = (mean(samples) - mu0) / (sd / std::sqrt(static_cast<double>(n)));
  const double p = clamp01(2.0 * student_t_sf(std::abs(t), static_cast<double>(n - 1)));
  return GofReport{t, p, n, "one_sample_t"};
}

std::pair<double, double> binomial_ci(std::size_t successes, std::size_t trials, double level) {
  if (trials == 0) throw Error(ErrorCode::InvalidArgument, "binomial_ci: zero trials");
  if (successes > trials) throw Error(ErrorCode::InvalidArgument, "binomial_ci: successes > trials");
  if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::InvalidArgument, "binomial_ci: level in (0,1)");
  const double z = normal_quantile(0.5 + level / 2.0);
  const double n = static_cast<double>(trials);
  const double phat = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double centre = (phat + z2 / (2.0 * n)) / (1.0 + z2 / n);
  const double half = z / (1.0 + z2 / n) * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n));
  double low = std::max(0.0, centre - half);
  double high = std::min(1.0, centre + half);
  if (successes == 0) low = 0.0;
  if (successes == trials) high = 1.0;
  return {low, high};
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::InvalidArgument, "linear_fit: need >= 2 paired points");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0) throw Error(ErrorCode::InvalidArgument, "linear_fit: constant abscissa");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

Moments ScoreDistribution::moments() const {
  Moments m;
  switch (kind) {
  case Kind::Uniform: {
    // E[Y^k] = (b^{k+1} - a^{k+1}) / ((k+1)(b-a))
    const auto raw = [&](int k) {
      return (std::pow(b, k + 1) - std::pow(a, k + 1)) / ((k + 1) * (b - a));
    };
    m = {raw(1), raw(2), raw(3), raw(4)};
    break;
  }
  case Kind::Constant:
    m = {a, a * a, a * a * a, a * a * a * a};
    break;
  case Kind::Exponential: {
    const double r = a;
    m = {1.0 / r, 2.0 / (r * r), 6.0 / (r * r * r), 24.0 / (r * r * r * r)};
    break;
  }
  case Kind::Normal: {
    const double mu = a, s2 = b * b;
    m = {mu, mu * mu + s2, mu * mu * mu + 3 * mu * s2, mu * mu * mu * mu + 6 * mu * mu * s2 + 3 * s2 * s2};
    break;
  }
  }
  return m;
}

namespace {

double draw_score(const ScoreDistribution &d, RngStream &rng) {
  switch (d.kind) {
  case ScoreDistribution::Kind::Uniform: return d.a + (d.b - d.a) * rng.uniform();
  case ScoreDistribution::Kind::Constant: return d.a;
  case ScoreDistribution::Kind::Exponential: return rng.exponential() / d.a;
  case ScoreDistribution::Kind::Normal: return d.a + d.b * rng.normal();
  }
  return 0.0;
}

} // namespace

LemmaSimResult lemma_monte_carlo(const LemmaSimConfig &cfg) {
  if (cfg.trials < 100) throw Error(ErrorCode::InvalidMoments, "trials must be >= 100");
  if (cfg.T < 4) throw Error(ErrorCode::InvalidMoments, "T must be >= 4");
  if (!(cfg.g1 >= 0.0 && cfg.g1 <= 1.0)) throw Error(ErrorCode::InvalidMoments, "g1 outside [0,1]");
  if (cfg.g2 > cfg.g1 + 1e-15) throw Error(ErrorCode::InvalidMoments, "g2 must not exceed g1");
  if (cfg.g2 < cfg.g1 * cfg.g1 - 1e-15) throw Error(ErrorCode::InvalidMoments, "g2 below g1^2");
  const auto &sd = cfg.scores;
  if (sd.kind == ScoreDistribution::Kind::Uniform && !(sd.b > sd.a))
    throw Error(ErrorCode::InvalidMoments, "uniform score needs b > a");
  if (sd.kind == ScoreDistribution::Kind::Exponential && !(sd.a > 0.0))
    throw Error(ErrorCode::InvalidMoments, "exponential rate must be positive");

  // Two-point success probabilities g1 +- d average to g1 and their squares to g2.
  const double spread = std::sqrt(std::max(0.0, cfg.g2 - cfg.g1 * cfg.g1));
  const double g_low = cfg.g1 - spread;
  const double g_high = cfg.g1 + spread;
  if (g_low < 0.0 || g_high > 1.0) throw Error(ErrorCode::InvalidMoments, "(g1, g2) not realisable in [0,1]");

  LemmaSimResult out;
  out.z.reserve(cfg.trials);
  std::vector<double> x(cfg.T), y(cfg.T);
  const double scale = fisher_spearman_sd(cfg.T);
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    RngStream rng(trial_seed(cfg.seed, hash_name("lemma"), trial), 0);
    for (std::size_t i = 0; i < cfg.T; ++i) {
      const double g = (i % 2 == 0) ? g_low : g_high;
      x[i] = rng.uniform() < g ? 1.0 : 0.0;
      y[i] = draw_score(sd, rng);
    }
    out.z.push_back(fisher_spearman(x, y) / scale);
  }
  out.ks = ks_test_std_normal(out.z);
  out.mean_z = mean(out.z);
  out.sd_z = stddev(out.z);
  return out;
}

} // namespace wmlab::stat
