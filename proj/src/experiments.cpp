#include "wmlab/harness.hpp"

#include <boost/math/distributions/poisson.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wmlab {

namespace {

RedGreenParams rg_params(const ExperimentConfig &cfg, const World &world, std::size_t h, std::uint64_t key) {
  RedGreenParams p = cfg.redgreen();
  p.h = h;
  p.vocab_size = world.provider_lm.vocab_size();
  p.key = WatermarkKey{key};
  return p;
}

// The stream is advanced identically whether or not the drawn key is used.
std::uint64_t draw_key(const ExperimentConfig &cfg, RngStream &rng) {
  const std::uint64_t k = rng.next_u64();
  return cfg.per_trial_key ? k : cfg.key;
}

std::string tag(std::string_view exp, const std::string &cell) { return std::string(exp) + "/" + cell; }

struct Scorer {
  FrequencyTable table;
  ScoreKind kind = ScoreKind::Ngram;
  std::size_t h = 1;

  ScoreSeq operator()(const TokenSeq &t) const {
    return kind == ScoreKind::Ngram ? ngram_score(table, t, h) : unigram_score(table, t, h);
  }
};

Scorer make_scorer(const std::vector<TokenSeq> &docs, ScoreKind kind, std::size_t h) {
  Scorer s;
  s.kind = kind;
  s.h = h;
  s.table = build_frequency_table(docs, kind == ScoreKind::Ngram ? FrequencyKind::UnorderedNgram : FrequencyKind::Unigram, h);
  return s;
}

// A tested document: c-token prefix plus suffix, and the provider's
// regeneration of the suffix from that prefix.
struct DocPair {
  TokenSeq original;
  TokenSeq regen;
};

Sample tested_part(const TokenSeq &text, std::size_t c, const ScoreFn &score, const TraceFn &trace) {
  return slice(make_sample(trace(text, 0), score(text)), c);
}

TestReport run_test(const ExperimentConfig &cfg, const std::vector<DocPair> &docs, const ScoreFn &score,
                    const TraceFn &trace) {
  if (cfg.method == TestMethod::Reprompting) {
    std::vector<TokenSeq> o, r;
    for (const auto &d : docs) o.push_back(d.original), r.push_back(d.regen);
    return reprompt_test(o, r, cfg.c, score, trace, cfg.sidedness);
  }
  std::vector<Sample> parts;
  for (const auto &d : docs) parts.push_back(tested_part(d.original, cfg.c, score, trace));
  return standard_test(concatenate(parts), cfg.sidedness);
}

std::vector<CurvePoint> rejection_curve(const std::vector<double> &p, const std::vector<double> &alphas) {
  std::vector<CurvePoint> out;
  for (double a : alphas) {
    const auto hits = static_cast<std::size_t>(std::count_if(p.begin(), p.end(), [a](double v) { return v < a; }));
    out.push_back(rate_point(a, hits, p.size()));
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

TokenSeq head(const TokenSeq &t, std::size_t n) {
  return TokenSeq(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(std::min(n, t.size())));
}

DocPair provider_pair(const ExperimentConfig &cfg, const World &world, const RedGreenWatermark &wm,
                      std::size_t doc_len, RngStream &rng) {
  const TokenSeq prompt = prompt_for(world, rng.below(world.reference_corpus.documents.size()), cfg.prompt_len);
  DocPair d;
  d.original = wm.generate(world.provider_lm, prompt, cfg.c + doc_len, rng);
  d.regen = wm.generate(world.provider_lm, head(d.original, cfg.c), doc_len, rng);
  return d;
}

// Watermarked suffix with a contiguous span of human tokens spliced in, so
// that round(mix * doc_len) of the tested tokens are human.
DocPair mixed_pair(const ExperimentConfig &cfg, const World &world, const RedGreenWatermark &wm, double mix,
                   RngStream &rng) {
  const auto m = static_cast<std::size_t>(std::llround(mix * static_cast<double>(cfg.doc_len)));
  const TokenSeq prompt = prompt_for(world, rng.below(world.reference_corpus.documents.size()), cfg.prompt_len);
  DocPair d;
  d.original = wm.generate(world.provider_lm, prompt, cfg.c + cfg.doc_len - m, rng);
  if (m > 0) {
    const auto &docs = world.reference_corpus.documents;
    const TokenSeq &src = docs[rng.below(docs.size())];
    const std::size_t off = rng.below(src.size());
    TokenSeq human(m);
    for (std::size_t i = 0; i < m; ++i) human[i] = src[(off + i) % src.size()];
    const std::size_t pos = cfg.c + rng.below(cfg.doc_len - m + 1);
    d.original.insert(d.original.begin() + static_cast<std::ptrdiff_t>(pos), human.begin(), human.end());
  }
  d.regen = wm.generate(world.provider_lm, head(d.original, cfg.c), cfg.doc_len, rng);
  return d;
}

struct SpoofPool {
  std::vector<DocPair> pairs;
  std::size_t attempts = 0;
  double success_rate = 0.0;
};

// Spoofed documents that pass the provider's detector, each with the
// provider's regeneration from its c-token prefix. Document i draws from its
// own stream, so pools are prefixes of one another.
SpoofPool spoof_pool(const ExperimentConfig &cfg, const World &world, const SpoofKit &kit,
                     const RedGreenWatermark &wm, const std::string &stream_tag, std::size_t needed,
                     std::size_t doc_len) {
  SpoofPool pool;
  const std::size_t cap = needed * 10 + 500;
  std::size_t passed = 0;
  for (std::size_t i = 0; pool.pairs.size() < needed && i < cap; ++i) {
    if (i >= 500 && passed == 0) break;
    RngStream rng = unit_rng(cfg.seed, stream_tag, i);
    const TokenSeq prompt = prompt_for(world, rng.below(world.reference_corpus.documents.size()), cfg.prompt_len);
    TokenSeq doc = spoof_generate(world.aux_lm, kit.knowledge, kit.config, prompt, cfg.c + doc_len, rng);
    ++pool.attempts;
    if (!wm.detect(doc).watermarked) continue;
    ++passed;
    DocPair d;
    d.regen = wm.generate(world.provider_lm, head(doc, cfg.c), doc_len, rng);
    d.original = std::move(doc);
    pool.pairs.push_back(std::move(d));
  }
  if (pool.pairs.empty())
    throw Error(ErrorCode::NoSpoofsPassed,
                "no spoofed document passed the detector in " + std::to_string(pool.attempts) + " attempts");
  pool.success_rate = static_cast<double>(passed) / static_cast<double>(pool.attempts);
  return pool;
}

// Runs the test on consecutive groups of `per_trial` documents.
std::vector<TestReport> test_groups(const ExperimentConfig &cfg, const std::vector<DocPair> &pairs,
                                    std::size_t per_trial, const ScoreFn &score, const TraceFn &trace) {
  std::vector<TestReport> out;
  for (std::size_t start = 0; start + per_trial <= pairs.size(); start += per_trial) {
    const std::vector<DocPair> group(pairs.begin() + static_cast<std::ptrdiff_t>(start),
                                     pairs.begin() + static_cast<std::ptrdiff_t>(start + per_trial));
    try {
      out.push_back(run_test(cfg, group, score, trace));
    } catch (const Error &e) {
      if (e.code() != ErrorCode::TooFewKept) throw;
    }
  }
  return out;
}

TraceFn redgreen_trace(const RedGreenWatermark &wm) {
  return [&wm](const TokenSeq &t, std::size_t) { return wm.trace(t); };
}

} // namespace

// ---------------------------------------------------------------------------

NormalityResult run_normality(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  NormalityResult res;
  const std::size_t T = cfg.t_grid.front();
  const std::size_t per = T / cfg.doc_len;
  for (std::size_t h : cfg.h_grid) {
    const Scorer uni = make_scorer(world.reference_corpus.documents, ScoreKind::Unigram, h);
    const Scorer ngr = make_scorer(world.reference_corpus.documents, ScoreKind::Ngram, h);
    NormalityRow rows[3];
    rows[0].method = TestMethod::Standard, rows[0].score = ScoreKind::Unigram;
    rows[1].method = TestMethod::Standard, rows[1].score = ScoreKind::Ngram;
    rows[2].method = TestMethod::Reprompting, rows[2].score = ScoreKind::Ngram;
    const std::string cell = tag("normality", "h=" + std::to_string(h));
    for (std::size_t u = 0; u < cfg.trials_for(T); ++u) {
      RngStream rng = unit_rng(cfg.seed, cell, u);
      const RedGreenWatermark wm(rg_params(cfg, world, h, draw_key(cfg, rng)));
      std::vector<DocPair> docs;
      for (std::size_t j = 0; j < per; ++j) docs.push_back(provider_pair(cfg, world, wm, cfg.doc_len, rng));
      const TraceFn trace = redgreen_trace(wm);
      for (int r = 0; r < 3; ++r) {
        ExperimentConfig c = cfg;
        c.method = rows[r].method;
        c.sidedness = Sidedness::TwoSided;
        const ScoreFn score = [&](const TokenSeq &t) { return r == 0 ? uni(t) : ngr(t); };
        try {
          rows[r].z.push_back(run_test(c, docs, score, trace).z);
        } catch (const Error &e) {
          if (e.code() != ErrorCode::TooFewKept) throw;
        }
      }
    }
    for (auto &row : rows) {
      row.h = h;
      if (row.z.size() >= 8) {
        row.mean = stat::mean(row.z);
        row.sd = stat::stddev(row.z);
        row.ks = stat::ks_test_std_normal(row.z);
        row.dagostino = stat::dagostino_pearson(row.z);
      }
      res.rows.push_back(std::move(row));
    }
  }
  return res;
}

FprResult run_fpr_curve(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  FprResult res;
  for (std::size_t h : cfg.h_grid) {
    const Scorer scorer = make_scorer(world.reference_corpus.documents, cfg.score, h);
    const ScoreFn score = [&](const TokenSeq &t) { return scorer(t); };
    for (std::size_t T : cfg.t_grid) {
      const std::size_t per = T / cfg.doc_len;
      for (double mix : cfg.mix_grid) {
        FprCurve curve;
        curve.h = h, curve.T = T, curve.mix = mix;
        const std::string cell =
            tag("fpr-curve", "h=" + std::to_string(h) + "/T=" + std::to_string(T) + "/mix=" + format_double(mix));
        std::vector<double> p;
        for (std::size_t u = 0; u < cfg.trials_for(T); ++u) {
          RngStream rng = unit_rng(cfg.seed, cell, u);
          const RedGreenWatermark wm(rg_params(cfg, world, h, draw_key(cfg, rng)));
          std::vector<DocPair> docs;
          // Only documents the detector flags are tested.
          for (std::size_t j = 0, tries = 0; j < per; ++tries) {
            if (tries >= 100 * per) throw Error(ErrorCode::NoSpoofsPassed, "watermarked documents keep failing detection");
            DocPair d = mixed_pair(cfg, world, wm, mix, rng);
            if (!wm.detect(d.original).watermarked) {
              ++curve.filtered_out;
              continue;
            }
            docs.push_back(std::move(d));
            ++j;
          }
          try {
            p.push_back(run_test(cfg, docs, score, redgreen_trace(wm)).p);
          } catch (const Error &e) {
            if (e.code() != ErrorCode::TooFewKept) throw;
          }
        }
        curve.points = rejection_curve(p, cfg.alpha_grid);
        res.curves.push_back(std::move(curve));
      }
    }
  }
  return res;
}

PowerResult run_power(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  PowerResult res;
  const RedGreenWatermark wm(rg_params(cfg, world, cfg.h, cfg.key));
  const Scorer scorer = make_scorer(world.reference_corpus.documents, cfg.score, cfg.h);
  const ScoreFn score = [&](const TokenSeq &t) { return scorer(t); };
  for (SpooferKind kind : cfg.spoofers) {
    const SpoofKit kit = build_spoof_kit(world, cfg, kind, cfg.dataset_docs);
    std::vector<double> sqrt_t, mean_z;
    for (std::size_t T : cfg.t_grid) {
      const std::size_t per = T / cfg.doc_len;
      const SpoofPool pool = spoof_pool(cfg, world, kit, wm, tag("power", std::string(to_string(kind)) + "/T=" + std::to_string(T)),
                                        per * cfg.trials_for(T), cfg.doc_len);
      PowerRow row;
      row.spoofer = kind;
      row.T = T;
      row.success_rate = pool.success_rate;
      std::vector<double> p;
      for (const auto &r : test_groups(cfg, pool.pairs, per, score, redgreen_trace(wm))) {
        row.z.push_back(r.z);
        p.push_back(r.p);
      }
      row.points = rejection_curve(p, cfg.alpha_grid);
      row.mean_z = row.z.empty() ? std::nan("") : stat::mean(row.z);
      sqrt_t.push_back(std::sqrt(static_cast<double>(T)));
      mean_z.push_back(row.mean_z);
      res.rows.push_back(std::move(row));
    }
    if (sqrt_t.size() >= 2) res.fits[kind] = stat::linear_fit(sqrt_t, mean_z);
  }
  return res;
}

ShuffleResult run_shuffle_check(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  ShuffleResult res;
  const RedGreenWatermark wm(rg_params(cfg, world, cfg.h, cfg.key));
  const Scorer scorer = make_scorer(world.reference_corpus.documents, ScoreKind::Ngram, cfg.h);
  const ScoreFn score = [&](const TokenSeq &t) { return scorer(t); };
  const TraceFn trace = redgreen_trace(wm);
  const std::size_t L = cfg.shuffle_len;
  const std::size_t n = cfg.trials_for(L);

  std::vector<std::pair<std::string, std::vector<DocPair>>> corpora;
  {
    std::vector<DocPair> wmk;
    for (std::size_t u = 0; u < n; ++u) {
      RngStream rng = unit_rng(cfg.seed, "shuffle/watermarked", u);
      wmk.push_back(provider_pair(cfg, world, wm, L, rng));
    }
    corpora.emplace_back("watermarked", std::move(wmk));
    const SpoofKit kit = build_spoof_kit(world, cfg, cfg.spoofer, cfg.dataset_docs);
    corpora.emplace_back("spoofed", spoof_pool(cfg, world, kit, wm, "shuffle/spoofed", n, L).pairs);
  }

  for (auto &[name, pairs] : corpora) {
    // Color/score/keep matrices of the tested parts, one row per text.
    std::vector<Sample> orig, regen;
    for (const auto &d : pairs) {
      orig.push_back(tested_part(d.original, cfg.c, score, trace));
      TokenSeq re = head(d.original, cfg.c);
      re.insert(re.end(), d.regen.begin(), d.regen.end());
      regen.push_back(slice(make_sample(trace(re, cfg.c), score(re)), cfg.c));
    }
    ShuffleRow row;
    row.corpus = name;
    const auto row_z = [&](const std::vector<Sample> &a, const std::vector<Sample> &b, std::vector<double> &out) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        try {
          out.push_back(reprompt_test(a[i], b[i], Sidedness::TwoSided).z);
        } catch (const Error &e) {
          if (e.code() != ErrorCode::TooFewKept) throw;
        }
      }
    };
    row_z(orig, regen, row.z);

    // One permutation of the n x L cells, shared by both corpora sides.
    const std::size_t cells = orig.size() * L;
    std::vector<std::size_t> sigma(cells);
    for (std::size_t i = 0; i < cells; ++i) sigma[i] = i;
    if (!cfg.shuffle_identity) {
      RngStream prng = unit_rng(cfg.seed, "shuffle/permutation/" + name, 0);
      shuffle(sigma, prng);
    }
    const auto permute = [&](const std::vector<Sample> &rows) {
      std::vector<Sample> out(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out[i].scheme = rows[i].scheme;
        out[i].x.resize(L), out[i].y.resize(L), out[i].keep.resize(L);
        for (std::size_t j = 0; j < L; ++j) {
          const std::size_t src = sigma[i * L + j];
          const Sample &s = rows[src / L];
          out[i].x[j] = s.x[src % L];
          out[i].y[j] = s.y[src % L];
          out[i].keep[j] = s.keep[src % L];
        }
      }
      return out;
    };
    row_z(permute(orig), permute(regen), row.z_shuffled);
    row.test = stat::mann_whitney_u(row.z, row.z_shuffled);
    res.rows.push_back(std::move(row));
  }
  return res;
}

namespace {

// Table with the same keys and counts perturbed by N(0, eps), rounded and
// clamped at zero.
FrequencyTable perturb(const FrequencyTable &base, double eps, RngStream &rng) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> entries(base.counts.begin(), base.counts.end());
  std::sort(entries.begin(), entries.end());
  FrequencyTable out;
  out.kind = base.kind;
  out.h = base.h;
  for (const auto &[k, c] : entries) {
    const double v = std::max(0.0, std::round(static_cast<double>(c) + eps * rng.normal()));
    const auto vc = static_cast<std::uint64_t>(v);
    if (vc == 0) continue;
    out.counts[k] = vc;
    out.total += vc;
  }
  return out;
}

double tv_distance(const FrequencyTable &a, const FrequencyTable &b) {
  if (a.total == 0 || b.total == 0) return 1.0;
  double s = 0.0;
  const double ta = static_cast<double>(a.total), tb = static_cast<double>(b.total);
  for (const auto &[k, c] : a.counts) s += std::abs(static_cast<double>(c) / ta - static_cast<double>(b.count_of(k)) / tb);
  for (const auto &[k, c] : b.counts)
    if (!a.counts.count(k)) s += static_cast<double>(c) / tb;
  return 0.5 * s;
}

AblationPoint ablation_point(const ExperimentConfig &cfg, const std::string &label, double x,
                             const std::vector<DocPair> &pairs, const FrequencyTable &table,
                             const RedGreenWatermark &wm, double success_rate) {
  Scorer scorer;
  scorer.table = table;
  scorer.kind = ScoreKind::Ngram;
  scorer.h = cfg.h;
  const ScoreFn score = [&](const TokenSeq &t) { return scorer(t); };
  std::vector<double> p;
  for (const auto &r : test_groups(cfg, pairs, cfg.ablation_T / cfg.doc_len, score, redgreen_trace(wm))) p.push_back(r.p);
  AblationPoint pt;
  pt.label = label;
  pt.x = x;
  pt.median_p = median(p);
  pt.tpr = rejection_curve(p, {cfg.ablation_alpha}).front();
  pt.success_rate = success_rate;
  return pt;
}

} // namespace

AblationResult run_dtilde_ablation(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  AblationResult res;
  const RedGreenWatermark wm(rg_params(cfg, world, cfg.h, cfg.key));
  const SpoofKit kit = build_spoof_kit(world, cfg, cfg.spoofer, cfg.dataset_docs);
  const std::size_t per = cfg.ablation_T / cfg.doc_len;
  const SpoofPool pool = spoof_pool(cfg, world, kit, wm, "dtilde-ablation", per * cfg.trials_for(cfg.ablation_T), cfg.doc_len);
  const FrequencyTable d0 = build_frequency_table(kit.dataset.documents, FrequencyKind::UnorderedNgram, cfg.h);
  for (std::size_t i = 0; i < cfg.noise_grid.size(); ++i) {
    RngStream rng = unit_rng(cfg.seed, "dtilde-ablation/noise", i);
    const FrequencyTable t = perturb(d0, cfg.noise_grid[i], rng);
    res.points.push_back(ablation_point(cfg, "noise=" + format_double(cfg.noise_grid[i]), tv_distance(t, d0), pool.pairs,
                                        t, wm, pool.success_rate));
  }
  const FrequencyTable ref = build_frequency_table(world.reference_corpus, FrequencyKind::UnorderedNgram, cfg.h);
  res.points.push_back(ablation_point(cfg, "reference", tv_distance(ref, d0), pool.pairs, ref, wm, pool.success_rate));
  return res;
}

AblationResult run_dataset_size_ablation(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  AblationResult res;
  const RedGreenWatermark wm(rg_params(cfg, world, cfg.h, cfg.key));
  const FrequencyTable ref = build_frequency_table(world.reference_corpus, FrequencyKind::UnorderedNgram, cfg.h);
  const std::size_t per = cfg.ablation_T / cfg.doc_len;
  for (std::size_t docs : cfg.dataset_grid) {
    const SpoofKit kit = build_spoof_kit(world, cfg, cfg.spoofer, docs);
    // Common random numbers: every size draws spoof i from the same stream.
    const SpoofPool pool = spoof_pool(cfg, world, kit, wm, "dataset-size", per * cfg.trials_for(cfg.ablation_T), cfg.doc_len);
    res.points.push_back(ablation_point(cfg, "docs=" + std::to_string(docs), static_cast<double>(docs), pool.pairs, ref,
                                        wm, pool.success_rate));
  }
  return res;
}

DependenceResult run_dependence(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  DependenceResult res;
  const std::size_t K = cfg.t_grid.front();
  for (std::size_t h : cfg.h_grid) {
    const Scorer scorer = make_scorer(world.reference_corpus.documents, ScoreKind::Ngram, h);
    DependenceRow row;
    row.h = h;
    double kept_sum = 0.0;
    const std::string cell = tag("dependence", "h=" + std::to_string(h));
    for (std::size_t u = 0; u < cfg.trials_for(K); ++u) {
      RngStream rng = unit_rng(cfg.seed, cell, u);
      const RedGreenWatermark wm(rg_params(cfg, world, h, draw_key(cfg, rng)));
      TokenSeq context = prompt_for(world, rng.below(world.reference_corpus.documents.size()), cfg.prompt_len);
      const std::size_t plen = context.size();
      TokenSeq text;
      // Extend until K positions survive dedup, then cut at the K-th.
      for (std::size_t rounds = 0;; ++rounds) {
        if (rounds > 64) throw Error(ErrorCode::TooFewKept, "text keeps repeating; cannot reach the kept length");
        const TokenSeq more = wm.generate(world.provider_lm, context, std::max<std::size_t>(K / 2, 16), rng);
        context.insert(context.end(), more.begin(), more.end());
        text.assign(context.begin() + static_cast<std::ptrdiff_t>(plen), context.end());
        const auto mask = dedup_mask(text, h, cfg.dedup);
        std::size_t kept = 0, cut = text.size();
        for (std::size_t t = 0; t < mask.size(); ++t)
          if (mask[t] && ++kept == K) {
            cut = t + 1;
            break;
          }
        if (kept == K) {
          text.resize(cut);
          break;
        }
      }
      const TestReport r = standard_test(make_sample(wm.trace(text), scorer(text)), Sidedness::TwoSided);
      row.z.push_back(r.z);
      kept_sum += static_cast<double>(r.n_kept);
    }
    row.mean = stat::mean(row.z);
    row.mean_kept = kept_sum / static_cast<double>(row.z.size());
    row.t_test = stat::one_sample_t_test(row.z);
    if (row.z.size() >= 8) row.dagostino = stat::dagostino_pearson(row.z);
    res.rows.push_back(std::move(row));
  }
  return res;
}

NullTailResult run_null_tail(const ExperimentConfig &cfg) {
  cfg.validate();
  NullTailResult res;
  // Uniform tokens make every context's green mass exactly γ under any key,
  // so a fixed key keeps the partition cache warm without biasing the null.
  RedGreenParams p = cfg.redgreen();
  const RedGreenWatermark wm(p);
  const std::size_t L = cfg.t_grid.front();
  res.trials = cfg.trials_for(L);
  res.threshold = p.rho;
  double kept = 0.0;
  TokenSeq text(L);
  for (std::size_t u = 0; u < res.trials; ++u) {
    RngStream rng = unit_rng(cfg.seed, "null-tail", u);
    for (auto &t : text) t = static_cast<TokenId>(rng.below(p.vocab_size));
    const DetectionReport d = wm.detect(text);
    kept += static_cast<double>(d.n_kept);
    if (d.z > p.rho) ++res.hits;
  }
  res.mean_kept = kept / static_cast<double>(res.trials);
  res.expected_rate = stat::normal_sf(p.rho);
  const boost::math::poisson_distribution<double> pois(static_cast<double>(res.trials) * res.expected_rate);
  const double k = static_cast<double>(res.hits);
  const double lower = boost::math::cdf(pois, k);
  const double upper = res.hits == 0 ? 1.0 : boost::math::cdf(boost::math::complement(pois, k - 1.0));
  res.poisson_p = std::min(1.0, 2.0 * std::min(lower, upper));
  return res;
}

AltSchemeResult run_alt_schemes(const ExperimentConfig &cfg, const World &world) {
  cfg.validate();
  AltSchemeResult res;
  const MarkovLM &lm = world.provider_lm;
  const std::size_t V = lm.vocab_size();
  const std::size_t T = cfg.t_grid.front();
  const std::size_t per = T / cfg.doc_len;
  const std::size_t n_ref = world.reference_corpus.documents.size();
  res.T = T;

  // Null: unwatermarked text scored under a fresh key per text.
  {
    std::vector<double> ax, kx;
    for (std::size_t u = 0; u < cfg.trials; ++u) {
      RngStream rng = unit_rng(cfg.seed, "alt-schemes/null", u);
      const std::uint64_t key = rng.next_u64();
      const TokenSeq text = generate_plain(lm, prompt_for(world, rng.below(n_ref), cfg.prompt_len), cfg.doc_len, rng);
      AarParams ap = cfg.aar();
      ap.key = WatermarkKey{key}, ap.vocab_size = V;
      const WatermarkTrace at = aar_trace(ap, text);
      for (std::size_t t = 0; t < at.size(); ++t)
        if (at.keep[t]) ax.push_back(at.x[t]);
      // A single allowed shift: the aligned statistic is the raw key evidence.
      KthParams kp = cfg.kth();
      kp.key = WatermarkKey{key}, kp.vocab_size = V, kp.shifts = 1;
      const WatermarkTrace kt = kth_trace(kp, text);
      for (std::size_t t = 0; t < kt.size(); ++t)
        if (kt.keep[t]) kx.push_back(kt.x[t]);
    }
    res.aar_null = stat::ks_test_exponential(ax);
    res.kth_null = stat::ks_test_exponential(kx);
  }

  // KTH shift recovery with every shift allowed.
  {
    KthParams kp = cfg.kth();
    kp.vocab_size = V;
    kp.shifts = kp.n_key;
    std::size_t hits = 0;
    res.kth_shift_trials = std::min<std::size_t>(cfg.trials, 200);
    for (std::size_t u = 0; u < res.kth_shift_trials; ++u) {
      RngStream rng = unit_rng(cfg.seed, "alt-schemes/kth-shift", u);
      std::size_t shift = 0;
      const TokenSeq text =
          kth_generate(lm, kp, prompt_for(world, rng.below(n_ref), cfg.prompt_len), cfg.kth_recovery_len, rng, &shift);
      if (kth_align(kp, text).shift == shift) ++hits;
    }
    res.kth_shift_recovery = static_cast<double>(hits) / static_cast<double>(res.kth_shift_trials);
  }

  // AAR Reprompting: provider text versus a model distilled from AAR output.
  {
    AarParams ap = cfg.aar();
    ap.vocab_size = V;
    const Scorer scorer = make_scorer(world.reference_corpus.documents, ScoreKind::Ngram, ap.h);
    const ScoreFn score = [&](const TokenSeq &t) { return scorer(t); };
    const TraceFn trace = [&](const TokenSeq &t, std::size_t) { return aar_trace(ap, t); };
    const auto &sdocs = world.spoofer_corpus.documents;
    Corpus d;
    d.vocab = lm.vocab();
    for (std::size_t i = 0; i < cfg.dataset_docs; ++i)
      d.documents.push_back(aar_generate(lm, ap, head(sdocs[i % sdocs.size()], cfg.prompt_len), cfg.dataset_doc_len));
    MarkovOptions o;
    o.order = ap.h + 1;
    o.alpha = cfg.distill_alpha;
    o.min_context_count = cfg.distill_min_count;
    const MarkovLM distilled = train_markov(d, o);

    std::vector<double> p_null, p_spoof, x_sum;
    for (std::size_t u = 0; u < cfg.trials_for(T); ++u) {
      RngStream rng = unit_rng(cfg.seed, "alt-schemes/aar", u);
      std::vector<DocPair> genuine, spoofed;
      for (std::size_t j = 0; j < per; ++j) {
        const TokenSeq prompt = prompt_for(world, rng.below(n_ref), cfg.prompt_len);
        DocPair g;
        g.original = aar_generate(lm, ap, prompt, cfg.c + cfg.doc_len);
        g.regen = aar_generate(lm, ap, head(g.original, cfg.c), cfg.doc_len);
        genuine.push_back(std::move(g));
        DocPair s;
        s.original = generate_plain(distilled, prompt, cfg.c + cfg.doc_len, rng);
        s.regen = aar_generate(lm, ap, head(s.original, cfg.c), cfg.doc_len);
        spoofed.push_back(std::move(s));
      }
      ExperimentConfig c = cfg;
      c.method = TestMethod::Reprompting;
      for (auto [docs, out] : {std::pair{&genuine, &p_null}, std::pair{&spoofed, &p_spoof}}) {
        try {
          out->push_back(run_test(c, *docs, score, trace).p);
        } catch (const Error &e) {
          if (e.code() != ErrorCode::TooFewKept) throw;
        }
      }
    }
    res.aar_fpr = rejection_curve(p_null, cfg.alpha_grid);
    res.aar_tpr = rejection_curve(p_spoof, cfg.alpha_grid);
  }

  // Red-Green distillation at the same T for comparison.
  {
    const RedGreenWatermark wm(rg_params(cfg, world, cfg.h, cfg.key));
    const SpoofKit kit = build_spoof_kit(world, cfg, SpooferKind::Distill, cfg.dataset_docs);
    const Scorer scorer = make_scorer(world.reference_corpus.documents, ScoreKind::Ngram, cfg.h);
    const ScoreFn score = [&](const TokenSeq &t) { return scorer(t); };
    ExperimentConfig c = cfg;
    c.method = TestMethod::Reprompting;
    const SpoofPool pool = spoof_pool(c, world, kit, wm, "alt-schemes/redgreen", per * cfg.trials_for(T), cfg.doc_len);
    std::vector<double> p;
    for (const auto &r : test_groups(c, pool.pairs, per, score, redgreen_trace(wm))) p.push_back(r.p);
    res.redgreen_tpr = rejection_curve(p, cfg.alpha_grid);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string curve_csv(const std::vector<CurvePoint> &pts) {
  std::string out = "alpha,rate,ci_low,ci_high,n\n";
  for (const auto &p : pts)
    out += format_double(p.x) + "," + format_double(p.rate) + "," + format_double(p.ci_low) + "," +
           format_double(p.ci_high) + "," + std::to_string(p.n) + "\n";
  return out;
}

std::string join_z(const std::vector<double> &z) {
  std::string out;
  for (double v : z) out += format_double(v) + "\n";
  return out;
}

struct Writer {
  std::filesystem::path dir;
  std::vector<std::filesystem::path> written;

  void put(const std::string &name, const std::string &content) {
    written.push_back(dir / name);
    write_text(written.back(), content);
  }
};

} // namespace

const std::vector<std::string> &experiment_names() {
  static const std::vector<std::string> names = {"normality",  "fpr-curve",  "power",     "shuffle",    "dtilde-ablation",
                                                 "dataset-size", "dependence", "null-tail", "alt-schemes"};
  return names;
}

std::vector<std::filesystem::path> run_experiment(const std::string &name, const ExperimentConfig &cfg) {
  const auto &names = experiment_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw Error(ErrorCode::InvalidArgument, "unknown experiment '" + name + "'");
  cfg.validate();
  Writer w{cfg.out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(cfg.out_dir), {}};

  if (name == "null-tail") {
    const auto r = run_null_tail(cfg);
    w.put("null_tail.csv", "trials,hits,threshold,expected_rate,poisson_p,mean_kept\n" + std::to_string(r.trials) + "," +
                               std::to_string(r.hits) + "," + format_double(r.threshold) + "," +
                               format_double(r.expected_rate) + "," + format_double(r.poisson_p) + "," +
                               format_double(r.mean_kept) + "\n");
  } else {
    const World world = build_world(cfg);
    ExperimentConfig c = cfg;
    c.vocab_size = world.cfg.vocab_size;
    if (name == "normality") {
      const auto r = run_normality(c, world);
      std::string summary = "method,score,h,n,mean,sd,ks_stat,ks_p,dp_stat,dp_p\n";
      std::string samples = "method,score,h,index,z\n";
      for (const auto &row : r.rows) {
        const std::string id = std::string(to_string(row.method)) + "," + to_string(row.score) + "," + std::to_string(row.h);
        summary += id + "," + std::to_string(row.z.size()) + "," + format_double(row.mean) + "," + format_double(row.sd) +
                   "," + format_double(row.ks.statistic) + "," + format_double(row.ks.p_value) + "," +
                   format_double(row.dagostino.statistic) + "," + format_double(row.dagostino.p_value) + "\n";
        for (std::size_t i = 0; i < row.z.size(); ++i)
          samples += id + "," + std::to_string(i) + "," + format_double(row.z[i]) + "\n";
        w.put("normality_" + std::string(to_string(row.method)) + "_" + to_string(row.score) + "_h" +
                  std::to_string(row.h) + ".svg",
              histogram_svg(id, row.z));
      }
      w.put("normality_summary.csv", summary);
      w.put("normality_z.csv", samples);
    } else if (name == "fpr-curve") {
      const auto r = run_fpr_curve(c, world);
      std::string summary = "h,T,mix,alpha,rate,ci_low,ci_high,n,filtered_out\n";
      std::vector<Series> series;
      for (const auto &cv : r.curves) {
        const std::string id = "h" + std::to_string(cv.h) + "_T" + std::to_string(cv.T) + "_mix" + format_double(cv.mix);
        w.put("fpr_" + id + ".csv", curve_csv(cv.points));
        Series s{id, {}, {}};
        for (const auto &p : cv.points) {
          summary += std::to_string(cv.h) + "," + std::to_string(cv.T) + "," + format_double(cv.mix) + "," +
                     format_double(p.x) + "," + format_double(p.rate) + "," + format_double(p.ci_low) + "," +
                     format_double(p.ci_high) + "," + std::to_string(p.n) + "," + std::to_string(cv.filtered_out) + "\n";
          s.x.push_back(p.x), s.y.push_back(p.rate);
        }
        series.push_back(std::move(s));
      }
      w.put("fpr_curve.csv", summary);
      w.put("fpr_curve.svg", line_svg("rejection rate of watermarked text", "alpha", "rate", series));
    } else if (name == "power") {
      const auto r = run_power(c, world);
      std::string table = "spoofer,T,alpha,rate,ci_low,ci_high,n,mean_z,success_rate\n";
      std::string zs = "spoofer,T,index,z\n";
      std::map<SpooferKind, Series> series;
      for (const auto &row : r.rows) {
        for (const auto &p : row.points)
          table += std::string(to_string(row.spoofer)) + "," + std::to_string(row.T) + "," + format_double(p.x) + "," +
                   format_double(p.rate) + "," + format_double(p.ci_low) + "," + format_double(p.ci_high) + "," +
                   std::to_string(p.n) + "," + format_double(row.mean_z) + "," + format_double(row.success_rate) + "\n";
        for (std::size_t i = 0; i < row.z.size(); ++i)
          zs += std::string(to_string(row.spoofer)) + "," + std::to_string(row.T) + "," + std::to_string(i) + "," +
                format_double(row.z[i]) + "\n";
        auto &s = series[row.spoofer];
        s.name = to_string(row.spoofer);
        s.x.push_back(std::sqrt(static_cast<double>(row.T)));
        s.y.push_back(row.mean_z);
      }
      std::string fits = "spoofer,intercept,slope,r_squared\n";
      for (const auto &[k, f] : r.fits)
        fits += std::string(to_string(k)) + "," + format_double(f.intercept) + "," + format_double(f.slope) + "," +
                format_double(f.r_squared) + "\n";
      std::vector<Series> sv;
      for (auto &[k, s] : series) sv.push_back(std::move(s));
      w.put("power.csv", table);
      w.put("power_z.csv", zs);
      w.put("power_fit.csv", fits);
      w.put("power_mean_z.svg", line_svg("mean z of spoofed text", "sqrt(T)", "mean z", sv));
    } else if (name == "shuffle") {
      const auto r = run_shuffle_check(c, world);
      std::string table = "corpus,n,u,p\n";
      std::string zs = "corpus,index,z,z_shuffled\n";
      for (const auto &row : r.rows) {
        table += row.corpus + "," + std::to_string(row.z.size()) + "," + format_double(row.test.statistic) + "," +
                 format_double(row.test.p_value) + "\n";
        for (std::size_t i = 0; i < std::max(row.z.size(), row.z_shuffled.size()); ++i)
          zs += row.corpus + "," + std::to_string(i) + "," + (i < row.z.size() ? format_double(row.z[i]) : "") + "," +
                (i < row.z_shuffled.size() ? format_double(row.z_shuffled[i]) : "") + "\n";
        w.put("shuffle_" + row.corpus + ".svg", histogram_svg(row.corpus + " z (unshuffled)", row.z));
      }
      w.put("shuffle.csv", table);
      w.put("shuffle_z.csv", zs);
    } else if (name == "dtilde-ablation" || name == "dataset-size") {
      const bool dt = name == "dtilde-ablation";
      const auto r = dt ? run_dtilde_ablation(c, world) : run_dataset_size_ablation(c, world);
      std::string table = std::string("label,") + (dt ? "tv" : "docs") + ",median_p,tpr,ci_low,ci_high,n,success_rate\n";
      Series s{dt ? "median p" : "tpr", {}, {}};
      for (const auto &p : r.points) {
        table += p.label + "," + format_double(p.x) + "," + format_double(p.median_p) + "," + format_double(p.tpr.rate) +
                 "," + format_double(p.tpr.ci_low) + "," + format_double(p.tpr.ci_high) + "," + std::to_string(p.tpr.n) +
                 "," + format_double(p.success_rate) + "\n";
        s.x.push_back(p.x);
        s.y.push_back(dt ? p.median_p : p.tpr.rate);
      }
      const std::string stem = dt ? "dtilde_ablation" : "dataset_size";
      w.put(stem + ".csv", table);
      w.put(stem + ".svg", line_svg(stem, dt ? "TV distance" : "dataset documents", dt ? "median p" : "TPR", {s}));
    } else if (name == "dependence") {
      const auto r = run_dependence(c, world);
      std::string table = "h,n,mean,t,t_p,dp_p,mean_kept\n";
      for (const auto &row : r.rows) {
        table += std::to_string(row.h) + "," + std::to_string(row.z.size()) + "," + format_double(row.mean) + "," +
                 format_double(row.t_test.statistic) + "," + format_double(row.t_test.p_value) + "," +
                 format_double(row.dagostino.p_value) + "," + format_double(row.mean_kept) + "\n";
        w.put("dependence_z_h" + std::to_string(row.h) + ".csv", "z\n" + join_z(row.z));
        w.put("dependence_h" + std::to_string(row.h) + ".svg",
              histogram_svg("standard z, n-gram score, h=" + std::to_string(row.h), row.z));
      }
      w.put("dependence.csv", table);
    } else if (name == "alt-schemes") {
      const auto r = run_alt_schemes(c, world);
      std::ostringstream t;
      t << "metric,value\n"
        << "aar_null_ks_p," << format_double(r.aar_null.p_value) << "\n"
        << "kth_null_ks_p," << format_double(r.kth_null.p_value) << "\n"
        << "kth_shift_recovery," << format_double(r.kth_shift_recovery) << "\n"
        << "kth_shift_trials," << r.kth_shift_trials << "\n"
        << "T," << r.T << "\n";
      w.put("alt_schemes.csv", t.str());
      w.put("alt_schemes_aar_fpr.csv", curve_csv(r.aar_fpr));
      w.put("alt_schemes_aar_tpr.csv", curve_csv(r.aar_tpr));
      w.put("alt_schemes_redgreen_tpr.csv", curve_csv(r.redgreen_tpr));
    }
  }

  std::ostringstream m;
  m << "version=" << kVersionString << "\n"
    << "experiment=" << name << "\n"
    << "experiment_id=" << hash_name(name) << "\n"
    << "seed_derivation=trial_seed(seed, hash_name(cell), unit)\n"
    << cfg.echo();
  w.put(name + "_manifest.txt", m.str());
  return w.written;
}

} // namespace wmlab
