#include "wmlab/spooftest.hpp"

#include "wmlab/statkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wmlab {

std::uint64_t FrequencyTable::count_of(std::uint64_t key) const {
  const auto it = counts.find(key);
  return it == counts.end() ? 0 : it->second;
}

double FrequencyTable::frequency(TokenId token) const {
  if (total == 0) return 0.0;
  return static_cast<double>(count_of(token)) / static_cast<double>(total);
}

std::uint64_t unordered_key(std::span<const TokenId> window) {
  TokenId buf[16];
  std::vector<TokenId> heap;
  TokenId *sorted = buf;
  if (window.size() > 16) {
    heap.assign(window.begin(), window.end());
    sorted = heap.data();
  } else {
    std::copy(window.begin(), window.end(), buf);
  }
  std::sort(sorted, sorted + window.size());
  return ordered_digest(std::span<const TokenId>(sorted, window.size()));
}

FrequencyTable build_frequency_table(const std::vector<TokenSeq> &documents, FrequencyKind kind, std::size_t h) {
  if (kind == FrequencyKind::UnorderedNgram && h < 1) throw Error(ErrorCode::InvalidArgument, "n-gram table needs h >= 1");
  FrequencyTable ft;
  ft.kind = kind;
  ft.h = h;
  for (const auto &d : documents) {
    if (kind == FrequencyKind::Unigram) {
      for (TokenId t : d) ++ft.counts[t], ++ft.total;
    } else {
      for (std::size_t t = h; t < d.size(); ++t) {
        ++ft.counts[unordered_key(std::span<const TokenId>(d.data() + t - h, h + 1))];
        ++ft.total;
      }
    }
  }
  if (ft.total == 0) throw Error(ErrorCode::EmptyCorpus, "reference corpus yields no entries");
  return ft;
}

FrequencyTable build_frequency_table(const Corpus &corpus, FrequencyKind kind, std::size_t h) {
  return build_frequency_table(corpus.documents, kind, h);
}

ScoreSeq ngram_score(const FrequencyTable &table, const TokenSeq &text, std::size_t h) {
  if (table.kind != FrequencyKind::UnorderedNgram) throw Error(ErrorCode::InvalidArgument, "table is not an n-gram table");
  if (table.h != h) throw Error(ErrorCode::LengthMismatch, "table built for a different h");
  ScoreSeq s;
  s.y.assign(text.size(), 0.0);
  for (std::size_t t = h; t < text.size(); ++t)
    s.y[t] = static_cast<double>(table.count_of(unordered_key(std::span<const TokenId>(text.data() + t - h, h + 1))));
  return s;
}

ScoreSeq unigram_score(const FrequencyTable &table, const TokenSeq &text, std::size_t h) {
  if (table.kind != FrequencyKind::Unigram) throw Error(ErrorCode::InvalidArgument, "table is not a unigram table");
  ScoreSeq s;
  s.y.assign(text.size(), 0.0);
  for (std::size_t t = h; t < text.size(); ++t) s.y[t] = table.frequency(text[t - h]);
  return s;
}

std::size_t Sample::kept() const noexcept {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

Sample make_sample(const WatermarkTrace &trace, const ScoreSeq &score) {
  if (trace.x.size() != score.y.size() || trace.keep.size() != trace.x.size())
    throw Error(ErrorCode::LengthMismatch, "trace and score lengths differ");
  return Sample{trace.x, score.y, trace.keep, trace.scheme};
}

Sample slice(const Sample &s, std::size_t from) {
  from = std::min(from, s.x.size());
  const auto off = static_cast<std::ptrdiff_t>(from);
  return Sample{std::vector<double>(s.x.begin() + off, s.x.end()), std::vector<double>(s.y.begin() + off, s.y.end()),
                std::vector<std::uint8_t>(s.keep.begin() + off, s.keep.end()), s.scheme};
}

Sample concatenate(const std::vector<Sample> &parts) {
  Sample out;
  if (parts.empty()) return out;
  out.scheme = parts.front().scheme;
  for (const auto &p : parts) {
    if (p.scheme != out.scheme) throw Error(ErrorCode::MixedSchemes, "cannot concatenate traces of different schemes");
    out.x.insert(out.x.end(), p.x.begin(), p.x.end());
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
    out.keep.insert(out.keep.end(), p.keep.begin(), p.keep.end());
  }
  return out;
}

double statistic_S(const Sample &s, std::size_t min_kept) {
  std::vector<double> x, y;
  x.reserve(s.x.size());
  y.reserve(s.x.size());
  for (std::size_t t = 0; t < s.x.size(); ++t) {
    if (!s.keep[t]) continue;
    x.push_back(s.x[t]);
    y.push_back(s.y[t]);
  }
  if (x.size() < std::max<std::size_t>(min_kept, 4))
    throw Error(ErrorCode::TooFewKept, std::to_string(x.size()) + " kept positions, need " + std::to_string(min_kept));
  return stat::fisher_spearman(x, y);
}

double statistic_S(const WatermarkTrace &trace, const ScoreSeq &score, std::size_t min_kept) {
  return statistic_S(make_sample(trace, score), min_kept);
}

const char *to_string(TestMethod m) { return m == TestMethod::Standard ? "standard" : "reprompting"; }
const char *to_string(Sidedness s) { return s == Sidedness::TwoSided ? "two-sided" : "one-sided"; }

Sidedness parse_sidedness(std::string_view s) {
  if (s == "two-sided") return Sidedness::TwoSided;
  if (s == "one-sided") return Sidedness::OneSided;
  throw Error(ErrorCode::InvalidArgument, "unknown sidedness '" + std::string(s) + "'");
}

double p_value(double z, Sidedness sidedness) {
  if (sidedness == Sidedness::OneSided) return stat::normal_sf(z);
  return std::min(1.0, 2.0 * stat::normal_sf(std::abs(z)));
}

std::string TestReport::csv_header() { return "method,scheme,h,T,n_kept,S,z,p,seed,spoofer"; }

std::string TestReport::csv_row() const {
  std::ostringstream o;
  o.precision(10);
  o << to_string(method) << "," << to_string(scheme) << "," << h << "," << T << "," << n_kept << "," << S << "," << z
    << "," << p << "," << seed << "," << spoofer;
  return o.str();
}

TestReport standard_test(const Sample &s, Sidedness sidedness, std::size_t min_kept) {
  TestReport r;
  r.method = TestMethod::Standard;
  r.scheme = s.scheme;
  r.sidedness = sidedness;
  r.n_kept = s.kept();
  r.S = statistic_S(s, min_kept);
  r.z = r.S / stat::fisher_spearman_sd(r.n_kept);
  r.p = p_value(r.z, sidedness);
  r.T = s.x.size();
  return r;
}

TestReport reprompt_test(const Sample &original, const Sample &regenerated, Sidedness sidedness, std::size_t min_kept) {
  if (original.scheme != regenerated.scheme) throw Error(ErrorCode::MixedSchemes, "original and regenerated schemes differ");
  TestReport r;
  r.method = TestMethod::Reprompting;
  r.scheme = original.scheme;
  r.sidedness = sidedness;
  r.n_kept = original.kept();
  r.n_kept_regen = regenerated.kept();
  r.S = statistic_S(original, min_kept);
  r.S_regen = statistic_S(regenerated, min_kept);
  const double v1 = stat::kSpearmanVarianceFactor / (static_cast<double>(r.n_kept) - 3.0);
  const double v2 = stat::kSpearmanVarianceFactor / (static_cast<double>(r.n_kept_regen) - 3.0);
  r.z = (r.S - r.S_regen) / std::sqrt(v1 + v2);
  r.p = p_value(r.z, sidedness);
  r.T = original.x.size();
  r.regen_tokens = regenerated.x.size();
  return r;
}

TestReport reprompt_test(const std::vector<TokenSeq> &originals, const std::vector<TokenSeq> &regenerated,
                         std::size_t c, const ScoreFn &score, const TraceFn &trace, Sidedness sidedness,
                         std::size_t min_kept) {
  if (originals.size() != regenerated.size())
    throw Error(ErrorCode::LengthMismatch, "one regenerated continuation is needed per original text");
  if (originals.empty()) throw Error(ErrorCode::InvalidArgument, "reprompting needs at least one text");
  std::vector<Sample> orig_parts, regen_parts;
  std::vector<double> segment_S;
  for (std::size_t i = 0; i < originals.size(); ++i) {
    const TokenSeq &o = originals[i];
    if (o.size() <= c) throw Error(ErrorCode::SegmentTooShort, "text " + std::to_string(i) + " is not longer than c");
    orig_parts.push_back(slice(make_sample(trace(o, 0), score(o)), c));
    TokenSeq re(o.begin(), o.begin() + static_cast<std::ptrdiff_t>(c));
    re.insert(re.end(), regenerated[i].begin(), regenerated[i].end());
    regen_parts.push_back(slice(make_sample(trace(re, c), score(re)), c));
  }
  const Sample orig = concatenate(orig_parts);
  const Sample regen = concatenate(regen_parts);
  TestReport r = reprompt_test(orig, regen, sidedness, min_kept);
  r.c = c;
  for (const auto &p : orig_parts) {
    try {
      r.segment_S.push_back(statistic_S(p, min_kept));
    } catch (const Error &) {
      r.segment_S.push_back(std::nan(""));
    }
  }
  return r;
}

TestReport standard_test(const std::vector<TokenSeq> &texts, const ScoreFn &score, const TraceFn &trace,
                         Sidedness sidedness, std::size_t min_kept) {
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "standard test needs at least one text");
  std::vector<Sample> parts;
  for (const auto &t : texts) parts.push_back(make_sample(trace(t, 0), score(t)));
  return standard_test(concatenate(parts), sidedness, min_kept);
}

} // namespace wmlab
