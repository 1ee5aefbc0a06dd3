#include "wmlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace wmlab {

const char *to_string(ScoreKind k) { return k == ScoreKind::Ngram ? "ngram" : "unigram"; }

ScoreKind parse_score_kind(std::string_view s) {
  if (s == "ngram") return ScoreKind::Ngram;
  if (s == "unigram") return ScoreKind::Unigram;
  throw Error(ErrorCode::InvalidArgument, "unknown score kind '" + std::string(s) + "'");
}

const char *to_string(RunMode m) { return m == RunMode::Trials ? "trials" : "budget"; }

RunMode parse_run_mode(std::string_view s) {
  if (s == "trials") return RunMode::Trials;
  if (s == "budget") return RunMode::Budget;
  throw Error(ErrorCode::InvalidArgument, "unknown run mode '" + std::string(s) + "'");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string &v, const std::string &key) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used, 0);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != v.size() || v.front() == '-')
    throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string &v, const std::string &key) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception &) {
    used = 0;
  }
  if (used == 0 || used != v.size())
    throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string &v, const std::string &key) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw Error(ErrorCode::InvalidArgument, "config key '" + key + "' expects a boolean, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string &v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F> std::string join(const std::vector<T> &v, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

const char *scheme_name(Scheme s) { return to_string(s); }

Scheme parse_scheme(std::string_view s) {
  if (s == "redgreen") return Scheme::RedGreen;
  if (s == "aar") return Scheme::Aar;
  if (s == "kth") return Scheme::Kth;
  throw Error(ErrorCode::InvalidArgument, "unknown scheme '" + std::string(s) + "'");
}

TestMethod parse_method(std::string_view s) {
  if (s == "standard") return TestMethod::Standard;
  if (s == "reprompting") return TestMethod::Reprompting;
  throw Error(ErrorCode::InvalidArgument, "unknown test method '" + std::string(s) + "'");
}

struct Field {
  std::function<void(ExperimentConfig &, const std::string &)> set;
  std::function<std::string(const ExperimentConfig &)> get;
};

#define WM_SIZE(name)                                                                                                  \
  {                                                                                                                    \
    #name, {                                                                                                           \
      [](ExperimentConfig &c, const std::string &v) { c.name = static_cast<std::size_t>(parse_u64(v, #name)); },       \
          [](const ExperimentConfig &c) { return std::to_string(c.name); }                                             \
    }                                                                                                                  \
  }
#define WM_U64(name)                                                                                                   \
  {                                                                                                                    \
    #name, {                                                                                                           \
      [](ExperimentConfig &c, const std::string &v) { c.name = parse_u64(v, #name); },                                 \
          [](const ExperimentConfig &c) { return std::to_string(c.name); }                                             \
    }                                                                                                                  \
  }
#define WM_U32(name)                                                                                                   \
  {                                                                                                                    \
    #name, {                                                                                                           \
      [](ExperimentConfig &c, const std::string &v) { c.name = static_cast<std::uint32_t>(parse_u64(v, #name)); },     \
          [](const ExperimentConfig &c) { return std::to_string(c.name); }                                             \
    }                                                                                                                  \
  }
#define WM_DOUBLE(name)                                                                                                \
  {                                                                                                                    \
    #name, {                                                                                                           \
      [](ExperimentConfig &c, const std::string &v) { c.name = parse_double(v, #name); },                              \
          [](const ExperimentConfig &c) { return format_double(c.name); }                                              \
    }                                                                                                                  \
  }
#define WM_ENUM(name, parse, print)                                                                                    \
  {                                                                                                                    \
    #name, {                                                                                                           \
      [](ExperimentConfig &c, const std::string &v) { c.name = parse(v); },                                            \
          [](const ExperimentConfig &c) { return std::string(print(c.name)); }                                         \
    }                                                                                                                  \
  }
#define WM_SIZE_LIST(name)                                                                                             \
  {                                                                                                                    \
    #name, {                                                                                                           \
      [](ExperimentConfig &c, const std::string &v) {                                                                  \
        c.name.clear();                                                                                                \
        for (const auto &s : split_list(v)) c.name.push_back(static_cast<std::size_t>(parse_u64(s, #name)));           \
      },                                                                                                               \
          [](const ExperimentConfig &c) { return join(c.name, [](std::size_t x) { return std::to_string(x); }); }      \
    }                                                                                                                  \
  }
#define WM_DOUBLE_LIST(name)                                                                                           \
  {                                                                                                                    \
    #name, {                                                                                                           \
      [](ExperimentConfig &c, const std::string &v) {                                                                  \
        c.name.clear();                                                                                                \
        for (const auto &s : split_list(v)) c.name.push_back(parse_double(s, #name));                                  \
      },                                                                                                               \
          [](const ExperimentConfig &c) { return join(c.name, [](double x) { return format_double(x); }); }            \
    }                                                                                                                  \
  }

const std::map<std::string, Field> &fields() {
  static const std::map<std::string, Field> f = {
      WM_SIZE(vocab_size),
      WM_DOUBLE(zipf_exponent),
      WM_SIZE(max_branching),
      WM_DOUBLE(unigram_mix),
      WM_U64(language_seed),
      WM_SIZE(corpus_docs),
      WM_SIZE(corpus_doc_len),
      {"corpus_path",
       {[](ExperimentConfig &c, const std::string &v) { c.corpus_path = v; },
        [](const ExperimentConfig &c) { return c.corpus_path; }}},
      WM_SIZE(lm_order),
      WM_DOUBLE(lm_alpha),
      WM_DOUBLE(tau),
      WM_U32(lm_min_count),
      WM_ENUM(scheme, parse_scheme, scheme_name),
      WM_SIZE(h),
      WM_DOUBLE(gamma),
      WM_DOUBLE(delta),
      WM_DOUBLE(rho),
      WM_ENUM(variant, parse_hash_variant, to_string),
      WM_ENUM(dedup, parse_dedup_mode, to_string),
      WM_U64(key),
      {"per_trial_key",
       {[](ExperimentConfig &c, const std::string &v) { c.per_trial_key = parse_bool(v, "per_trial_key"); },
        [](const ExperimentConfig &c) { return std::string(c.per_trial_key ? "true" : "false"); }}},
      WM_SIZE(aar_h),
      WM_SIZE(kth_n_key),
      WM_SIZE(kth_shifts),
      WM_ENUM(kth_alignment, parse_kth_alignment, to_string),
      WM_SIZE(kth_pseudo_h),
      WM_ENUM(spoofer, parse_spoofer_kind, to_string),
      {"spoofers",
       {[](ExperimentConfig &c, const std::string &v) {
          c.spoofers.clear();
          for (const auto &s : split_list(v)) c.spoofers.push_back(parse_spoofer_kind(s));
        },
        [](const ExperimentConfig &c) {
          return join(c.spoofers, [](SpooferKind k) { return std::string(to_string(k)); });
        }}},
      WM_ENUM(knowledge, parse_knowledge_mode, to_string),
      WM_DOUBLE(spoof_beta),
      WM_DOUBLE(spoof_epsilon),
      WM_SIZE(dataset_docs),
      WM_SIZE(dataset_doc_len),
      WM_SIZE(distill_order),
      WM_DOUBLE(distill_alpha),
      WM_U32(distill_min_count),
      WM_ENUM(method, parse_method, to_string),
      WM_ENUM(score, parse_score_kind, to_string),
      WM_ENUM(sidedness, parse_sidedness, to_string),
      WM_SIZE(c),
      WM_SIZE(prompt_len),
      WM_SIZE(doc_len),
      WM_SIZE_LIST(t_grid),
      WM_DOUBLE_LIST(alpha_grid),
      WM_SIZE_LIST(h_grid),
      WM_DOUBLE_LIST(mix_grid),
      WM_DOUBLE_LIST(noise_grid),
      WM_SIZE_LIST(dataset_grid),
      WM_ENUM(run_mode, parse_run_mode, to_string),
      WM_SIZE(trials),
      WM_SIZE(token_budget),
      WM_SIZE(shuffle_len),
      {"shuffle_identity",
       {[](ExperimentConfig &c, const std::string &v) { c.shuffle_identity = parse_bool(v, "shuffle_identity"); },
        [](const ExperimentConfig &c) { return std::string(c.shuffle_identity ? "true" : "false"); }}},
      WM_SIZE(ablation_T),
      WM_DOUBLE(ablation_alpha),
      WM_SIZE(kth_recovery_len),
      WM_U64(seed),
      {"out_dir",
       {[](ExperimentConfig &c, const std::string &v) { c.out_dir = v; },
        [](const ExperimentConfig &c) { return c.out_dir; }}},
  };
  return f;
}

#undef WM_SIZE
#undef WM_U64
#undef WM_U32
#undef WM_DOUBLE
#undef WM_ENUM
#undef WM_SIZE_LIST
#undef WM_DOUBLE_LIST

void require(bool ok, const std::string &msg) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, msg);
}

} // namespace

void ExperimentConfig::set(const std::string &k, const std::string &value) {
  const auto it = fields().find(k);
  if (it == fields().end()) throw Error(ErrorCode::InvalidArgument, "unknown config key '" + k + "'");
  it->second.set(*this, value);
}

ExperimentConfig ExperimentConfig::parse(std::istream &in) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidArgument, "config line " + std::to_string(lineno) + " is not key=value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
  return parse(in);
}

std::string ExperimentConfig::echo() const {
  std::string out;
  for (const auto &[k, f] : fields()) out += k + "=" + f.get(*this) + "\n";
  return out;
}

std::size_t ExperimentConfig::trials_for(std::size_t T) const {
  if (run_mode == RunMode::Trials) return trials;
  return std::max<std::size_t>(1, token_budget / std::max<std::size_t>(T, 1));
}

void ExperimentConfig::validate() const {
  require(vocab_size >= 2, "vocab_size must be >= 2");
  require(corpus_docs >= 1, "corpus_docs must be >= 1");
  require(corpus_doc_len >= prompt_len, "corpus_doc_len must cover prompt_len");
  require(lm_order >= 1, "lm_order must be >= 1");
  require(lm_alpha > 0.0, "lm_alpha must be > 0");
  require(tau > 0.0, "tau must be > 0");
  redgreen().validate();
  aar().validate();
  kth().validate();
  require(c >= 1, "c must be >= 1");
  require(prompt_len >= std::max({h, aar_h, std::size_t{1}}), "prompt_len must cover the watermark context");
  require(doc_len >= 1, "doc_len must be >= 1");
  require(trials >= 1, "trials must be >= 1");
  require(token_budget >= 1, "token_budget must be >= 1");
  require(!t_grid.empty(), "t_grid must not be empty");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    require(t_grid[i] >= 1 && t_grid[i] % doc_len == 0, "every T must be a positive multiple of doc_len");
    require(i == 0 || t_grid[i] > t_grid[i - 1], "t_grid must be strictly ascending");
  }
  require(ablation_T >= 1 && ablation_T % doc_len == 0, "ablation_T must be a positive multiple of doc_len");
  require(ablation_alpha >= 0.0 && ablation_alpha <= 1.0, "ablation_alpha must lie in [0, 1]");
  for (double a : alpha_grid) require(a >= 0.0 && a <= 1.0, "alpha values must lie in [0, 1]");
  require(!h_grid.empty(), "h_grid must not be empty");
  for (std::size_t v : h_grid) require(v >= 1 && v <= prompt_len, "h_grid entries must lie in [1, prompt_len]");
  for (double m : mix_grid) require(m >= 0.0 && m < 1.0, "mix values must lie in [0, 1)");
  for (double e : noise_grid) require(e >= 0.0, "noise values must be >= 0");
  require(!dataset_grid.empty(), "dataset_grid must not be empty");
  for (std::size_t d : dataset_grid) require(d >= 1, "dataset sizes must be >= 1");
  require(dataset_docs >= 1 && dataset_doc_len >= 1, "dataset must be nonempty");
  require(!spoofers.empty(), "spoofers must not be empty");
  require(spoof_beta >= 0.0, "spoof_beta must be >= 0");
  require(spoof_epsilon > 0.0, "spoof_epsilon must be > 0");
  require(shuffle_len >= 1, "shuffle_len must be >= 1");
  require(kth_recovery_len >= 1, "kth_recovery_len must be >= 1");
}

RedGreenParams ExperimentConfig::redgreen() const {
  RedGreenParams p;
  p.h = h;
  p.gamma = gamma;
  p.delta = delta;
  p.rho = rho;
  p.variant = variant;
  p.key = WatermarkKey{key};
  p.vocab_size = vocab_size;
  p.dedup = dedup;
  return p;
}

AarParams ExperimentConfig::aar() const {
  AarParams p;
  p.h = aar_h;
  p.key = WatermarkKey{key};
  p.vocab_size = vocab_size;
  p.dedup = dedup;
  return p;
}

KthParams ExperimentConfig::kth() const {
  KthParams p;
  p.n_key = kth_n_key;
  p.shifts = kth_shifts;
  p.key = WatermarkKey{key};
  p.vocab_size = vocab_size;
  p.alignment = kth_alignment;
  p.pseudo_h = kth_pseudo_h;
  p.dedup = dedup;
  return p;
}

CurvePoint rate_point(double x, std::size_t hits, std::size_t n) {
  CurvePoint p;
  p.x = x;
  p.n = n;
  if (n == 0) {
    p.ci_high = 1.0;
    return p;
  }
  p.rate = static_cast<double>(hits) / static_cast<double>(n);
  const auto [lo, hi] = stat::binomial_ci(hits, n);
  p.ci_low = std::min(lo, p.rate);
  p.ci_high = std::max(hi, p.rate);
  return p;
}

// ---------------------------------------------------------------------------
// World

RngStream unit_rng(std::uint64_t master, std::string_view experiment, std::uint64_t unit) {
  return RngStream(trial_seed(master, hash_name(experiment), unit), 0);
}

World build_world(const ExperimentConfig &cfg) {
  World w;
  w.cfg = cfg;
  if (cfg.corpus_path.empty()) {
    SyntheticLanguageConfig lc;
    lc.vocab_size = cfg.vocab_size;
    lc.zipf_exponent = cfg.zipf_exponent;
    lc.max_branching = cfg.max_branching;
    lc.unigram_mix = cfg.unigram_mix;
    lc.seed = cfg.language_seed;
    auto lang = std::make_shared<SyntheticLanguage>(lc);
    RngStream a(cfg.language_seed, 1), b(cfg.language_seed, 2), c(cfg.language_seed, 3);
    w.provider_corpus = lang->sample_corpus(cfg.corpus_docs, cfg.corpus_doc_len, a);
    w.reference_corpus = lang->sample_corpus(cfg.corpus_docs, cfg.corpus_doc_len, b);
    w.spoofer_corpus = lang->sample_corpus(cfg.corpus_docs, cfg.corpus_doc_len, c);
    w.language = std::move(lang);
  } else {
    // A user corpus is dealt round-robin into the three roles.
    Corpus all = ingest_corpus(cfg.corpus_path);
    all.vocab.freeze();
    Corpus *roles[3] = {&w.provider_corpus, &w.reference_corpus, &w.spoofer_corpus};
    for (Corpus *r : roles) r->vocab = all.vocab;
    for (std::size_t i = 0; i < all.documents.size(); ++i) roles[i % 3]->documents.push_back(all.documents[i]);
    for (Corpus *r : roles)
      if (r->documents.empty()) throw Error(ErrorCode::EmptyCorpus, "user corpus needs at least three documents");
    w.cfg.vocab_size = all.vocab.size();
  }
  MarkovOptions o;
  o.order = cfg.lm_order;
  o.alpha = cfg.lm_alpha;
  o.temperature = cfg.tau;
  o.min_context_count = cfg.lm_min_count;
  w.provider_lm = train_markov(w.provider_corpus, o);
  w.aux_lm = train_markov(w.spoofer_corpus, o);
  return w;
}

TokenSeq prompt_for(const World &world, std::size_t index, std::size_t prompt_len) {
  const auto &docs = world.reference_corpus.documents;
  const TokenSeq &d = docs[index % docs.size()];
  return TokenSeq(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(std::min(prompt_len, d.size())));
}

SpoofKit build_spoof_kit(const World &world, const ExperimentConfig &cfg, SpooferKind kind, std::size_t dataset_docs) {
  SpoofKit kit;
  RedGreenParams rg = cfg.redgreen();
  rg.vocab_size = world.provider_lm.vocab_size();
  kit.config.kind = kind;
  kit.config.mode = cfg.knowledge;
  kit.config.beta = cfg.spoof_beta;
  kit.config.epsilon = cfg.spoof_epsilon;
  kit.config.h = cfg.h;
  kit.config.variant = cfg.variant;
  kit.config.distill_order = cfg.distill_order;
  kit.config.distill_alpha = cfg.distill_alpha;
  kit.config.distill_min_count = cfg.distill_min_count;
  kit.config.oracle_params = rg;
  std::vector<TokenSeq> prompts;
  for (const auto &d : world.spoofer_corpus.documents)
    prompts.emplace_back(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(std::min(cfg.prompt_len, d.size())));
  // One stream for every size: smaller datasets are prefixes of larger ones.
  RngStream rng = unit_rng(cfg.seed, "dataset", 0);
  kit.dataset = build_dataset(world.provider_lm, rg, prompts, dataset_docs, cfg.dataset_doc_len, rng);
  kit.knowledge = learn_knowledge(kit.dataset, kit.config, &world.spoofer_corpus);
  return kit;
}

// ---------------------------------------------------------------------------
// Output

void write_text(const std::filesystem::path &path, const std::string &content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

namespace {

std::string xml_escape(const std::string &s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
    case '&': out += "&amp;"; break;
    case '<': out += "&lt;"; break;
    case '>': out += "&gt;"; break;
    default: out += ch;
    }
  }
  return out;
}

constexpr double kW = 640, kH = 400, kMargin = 50;

std::string svg_open(const std::string &title) {
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" viewBox=\"0 0 " << kW
    << " " << kH << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
    << xml_escape(title) << "</text>\n"
    << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin << "\" y2=\"" << kH - kMargin
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\"" << kH - kMargin
    << "\" stroke=\"black\"/>\n";
  return o.str();
}

std::string axis_labels(double x0, double x1, double y0, double y1, const std::string &xl, const std::string &yl) {
  std::ostringstream o;
  const auto txt = [&](double x, double y, const std::string &s, const char *anchor) {
    o << "<text x=\"" << format_double(x) << "\" y=\"" << format_double(y) << "\" text-anchor=\"" << anchor
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(s) << "</text>\n";
  };
  txt(kMargin, kH - kMargin + 16, format_double(x0), "middle");
  txt(kW - kMargin, kH - kMargin + 16, format_double(x1), "middle");
  txt(kMargin - 4, kH - kMargin, format_double(y0), "end");
  txt(kMargin - 4, kMargin + 4, format_double(y1), "end");
  txt(kW / 2, kH - 12, xl, "middle");
  txt(14, kH / 2, yl, "middle");
  return o.str();
}

} // namespace

std::string histogram_svg(const std::string &title, const std::vector<double> &values, std::size_t bins) {
  std::string out = svg_open(title);
  std::vector<double> finite;
  for (double v : values)
    if (std::isfinite(v)) finite.push_back(v);
  if (finite.empty() || bins == 0) return out + "</svg>\n";
  const auto [mn, mx] = std::minmax_element(finite.begin(), finite.end());
  const double lo = *mn, hi = *mx > *mn ? *mx : *mn + 1.0;
  std::vector<std::size_t> counts(bins, 0);
  for (double v : finite) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    ++counts[std::min(b, bins - 1)];
  }
  const double top = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
  const double bw = (kW - 2 * kMargin) / static_cast<double>(bins);
  std::ostringstream o;
  for (std::size_t b = 0; b < bins; ++b) {
    const double hgt = (kH - 2 * kMargin) * static_cast<double>(counts[b]) / top;
    o << "<rect x=\"" << format_double(kMargin + bw * static_cast<double>(b)) << "\" y=\""
      << format_double(kH - kMargin - hgt) << "\" width=\"" << format_double(bw) << "\" height=\"" << format_double(hgt)
      << "\" fill=\"steelblue\" stroke=\"white\"/>\n";
  }
  return out + o.str() + axis_labels(lo, hi, 0, top, "value", "count") + "</svg>\n";
}

std::string line_svg(const std::string &title, const std::string &x_label, const std::string &y_label,
                     const std::vector<Series> &series) {
  static const char *colors[] = {"steelblue", "firebrick", "darkgreen", "darkorange", "purple", "gray"};
  std::string out = svg_open(title);
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto &s : series)
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (first) x0 = x1 = s.x[i], y0 = y1 = s.y[i], first = false;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  std::ostringstream o;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto &s = series[k];
    const char *color = colors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      o << format_double(kMargin + (s.x[i] - x0) / (x1 - x0) * (kW - 2 * kMargin)) << ","
        << format_double(kH - kMargin - (s.y[i] - y0) / (y1 - y0) * (kH - 2 * kMargin)) << " ";
    }
    o << "\"/>\n<text x=\"" << kW - kMargin + 4 << "\" y=\"" << format_double(kMargin + 14.0 * static_cast<double>(k))
      << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << color << "\" text-anchor=\"end\">"
      << xml_escape(s.name) << "</text>\n";
  }
  return out + o.str() + axis_labels(x0, x1, y0, y1, x_label, y_label) + "</svg>\n";
}

} // namespace wmlab
