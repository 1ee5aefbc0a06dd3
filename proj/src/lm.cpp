#include "wmlab/lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace wmlab {

Vocabulary::Vocabulary() {
  symbols_.emplace_back(kUnkSymbol);
  ids_.emplace(std::string(kUnkSymbol), kUnk);
}

Vocabulary Vocabulary::synthetic(std::size_t size) {
  if (size < 2) throw Error(ErrorCode::InvalidArgument, "vocabulary size must be >= 2");
  Vocabulary v;
  for (std::size_t i = 1; i < size; ++i) v.intern("w" + std::to_string(i));
  v.freeze();
  return v;
}

TokenId Vocabulary::intern(std::string_view symbol) {
  if (auto it = ids_.find(std::string(symbol)); it != ids_.end()) return it->second;
  if (frozen_) return kUnk;
  const auto id = static_cast<TokenId>(symbols_.size());
  symbols_.emplace_back(symbol);
  ids_.emplace(std::string(symbol), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view symbol) const {
  if (auto it = ids_.find(std::string(symbol)); it != ids_.end()) return it->second;
  return std::nullopt;
}

const std::string &Vocabulary::symbol(TokenId id) const {
  if (id >= symbols_.size()) throw Error(ErrorCode::InvalidArgument, "token id out of range");
  return symbols_[id];
}

std::size_t Corpus::total_tokens() const noexcept {
  std::size_t n = 0;
  for (const auto &d : documents) n += d.size();
  return n;
}

Corpus parse_corpus(std::istream &in, std::optional<Vocabulary> vocab) {
  Corpus corpus;
  corpus.vocab = vocab ? std::move(*vocab) : Vocabulary{};
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    TokenSeq doc;
    std::string w;
    while (words >> w) doc.push_back(corpus.vocab.intern(w));
    if (!doc.empty()) corpus.documents.push_back(std::move(doc));
  }
  if (corpus.documents.empty()) throw Error(ErrorCode::EmptyCorpus, "corpus contains no tokens");
  return corpus;
}

Corpus ingest_corpus(const std::filesystem::path &path, std::optional<Vocabulary> vocab) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read corpus " + path.string());
  return parse_corpus(in, std::move(vocab));
}

void write_corpus(std::ostream &out, const std::vector<TokenSeq> &docs, const Vocabulary &vocab) {
  for (const auto &doc : docs) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (i) out << ' ';
      out << vocab.symbol(doc[i]);
    }
    out << '\n';
  }
}

void write_corpus(const std::filesystem::path &path, const std::vector<TokenSeq> &docs, const Vocabulary &vocab) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write corpus " + path.string());
  write_corpus(out, docs, vocab);
}

// ---------------------------------------------------------------------------
// MarkovLM

MarkovLM train_markov(const Corpus &corpus, const MarkovOptions &opts) {
  if (opts.order < 1) throw Error(ErrorCode::InvalidArgument, "Markov order must be >= 1");
  if (!(opts.alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing alpha must be > 0");
  if (!(opts.temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  if (corpus.total_tokens() < opts.order + 1)
    throw Error(ErrorCode::TextTooShort, "corpus shorter than order + 1 tokens");

  MarkovLM lm;
  lm.opts_ = opts;
  lm.vocab_ = corpus.vocab;
  lm.tables_.resize(opts.order + 1);

  struct Obs {
    std::uint64_t ctx;
    TokenId token;
    bool operator<(const Obs &o) const { return ctx != o.ctx ? ctx < o.ctx : token < o.token; }
  };
  for (std::size_t j = 0; j <= opts.order; ++j) {
    std::vector<Obs> obs;
    obs.reserve(corpus.total_tokens());
    for (const auto &doc : corpus.documents) {
      for (std::size_t t = j; t < doc.size(); ++t) {
        const std::span<const TokenId> ctx(doc.data() + t - j, j);
        obs.push_back({ordered_digest(ctx), doc[t]});
      }
    }
    std::sort(obs.begin(), obs.end());
    auto &table = lm.tables_[j];
    table.contexts.reserve(obs.size() / 2 + 1);
    std::size_t i = 0;
    while (i < obs.size()) {
      MarkovLM::ContextSlice slice;
      slice.offset = static_cast<std::uint32_t>(table.entries.size());
      const std::uint64_t ctx = obs[i].ctx;
      while (i < obs.size() && obs[i].ctx == ctx) {
        std::size_t k = i;
        while (k < obs.size() && obs[k].ctx == ctx && obs[k].token == obs[i].token) ++k;
        table.entries.push_back({obs[i].token, static_cast<std::uint32_t>(k - i)});
        slice.total += k - i;
        i = k;
      }
      slice.length = static_cast<std::uint32_t>(table.entries.size()) - slice.offset;
      table.contexts.emplace(ctx, slice);
    }
  }
  return lm;
}

MarkovLM MarkovLM::with_temperature(double tau) const {
  if (!(tau > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be > 0");
  MarkovLM copy = *this;
  copy.opts_.temperature = tau;
  return copy;
}

const MarkovLM::ContextSlice *MarkovLM::lookup(std::span<const TokenId> context, std::size_t &table_index) const {
  const std::size_t max_j = std::min(opts_.order, context.size());
  const std::size_t min_j = opts_.backoff ? 1 : std::max<std::size_t>(max_j, 1);
  for (std::size_t j = max_j; j >= min_j; --j) {
    const auto window = context.subspan(context.size() - j, j);
    const auto &table = tables_[j];
    if (auto it = table.contexts.find(ordered_digest(window)); it != table.contexts.end()) {
      if (it->second.total >= opts_.min_context_count) {
        table_index = j;
        return &it->second;
      }
    }
  }
  if (!opts_.backoff) {
    table_index = max_j;
    return nullptr;
  }
  table_index = 0;
  const auto it = tables_[0].contexts.find(ordered_digest({}));
  return it == tables_[0].contexts.end() ? nullptr : &it->second;
}

std::size_t MarkovLM::effective_order(std::span<const TokenId> context) const {
  std::size_t j = 0;
  lookup(context, j);
  return j;
}

void MarkovLM::logits_into(std::span<const TokenId> context, std::vector<double> &out) const {
  const std::size_t v = vocab_size();
  out.resize(v);
  std::size_t j = 0;
  const ContextSlice *slice = lookup(context, j);
  const double total = slice ? static_cast<double>(slice->total) : 0.0;
  const double denom = std::log(total + opts_.alpha * static_cast<double>(v));
  const double inv_tau = 1.0 / opts_.temperature;
  const double base = (std::log(opts_.alpha) - denom) * inv_tau;
  std::fill(out.begin(), out.end(), base);
  if (slice) {
    const auto &entries = tables_[j].entries;
    for (std::uint32_t i = 0; i < slice->length; ++i) {
      const Entry &e = entries[slice->offset + i];
      if (e.token < v) out[e.token] = (std::log(e.count + opts_.alpha) - denom) * inv_tau;
    }
  }
}

std::vector<double> MarkovLM::logits(std::span<const TokenId> context) const {
  std::vector<double> out;
  logits_into(context, out);
  return out;
}

double MarkovLM::probability(std::span<const TokenId> context, TokenId token) const {
  std::size_t j = 0;
  const ContextSlice *slice = lookup(context, j);
  const double v = static_cast<double>(vocab_size());
  double count = 0.0;
  double total = 0.0;
  if (slice) {
    total = static_cast<double>(slice->total);
    const auto &entries = tables_[j].entries;
    for (std::uint32_t i = 0; i < slice->length; ++i) {
      if (entries[slice->offset + i].token == token) count = entries[slice->offset + i].count;
    }
  }
  return (count + opts_.alpha) / (total + opts_.alpha * v);
}

void MarkovLM::save(std::ostream &out) const {
  out << "wmlab-markov 1\n";
  out.precision(17);
  out << "order " << opts_.order << "\nalpha " << opts_.alpha << "\ntemperature " << opts_.temperature
      << "\nmin_context_count " << opts_.min_context_count << "\nbackoff " << (opts_.backoff ? 1 : 0) << "\n";
  out << "vocab " << vocab_.size() << "\n";
  for (std::size_t i = 0; i < vocab_.size(); ++i) out << vocab_.symbol(static_cast<TokenId>(i)) << "\n";
  for (std::size_t j = 0; j < tables_.size(); ++j) {
    const auto &table = tables_[j];
    // Sorted by digest so that saved files are byte-stable.
    std::vector<std::pair<std::uint64_t, ContextSlice>> ordered(table.contexts.begin(), table.contexts.end());
    std::sort(ordered.begin(), ordered.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
    out << "table " << j << " " << ordered.size() << "\n";
    for (const auto &[digest, slice] : ordered) {
      out << digest << " " << slice.length;
      for (std::uint32_t i = 0; i < slice.length; ++i) {
        const Entry &e = table.entries[slice.offset + i];
        out << " " << e.token << ":" << e.count;
      }
      out << "\n";
    }
  }
}

MarkovLM MarkovLM::load(std::istream &in) {
  const auto fail = [](const std::string &what) { return Error(ErrorCode::Io, "malformed model file: " + what); };
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "wmlab-markov" || version != 1) throw fail("header");
  MarkovLM lm;
  std::string key;
  std::size_t vocab_n = 0;
  in >> key >> lm.opts_.order;
  if (key != "order") throw fail("order");
  in >> key >> lm.opts_.alpha;
  if (key != "alpha") throw fail("alpha");
  in >> key >> lm.opts_.temperature;
  if (key != "temperature") throw fail("temperature");
  in >> key >> lm.opts_.min_context_count;
  if (key != "min_context_count") throw fail("min_context_count");
  int backoff = 1;
  in >> key >> backoff;
  if (key != "backoff") throw fail("backoff");
  lm.opts_.backoff = backoff != 0;
  in >> key >> vocab_n;
  if (key != "vocab" || vocab_n < 1) throw fail("vocab");
  std::string sym;
  in >> sym; // <unk>
  for (std::size_t i = 1; i < vocab_n; ++i) {
    if (!(in >> sym)) throw fail("vocab symbols");
    lm.vocab_.intern(sym);
  }
  lm.vocab_.freeze();
  lm.tables_.resize(lm.opts_.order + 1);
  for (std::size_t j = 0; j <= lm.opts_.order; ++j) {
    std::size_t idx = 0, n = 0;
    if (!(in >> key >> idx >> n) || key != "table" || idx != j) throw fail("table header");
    auto &table = lm.tables_[j];
    for (std::size_t c = 0; c < n; ++c) {
      std::uint64_t digest = 0;
      std::uint32_t len = 0;
      if (!(in >> digest >> len)) throw fail("context row");
      ContextSlice slice;
      slice.offset = static_cast<std::uint32_t>(table.entries.size());
      slice.length = len;
      for (std::uint32_t i = 0; i < len; ++i) {
        std::string pair;
        in >> pair;
        const auto colon = pair.find(':');
        if (colon == std::string::npos) throw fail("entry");
        const auto tok = static_cast<TokenId>(std::stoul(pair.substr(0, colon)));
        const auto cnt = static_cast<std::uint32_t>(std::stoul(pair.substr(colon + 1)));
        table.entries.push_back({tok, cnt});
        slice.total += cnt;
      }
      table.contexts.emplace(digest, slice);
    }
  }
  return lm;
}

void MarkovLM::save(const std::filesystem::path &path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write model " + path.string());
  save(out);
}

MarkovLM MarkovLM::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read model " + path.string());
  return load(in);
}

// ---------------------------------------------------------------------------
// Sampling

double softmax_inplace(std::vector<double> &v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double &x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double &x : v) x /= sum;
  return mx + std::log(sum);
}

TokenId sample(std::span<const double> logits, RngStream &rng) {
  if (logits.empty()) throw Error(ErrorCode::InvalidArgument, "empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  double u = rng.uniform() * sum;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    u -= std::exp(logits[i] - mx);
    if (u < 0.0) return static_cast<TokenId>(i);
  }
  // Rounding left a sliver of mass: return the last token with non-negligible weight.
  for (std::size_t i = logits.size(); i-- > 0;) {
    if (std::exp(logits[i] - mx) > 0.0) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(logits.size() - 1);
}

double softmax_entropy(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  softmax_inplace(p);
  double h = 0.0;
  for (double q : p) {
    if (q > 0.0) h -= q * std::log(q);
  }
  return h;
}

TokenSeq generate_plain(const MarkovLM &lm, const TokenSeq &prompt, std::size_t length, RngStream &rng) {
  TokenSeq context = prompt;
  TokenSeq out;
  out.reserve(length);
  std::vector<double> logits;
  for (std::size_t i = 0; i < length; ++i) {
    lm.logits_into(context, logits);
    const TokenId next = sample(logits, rng);
    out.push_back(next);
    context.push_back(next);
  }
  return out;
}

// ---------------------------------------------------------------------------
// SyntheticLanguage

SyntheticLanguage::SyntheticLanguage(const SyntheticLanguageConfig &cfg)
    : cfg_(cfg), vocab_(Vocabulary::synthetic(cfg.vocab_size)) {
  if (cfg.vocab_size < 3) throw Error(ErrorCode::InvalidArgument, "synthetic vocabulary needs >= 3 ids");
  if (cfg.max_branching < 1) throw Error(ErrorCode::InvalidArgument, "max_branching must be >= 1");
  const std::size_t v = cfg.vocab_size;
  RngStream rng(cfg.seed, hash_name("synthetic-language"));

  // Frequency ranks are assigned to a random permutation of ids so that id
  // sums carry no frequency information.
  std::vector<TokenId> by_rank;
  for (TokenId i = 1; i < v; ++i) by_rank.push_back(i);
  shuffle(by_rank, rng);
  unigram_.assign(v, 0.0);
  for (std::size_t r = 0; r < by_rank.size(); ++r)
    unigram_[by_rank[r]] = 1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent);
  double total = 0.0;
  for (double u : unigram_) total += u;
  for (double &u : unigram_) u /= total;
  unigram_cdf_.resize(v);
  double acc = 0.0;
  for (std::size_t i = 0; i < v; ++i) unigram_cdf_[i] = (acc += unigram_[i]);

  successors_.resize(v);
  successor_cdf_.resize(v);
  const double log_max = std::log(static_cast<double>(cfg.max_branching));
  for (TokenId a = 0; a < v; ++a) {
    const auto branching = static_cast<std::size_t>(std::floor(std::exp(rng.uniform() * log_max)));
    std::vector<TokenId> succ;
    std::vector<double> weight;
    for (std::size_t tries = 0; succ.size() < branching && tries < 50 * branching; ++tries) {
      const TokenId cand = draw_unigram(rng);
      if (std::find(succ.begin(), succ.end(), cand) != succ.end()) continue;
      succ.push_back(cand);
      weight.push_back(rng.exponential());
    }
    double wsum = 0.0;
    for (double w : weight) wsum += w;
    std::vector<double> cdf;
    double c = 0.0;
    for (double w : weight) cdf.push_back(c += w / wsum);
    successors_[a] = std::move(succ);
    successor_cdf_[a] = std::move(cdf);
  }
}

TokenId SyntheticLanguage::draw_unigram(RngStream &rng) const {
  const double u = rng.uniform();
  auto it = std::upper_bound(unigram_cdf_.begin(), unigram_cdf_.end(), u);
  if (it == unigram_cdf_.end()) --it;
  auto id = static_cast<TokenId>(it - unigram_cdf_.begin());
  return id == Vocabulary::kUnk ? 1 : id;
}

double SyntheticLanguage::transition_probability(TokenId prev, TokenId next) const {
  double p = cfg_.unigram_mix * unigram_[next];
  const auto &succ = successors_[prev];
  const auto &cdf = successor_cdf_[prev];
  for (std::size_t i = 0; i < succ.size(); ++i) {
    if (succ[i] == next) p += (1.0 - cfg_.unigram_mix) * (cdf[i] - (i ? cdf[i - 1] : 0.0));
  }
  return p;
}

TokenSeq SyntheticLanguage::sample_document(std::size_t length, RngStream &rng) const {
  TokenSeq doc;
  doc.reserve(length);
  if (length == 0) return doc;
  doc.push_back(draw_unigram(rng));
  while (doc.size() < length) {
    const TokenId prev = doc.back();
    if (rng.uniform() < cfg_.unigram_mix || successors_[prev].empty()) {
      doc.push_back(draw_unigram(rng));
      continue;
    }
    const auto &cdf = successor_cdf_[prev];
    auto it = std::upper_bound(cdf.begin(), cdf.end(), rng.uniform());
    if (it == cdf.end()) --it;
    doc.push_back(successors_[prev][static_cast<std::size_t>(it - cdf.begin())]);
  }
  return doc;
}

Corpus SyntheticLanguage::sample_corpus(std::size_t documents, std::size_t doc_length, RngStream &rng) const {
  Corpus c;
  c.vocab = vocab_;
  c.documents.reserve(documents);
  for (std::size_t i = 0; i < documents; ++i) c.documents.push_back(sample_document(doc_length, rng));
  return c;
}

} // namespace wmlab
