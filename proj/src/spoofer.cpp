#include "wmlab/spoofer.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace wmlab {

const char *to_string(SpooferKind k) {
  switch (k) {
  case SpooferKind::Oracle: return "oracle";
  case SpooferKind::Stealing: return "stealing";
  case SpooferKind::Distill: return "distill";
  }
  return "?";
}

const char *to_string(KnowledgeMode m) {
  switch (m) {
  case KnowledgeMode::Indicator: return "indicator";
  case KnowledgeMode::Frequency: return "frequency";
  case KnowledgeMode::RatioScore: return "ratio";
  }
  return "?";
}

SpooferKind parse_spoofer_kind(std::string_view s) {
  if (s == "oracle") return SpooferKind::Oracle;
  if (s == "stealing") return SpooferKind::Stealing;
  if (s == "distill") return SpooferKind::Distill;
  throw Error(ErrorCode::InvalidArgument, "unknown spoofer kind '" + std::string(s) + "'");
}

KnowledgeMode parse_knowledge_mode(std::string_view s) {
  if (s == "indicator") return KnowledgeMode::Indicator;
  if (s == "frequency") return KnowledgeMode::Frequency;
  if (s == "ratio") return KnowledgeMode::RatioScore;
  throw Error(ErrorCode::InvalidArgument, "unknown knowledge mode '" + std::string(s) + "'");
}

void SpooferConfig::validate() const {
  if (!(beta >= 0.0)) throw Error(ErrorCode::InvalidArgument, "spoofer boost beta must be >= 0");
  if (h < 1) throw Error(ErrorCode::InvalidArgument, "assumed context size must be >= 1");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "ratio smoothing epsilon must be > 0");
  if (kind == SpooferKind::Distill && distill_order != 0 && distill_order < h)
    throw Error(ErrorCode::InvalidArgument, "distill order must be >= h");
  if (kind == SpooferKind::Oracle && !oracle_params)
    throw Error(ErrorCode::InvalidArgument, "oracle spoofer needs the true watermark parameters");
}

SpoofDataset make_dataset(std::vector<TokenSeq> documents, Vocabulary vocab) {
  SpoofDataset ds;
  ds.documents = std::move(documents);
  ds.vocab = std::move(vocab);
  for (const auto &d : ds.documents) ds.total_tokens += d.size();
  ds.meta["documents"] = std::to_string(ds.documents.size());
  ds.meta["total_tokens"] = std::to_string(ds.total_tokens);
  return ds;
}

SpoofDataset build_dataset(const MarkovLM &lm, const RedGreenParams &params, const std::vector<TokenSeq> &prompts,
                           std::size_t n_docs, std::size_t doc_len, RngStream &rng, bool filter_detected) {
  if (n_docs < 1) throw Error(ErrorCode::InvalidArgument, "dataset needs at least one document");
  if (prompts.empty()) throw Error(ErrorCode::InvalidArgument, "dataset needs at least one prompt");
  RedGreenWatermark wm(params);
  std::vector<TokenSeq> docs;
  docs.reserve(n_docs);
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < n_docs; ++i) {
    auto doc = wm.generate(lm, prompts[i % prompts.size()], doc_len, rng);
    if (filter_detected && !(doc.size() > params.h && wm.detect(doc).watermarked)) {
      ++dropped;
      continue;
    }
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw Error(ErrorCode::EmptyDataset, "every generated document was filtered out");
  SpoofDataset ds = make_dataset(std::move(docs), lm.vocab());
  ds.meta["requested_documents"] = std::to_string(n_docs);
  ds.meta["filtered_out"] = std::to_string(dropped);
  ds.meta["doc_len"] = std::to_string(doc_len);
  ds.meta["h"] = std::to_string(params.h);
  ds.meta["gamma"] = std::to_string(params.gamma);
  ds.meta["delta"] = std::to_string(params.delta);
  ds.meta["variant"] = to_string(params.variant);
  ds.meta["rng_seed"] = std::to_string(rng.seed());
  ds.meta["rng_stream"] = std::to_string(rng.stream());
  return ds;
}

void save_dataset(const std::filesystem::path &path, const SpoofDataset &ds) {
  write_corpus(path, ds.documents, ds.vocab);
  std::ofstream meta(path.string() + ".meta");
  if (!meta) throw Error(ErrorCode::Io, "cannot write dataset metadata for " + path.string());
  auto entries = ds.meta;
  entries["documents"] = std::to_string(ds.documents.size());
  entries["total_tokens"] = std::to_string(ds.total_tokens);
  for (const auto &[k, v] : entries) meta << k << "=" << v << "\n";
}

SpoofDataset load_dataset(const std::filesystem::path &path, const Vocabulary &vocab) {
  Corpus c = ingest_corpus(path, vocab);
  SpoofDataset ds = make_dataset(std::move(c.documents), std::move(c.vocab));
  std::ifstream meta(path.string() + ".meta");
  std::string line;
  while (meta && std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    ds.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return ds;
}

// ---------------------------------------------------------------------------

std::span<const KnowledgeTable::Known> KnowledgeTable::known(std::span<const TokenId> context) const {
  if (context.size() < h_) return {};
  const auto it = rows_.find(ordered_digest(context.subspan(context.size() - h_)));
  if (it == rows_.end()) return {};
  return it->second.known;
}

double KnowledgeTable::value(std::span<const TokenId> context, TokenId token) const {
  for (const Known &k : known(context))
    if (k.token == token) return k.value;
  return 0.0;
}

std::uint32_t KnowledgeTable::count(std::span<const TokenId> context, TokenId token) const {
  if (context.size() < h_) return 0;
  const auto it = rows_.find(ordered_digest(context.subspan(context.size() - h_)));
  if (it == rows_.end()) return 0;
  const auto &row = it->second;
  for (std::size_t i = 0; i < row.known.size(); ++i)
    if (row.known[i].token == token) return row.counts[i];
  return 0;
}

namespace {

// (context digest, token) -> count over every document.
std::unordered_map<std::uint64_t, std::unordered_map<TokenId, std::uint32_t>>
count_grams(const std::vector<TokenSeq> &docs, std::size_t h) {
  std::unordered_map<std::uint64_t, std::unordered_map<TokenId, std::uint32_t>> out;
  for (const auto &d : docs)
    for (std::size_t t = h; t < d.size(); ++t) ++out[ordered_digest(std::span<const TokenId>(d.data() + t - h, h))][d[t]];
  return out;
}

} // namespace

KnowledgeTable learn_knowledge(const SpoofDataset &dataset, const SpooferConfig &cfg, const Corpus *base) {
  cfg.validate();
  if (dataset.documents.empty() || dataset.total_tokens == 0) throw Error(ErrorCode::EmptyDataset, "dataset is empty");
  if (cfg.mode == KnowledgeMode::RatioScore && !base)
    throw Error(ErrorCode::InvalidArgument, "ratio scores need a base corpus");

  KnowledgeTable kt;
  kt.mode_ = cfg.mode;
  kt.h_ = cfg.h;
  const auto d_counts = count_grams(dataset.documents, cfg.h);
  std::unordered_map<std::uint64_t, std::unordered_map<TokenId, std::uint32_t>> base_counts;
  if (cfg.mode == KnowledgeMode::RatioScore) {
    if (base->total_tokens() == 0) throw Error(ErrorCode::EmptyCorpus, "base corpus is empty");
    base_counts = count_grams(base->documents, cfg.h);
    kt.lambda_ = static_cast<double>(dataset.total_tokens) / static_cast<double>(base->total_tokens());
  }
  for (const auto &[ctx, tokens] : d_counts) {
    auto &row = kt.rows_[ctx];
    const auto *base_row = [&]() -> const std::unordered_map<TokenId, std::uint32_t> * {
      const auto it = base_counts.find(ctx);
      return it == base_counts.end() ? nullptr : &it->second;
    }();
    for (const auto &[tok, c] : tokens) {
      double v = 1.0;
      if (cfg.mode == KnowledgeMode::Frequency) v = static_cast<double>(c);
      if (cfg.mode == KnowledgeMode::RatioScore) {
        double cb = 0.0;
        if (base_row)
          if (const auto it = base_row->find(tok); it != base_row->end()) cb = static_cast<double>(it->second);
        v = c / (c + kt.lambda_ * cb + cfg.epsilon);
      }
      row.known.push_back({tok, v});
      row.counts.push_back(c);
      ++kt.grams_;
    }
    // Deterministic order independent of hash-map iteration.
    std::vector<std::size_t> idx(row.known.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row.known[a].token < row.known[b].token; });
    std::vector<KnowledgeTable::Known> known;
    std::vector<std::uint32_t> counts;
    for (std::size_t i : idx) known.push_back(row.known[i]), counts.push_back(row.counts[i]);
    row.known = std::move(known);
    row.counts = std::move(counts);
  }
  if (cfg.kind == SpooferKind::Distill) {
    Corpus c;
    c.vocab = dataset.vocab;
    c.documents = dataset.documents;
    MarkovOptions o;
    o.order = cfg.distill_order == 0 ? cfg.h : cfg.distill_order;
    o.alpha = cfg.distill_alpha;
    o.min_context_count = cfg.distill_min_count;
    kt.distilled_ = std::make_shared<const MarkovLM>(train_markov(c, o));
  }
  return kt;
}

TokenSeq spoof_generate(const MarkovLM &aux_lm, const KnowledgeTable &knowledge, const SpooferConfig &cfg,
                        const TokenSeq &prompt, std::size_t length, RngStream &rng) {
  cfg.validate();
  if (prompt.size() < cfg.h) throw Error(ErrorCode::TextTooShort, "prompt shorter than the assumed context size");
  if (cfg.kind == SpooferKind::Distill) {
    if (!knowledge.distilled()) throw Error(ErrorCode::InvalidArgument, "knowledge table has no distilled model");
    return generate_plain(*knowledge.distilled(), prompt, length, rng);
  }
  std::optional<RedGreenWatermark> truth;
  if (cfg.kind == SpooferKind::Oracle) truth.emplace(*cfg.oracle_params);
  TokenSeq context = prompt;
  context.reserve(prompt.size() + length);
  std::vector<double> logits;
  for (std::size_t i = 0; i < length; ++i) {
    aux_lm.logits_into(context, logits);
    if (cfg.beta > 0.0) {
      const auto known = knowledge.known(context);
      if (cfg.kind == SpooferKind::Oracle) {
        const std::size_t th = truth->params().h;
        const std::span<const TokenId> ctx(context.data() + context.size() - th, th);
        for (const auto &k : known)
          if (k.token < logits.size() && truth->color_of(ctx, k.token)) logits[k.token] += cfg.beta;
      } else {
        for (const auto &k : known)
          if (k.token < logits.size()) logits[k.token] += cfg.beta * k.value;
      }
    }
    context.push_back(sample(logits, rng));
  }
  return TokenSeq(context.begin() + static_cast<std::ptrdiff_t>(prompt.size()), context.end());
}

double spoof_success_rate(const RedGreenParams &params, const std::vector<TokenSeq> &texts) {
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "success rate of an empty text list");
  RedGreenWatermark wm(params);
  std::size_t hits = 0;
  for (const auto &t : texts) hits += wm.detect(t).watermarked ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(texts.size());
}

} // namespace wmlab
