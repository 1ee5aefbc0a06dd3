#include "cli.hpp"

#include "wmlab/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace wmlab {

namespace {

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

ExperimentConfig resolve_config(const GlobalOptions &g) {
  ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(g.config_path);
  for (const auto &kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "override '" + kv + "' is not key=value");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  cfg.validate();
  return cfg;
}

/// Paths relative to --out when one is given.
std::filesystem::path out_path(const ExperimentConfig &cfg, const std::string &file) {
  const std::filesystem::path p(file);
  if (p.is_absolute() || cfg.out_dir.empty()) return p;
  return std::filesystem::path(cfg.out_dir) / p;
}

Vocabulary frozen(Vocabulary v) {
  v.freeze();
  return v;
}

std::vector<TokenSeq> prompts_from(const Corpus &corpus, std::size_t prompt_len) {
  std::vector<TokenSeq> out;
  for (const auto &d : corpus.documents) {
    if (d.size() < prompt_len) continue;
    out.emplace_back(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(prompt_len));
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no prompt document is long enough");
  return out;
}

void write_docs(const std::filesystem::path &path, const std::vector<TokenSeq> &docs, const Vocabulary &vocab) {
  std::ostringstream s;
  write_corpus(s, docs, vocab);
  write_text(path, s.str());
}

RedGreenParams rg_for(const ExperimentConfig &cfg, const MarkovLM &lm) {
  RedGreenParams p = cfg.redgreen();
  p.vocab_size = lm.vocab_size();
  return p;
}

SpooferConfig spoofer_for(const ExperimentConfig &cfg, const MarkovLM &provider) {
  SpooferConfig s;
  s.kind = cfg.spoofer;
  s.mode = cfg.knowledge;
  s.beta = cfg.spoof_beta;
  s.epsilon = cfg.spoof_epsilon;
  s.h = cfg.h;
  s.variant = cfg.variant;
  s.distill_order = cfg.distill_order;
  s.distill_alpha = cfg.distill_alpha;
  s.distill_min_count = cfg.distill_min_count;
  if (s.kind == SpooferKind::Oracle) s.oracle_params = rg_for(cfg, provider);
  return s;
}

MarkovOptions lm_options(const ExperimentConfig &cfg) {
  MarkovOptions o;
  o.order = cfg.lm_order;
  o.alpha = cfg.lm_alpha;
  o.temperature = cfg.tau;
  o.min_context_count = cfg.lm_min_count;
  return o;
}

} // namespace

int cli_main(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Watermark spoofing forensics lab", "wmlab"};
  app.set_version_flag("--version", std::string(kVersionString));
  app.require_subcommand(1);

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Flat key=value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Config override key=value (repeatable)");
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "Master seed");
  app.add_option("--out", g.out_dir, "Output directory");

  std::string file_out, corpus_in, lm_in, prompts_in, text_in, dataset_in, base_in, reference_in;
  std::size_t n_docs = 0, length = 0;
  std::string role = "provider";

  auto *gen_corpus = app.add_subcommand("gen-corpus", "Sample a corpus from the synthetic language");
  gen_corpus->add_option("-o,--output", file_out, "Corpus file")->required();
  gen_corpus->add_option("-n,--docs", n_docs, "Documents (default corpus_docs)");
  gen_corpus->add_option("--len", length, "Tokens per document (default corpus_doc_len)");
  gen_corpus->add_option("--role", role, "Stream: provider, reference or spoofer")
      ->check(CLI::IsMember({"provider", "reference", "spoofer"}));

  auto *train_lm = app.add_subcommand("train-lm", "Train the provider Markov LM");
  train_lm->add_option("--corpus", corpus_in, "Training corpus")->required()->check(CLI::ExistingFile);
  train_lm->add_option("-o,--output", file_out, "Model file")->required();

  auto *wm_gen = app.add_subcommand("watermark-gen", "Generate Red-Green watermarked text with the configured key");
  wm_gen->add_option("--lm", lm_in, "Provider model")->required()->check(CLI::ExistingFile);
  wm_gen->add_option("--prompts", prompts_in, "Corpus whose document heads are prompts")->required()->check(CLI::ExistingFile);
  wm_gen->add_option("-n,--docs", n_docs, "Documents")->default_val(10);
  wm_gen->add_option("--len", length, "Generated tokens per document (default c + doc_len)");
  wm_gen->add_option("-o,--output", file_out, "Output text file")->required();

  auto *spoof_build = app.add_subcommand("spoof-build", "Query the provider to build a spoofer dataset");
  spoof_build->add_option("--lm", lm_in, "Provider model")->required()->check(CLI::ExistingFile);
  spoof_build->add_option("--prompts", prompts_in, "Prompt corpus")->required()->check(CLI::ExistingFile);
  spoof_build->add_option("-n,--docs", n_docs, "Documents (default dataset_docs)");
  spoof_build->add_option("--len", length, "Tokens per document (default dataset_doc_len)");
  spoof_build->add_option("-o,--output", file_out, "Dataset file")->required();

  auto *spoof_gen = app.add_subcommand("spoof-gen", "Generate spoofed text from a learned dataset");
  spoof_gen->add_option("--lm", lm_in, "Provider model, used for the vocabulary and the Oracle spoofer")
      ->required()
      ->check(CLI::ExistingFile);
  spoof_gen->add_option("--dataset", dataset_in, "Spoofer dataset")->required()->check(CLI::ExistingFile);
  spoof_gen->add_option("--base", base_in, "Spoofer base corpus (trains the auxiliary LM)")
      ->required()
      ->check(CLI::ExistingFile);
  spoof_gen->add_option("--prompts", prompts_in, "Prompt corpus")->required()->check(CLI::ExistingFile);
  spoof_gen->add_option("-n,--docs", n_docs, "Documents")->default_val(10);
  spoof_gen->add_option("--len", length, "Generated tokens per document (default c + doc_len)");
  spoof_gen->add_option("-o,--output", file_out, "Output text file")->required();

  auto *detect = app.add_subcommand("detect", "Red-Green z-test over each document and the whole file");
  detect->add_option("--lm", lm_in, "Provider model (vocabulary)")->required()->check(CLI::ExistingFile);
  detect->add_option("--input", text_in, "Text file, one document per line")->required()->check(CLI::ExistingFile);

  auto *spooftest = app.add_subcommand("spooftest", "Test whether watermarked text was spoofed");
  spooftest->add_option("--lm", lm_in, "Provider model, used for regeneration")->required()->check(CLI::ExistingFile);
  spooftest->add_option("--input", text_in, "Suspect documents, one per line")->required()->check(CLI::ExistingFile);
  spooftest->add_option("--reference", reference_in, "Defender reference corpus")->required()->check(CLI::ExistingFile);

  std::string experiment_name;
  auto *experiment = app.add_subcommand("experiment", "Run a named experiment and write its outputs");
  experiment->add_option("name", experiment_name, "Experiment name")
      ->required()
      ->check(CLI::IsMember(experiment_names()));

  auto *validate = app.add_subcommand("validate", "Validate the configuration and echo it");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion &) {
    out << kVersionString << "\n";
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    const ExperimentConfig cfg = resolve_config(g);
    if (*validate) {
      out << cfg.echo();
    } else if (*experiment) {
      for (const auto &p : run_experiment(experiment_name, cfg)) out << p.string() << "\n";
    } else if (*gen_corpus) {
      const SyntheticLanguage lang(
          SyntheticLanguageConfig{cfg.vocab_size, cfg.zipf_exponent, cfg.max_branching, cfg.unigram_mix, cfg.language_seed});
      RngStream rng = unit_rng(cfg.seed, "gen-corpus/" + role, 0);
      const Corpus c = lang.sample_corpus(n_docs ? n_docs : cfg.corpus_docs, length ? length : cfg.corpus_doc_len, rng);
      write_docs(out_path(cfg, file_out), c.documents, c.vocab);
      out << "documents=" << c.documents.size() << " tokens=" << c.total_tokens() << "\n";
    } else if (*train_lm) {
      const MarkovLM lm = train_markov(ingest_corpus(corpus_in), lm_options(cfg));
      lm.save(out_path(cfg, file_out));
      out << "vocab=" << lm.vocab_size() << " order=" << lm.order() << "\n";
    } else if (*wm_gen) {
      const MarkovLM lm = MarkovLM::load(lm_in);
      const RedGreenWatermark wm(rg_for(cfg, lm));
      const auto prompts = prompts_from(ingest_corpus(prompts_in, frozen(lm.vocab())), cfg.prompt_len);
      RngStream rng = unit_rng(cfg.seed, "watermark-gen", 0);
      std::vector<TokenSeq> docs;
      for (std::size_t i = 0; i < n_docs; ++i)
        docs.push_back(wm.generate(lm, prompts[i % prompts.size()], length ? length : cfg.c + cfg.doc_len, rng));
      write_docs(out_path(cfg, file_out), docs, lm.vocab());
      out << "documents=" << docs.size() << "\n";
    } else if (*spoof_build) {
      const MarkovLM lm = MarkovLM::load(lm_in);
      const auto prompts = prompts_from(ingest_corpus(prompts_in, frozen(lm.vocab())), cfg.prompt_len);
      RngStream rng = unit_rng(cfg.seed, "dataset", 0);
      const SpoofDataset ds = build_dataset(lm, rg_for(cfg, lm), prompts, n_docs ? n_docs : cfg.dataset_docs,
                                            length ? length : cfg.dataset_doc_len, rng);
      save_dataset(out_path(cfg, file_out), ds);
      out << "documents=" << ds.documents.size() << " tokens=" << ds.total_tokens << "\n";
    } else if (*spoof_gen) {
      const MarkovLM lm = MarkovLM::load(lm_in);
      const Vocabulary vocab = frozen(lm.vocab());
      const SpoofDataset ds = load_dataset(dataset_in, vocab);
      const Corpus base = ingest_corpus(base_in, vocab);
      MarkovOptions o = lm_options(cfg);
      o.temperature = 1.0;
      const MarkovLM aux = train_markov(base, o);
      const SpooferConfig sc = spoofer_for(cfg, lm);
      const KnowledgeTable knowledge = learn_knowledge(ds, sc, &base);
      const auto prompts = prompts_from(ingest_corpus(prompts_in, vocab), cfg.prompt_len);
      RngStream rng = unit_rng(cfg.seed, "spoof-gen", 0);
      std::vector<TokenSeq> docs;
      for (std::size_t i = 0; i < n_docs; ++i)
        docs.push_back(
            spoof_generate(aux, knowledge, sc, prompts[i % prompts.size()], length ? length : cfg.c + cfg.doc_len, rng));
      write_docs(out_path(cfg, file_out), docs, lm.vocab());
      out << "documents=" << docs.size() << " detector_pass_rate=" << format_double(spoof_success_rate(rg_for(cfg, lm), docs))
          << "\n";
    } else if (*detect) {
      const MarkovLM lm = MarkovLM::load(lm_in);
      const RedGreenWatermark wm(rg_for(cfg, lm));
      const Corpus text = ingest_corpus(text_in, frozen(lm.vocab()));
      out << "doc,n_kept,n_green,z,watermarked\n";
      std::size_t green = 0, kept = 0;
      for (std::size_t i = 0; i < text.documents.size(); ++i) {
        const DetectionReport r = wm.detect(text.documents[i]);
        green += r.n_green, kept += r.n_kept;
        out << i << "," << r.n_kept << "," << r.n_green << "," << format_double(r.z) << "," << (r.watermarked ? 1 : 0)
            << "\n";
      }
      const double z = z_from_counts(green, kept, cfg.gamma);
      out << "all," << kept << "," << green << "," << format_double(z) << "," << (z > cfg.rho ? 1 : 0) << "\n";
    } else if (*spooftest) {
      const MarkovLM lm = MarkovLM::load(lm_in);
      const Vocabulary vocab = frozen(lm.vocab());
      const RedGreenWatermark wm(rg_for(cfg, lm));
      const Corpus suspect = ingest_corpus(text_in, vocab);
      const Corpus reference = ingest_corpus(reference_in, vocab);
      const FrequencyTable table = build_frequency_table(
          reference, cfg.score == ScoreKind::Ngram ? FrequencyKind::UnorderedNgram : FrequencyKind::Unigram, cfg.h);
      const ScoreFn score = [&](const TokenSeq &t) {
        return cfg.score == ScoreKind::Ngram ? ngram_score(table, t, cfg.h) : unigram_score(table, t, cfg.h);
      };
      const TraceFn trace = [&](const TokenSeq &t, std::size_t) { return wm.trace(t); };
      TestReport r;
      if (cfg.method == TestMethod::Reprompting) {
        RngStream rng = unit_rng(cfg.seed, "spooftest/regen", 0);
        std::vector<TokenSeq> originals, regen;
        for (const auto &d : suspect.documents) {
          if (d.size() <= cfg.c) continue;
          const TokenSeq prefix(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(cfg.c));
          regen.push_back(wm.generate(lm, prefix, d.size() - cfg.c, rng));
          originals.push_back(d);
        }
        if (originals.empty()) throw Error(ErrorCode::InvalidArgument, "every document is shorter than c");
        r = reprompt_test(originals, regen, cfg.c, score, trace, cfg.sidedness);
      } else {
        r = standard_test(suspect.documents, score, trace, cfg.sidedness);
      }
      r.h = cfg.h;
      r.seed = cfg.seed;
      out << TestReport::csv_header() << "\n" << r.csv_row() << "\n";
    }
  } catch (const std::exception &e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

} // namespace wmlab
