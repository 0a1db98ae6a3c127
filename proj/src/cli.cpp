#include "winsum/cli.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "winsum/checkpoint.hpp"
#include "winsum/corpus.hpp"
#include "winsum/inference.hpp"
#include "winsum/io.hpp"
#include "winsum/rouge.hpp"
#include "winsum/synthetic.hpp"
#include "winsum/training.hpp"
#include "winsum/windowing.hpp"

namespace winsum {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Options that may come from the command line or a config file. Unset values
// fall back to the checkpoint (summarize) or to built-in defaults.
struct Overrides {
  std::optional<std::string> mode;
  std::optional<int> tw, ss, tx, ty, beam;
  std::optional<double> k, d;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch, hidden, vocab_size;
  std::optional<double> lr, clip;
  std::optional<bool> train_embeddings;
};

void add_overrides(CLI::App& app, Overrides& o) {
  app.add_option("--mode", o.mode, "Window policy")->check(CLI::IsMember({"stan", "swm", "dwm"}));
  app.add_option("--tw", o.tw, "Window length T_w");
  app.add_option("--ss", o.ss, "Window stride ss");
  app.add_option("--tx", o.tx, "Input length of the fixed-input model");
  app.add_option("--ty", o.ty, "Maximum summary length T_y");
  app.add_option("--k", o.k, "SWM weight scale");
  app.add_option("--d", o.d, "SWM weight decay base");
  app.add_option("--beam", o.beam, "Beam size");
  app.add_option("--seed", o.seed, "Random seed");
  app.add_option("--epochs", o.epochs, "Maximum training epochs");
  app.add_option("--batch", o.batch, "Batch size");
  app.add_option("--hidden", o.hidden, "Encoder hidden size per direction");
  app.add_option("--lr", o.lr, "Adam learning rate");
  app.add_option("--clip", o.clip, "Gradient clipping norm");
  app.add_option("--vocab-size", o.vocab_size, "Embedding rows to load");
  app.add_option("--train-embeddings", o.train_embeddings, "Also update the word embeddings");
}

TrainConfig apply(TrainConfig c, const Overrides& o) {
  if (o.mode) c.mode = parse_mode(*o.mode);
  if (o.tw) c.tw = *o.tw;
  if (o.ss) c.ss = *o.ss;
  if (o.tx) c.tx = *o.tx;
  if (o.ty) c.ty = *o.ty;
  if (o.beam) c.beam = *o.beam;
  if (o.k) c.k = *o.k;
  if (o.d) c.d = *o.d;
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.max_epochs = *o.epochs;
  if (o.batch) c.batch_size = *o.batch;
  if (o.hidden) c.encoder_hidden = *o.hidden;
  if (o.lr) c.learning_rate = *o.lr;
  if (o.clip) c.clip_norm = *o.clip;
  if (o.train_embeddings) c.train_word_embeddings = *o.train_embeddings;
  // A single fixed window unless the user sized it explicitly.
  if (c.mode == Mode::kStan && !o.tw) c.tw = c.tx;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::string format_real(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

std::string stats_json(const CorpusStats& stats, std::size_t documents) {
  nlohmann::ordered_json j;
  j["documents"] = documents;
  j["majority_doc_len"] = stats.majority_doc_len;
  j["majority_sum_len"] = stats.majority_sum_len;
  return j.dump(2) + "\n";
}

std::string corpus_text(std::span<const SummaryPair> pairs) {
  std::ostringstream out;
  write_corpus(out, pairs);
  return out.str();
}

struct PreprocessArgs {
  std::string corpus, embeddings, out, stats;
};

int cmd_preprocess(const PreprocessArgs& a, const Overrides& o, std::ostream& out) {
  const auto config = apply(TrainConfig{}, o);
  auto pairs = load_corpus(a.corpus);
  if (a.out.empty() && a.stats.empty()) throw UsageError("preprocess: give --out and/or --stats");
  if (!a.out.empty()) {
    if (config.mode == Mode::kDwm) {
      if (a.embeddings.empty()) throw UsageError("preprocess: DWM annotation needs --embeddings");
      const auto embeddings = load_embeddings(a.embeddings, o.vocab_size.value_or(50000));
      for (auto& pair : pairs) pair.summary_shifted = annotate_summary(pair, config.window_spec(), embeddings).tokens;
    }
    write_file_atomic(a.out, corpus_text(pairs));
    out << "wrote " << pairs.size() << " records to " << a.out << "\n";
  }
  if (!a.stats.empty()) {
    write_file_atomic(a.stats, stats_json(compute_corpus_stats(pairs), pairs.size()));
    out << "wrote corpus statistics to " << a.stats << "\n";
  }
  return kExitOk;
}

struct TrainArgs {
  std::string train, dev, embeddings, out, log;
  bool resume = false;
};

int cmd_train(const TrainArgs& a, const Overrides& o, std::ostream& out, std::ostream& err) {
  auto config = apply(TrainConfig{}, o);
  const auto train_pairs = load_corpus(a.train);
  std::vector<SummaryPair> dev_pairs;
  if (!a.dev.empty()) dev_pairs = load_corpus(a.dev);
  const auto embeddings = load_embeddings(a.embeddings, o.vocab_size.value_or(50000));
  const auto stats = compute_corpus_stats(train_pairs);
  const std::string last_path = a.out + ".last";
  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;

  TrainingRun run;
  std::string log;
  if (a.resume) {
    const auto ck = load_checkpoint(last_path);
    if (!ck.adam) throw FormatError(last_path + ": no optimizer state to resume from");
    if (ck.meta_or("mode", "") != to_string(config.mode)) {
      throw UsageError("resume: checkpoint was trained with --mode " + ck.meta_or("mode", "?"));
    }
    if (ck.words != embeddings.vocab.words()) throw UsageError("resume: embeddings do not match the checkpoint");
    run.params = ck.params;
    run.adam = *ck.adam;
    run.epoch = std::stoi(ck.meta_or("epoch", "0"));
    run.best_epoch = std::stoi(ck.meta_or("best_epoch", "0"));
    run.best_score = std::stod(ck.meta_or("best_dev_rouge_l", "-inf"));
    run.best_params = std::filesystem::exists(a.out) ? load_checkpoint(a.out).params : run.params;
    if (std::filesystem::exists(log_path)) log = read_file(log_path);
  } else {
    run = start_training(embeddings, config);
  }
  if (log.empty()) log = "epoch,step,loss,dev_rouge_l\n";

  auto with_best = [&](Checkpoint ck) {
    ck.meta["best_epoch"] = std::to_string(run.best_epoch);
    ck.meta["best_dev_rouge_l"] = format_real(run.best_score);
    return ck;
  };
  auto on_epoch = [&](const TrainingRun& r, const EpochRecord& rec, bool improved) {
    log += std::to_string(rec.epoch) + "," + std::to_string(rec.step) + "," + format_real(rec.loss) + "," +
           format_real(rec.dev_rouge_l) + "\n";
    write_file_atomic(log_path, log);
    if (improved) {
      write_file_atomic(a.out,
                        serialize_checkpoint(with_best(make_checkpoint(r.best_params, embeddings.vocab, config, stats,
                                                                       nullptr, rec.epoch))));
    }
    write_file_atomic(last_path, serialize_checkpoint(with_best(
                                     make_checkpoint(r.params, embeddings.vocab, config, stats, &r.adam, rec.epoch))));
    out << "epoch " << rec.epoch << " step " << rec.step << " loss " << rec.loss;
    if (!std::isnan(rec.dev_rouge_l)) out << " dev_rouge_l " << rec.dev_rouge_l;
    out << (improved ? " *" : "") << "\n";
  };
  try {
    train(run, train_pairs, dev_pairs, embeddings, config, stats, on_epoch);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  if (run.skipped_batches > 0) err << "warning: skipped " << run.skipped_batches << " batches with non-finite gradients\n";
  out << "best epoch " << run.best_epoch << ", checkpoint " << a.out << "\n";
  return kExitOk;
}

struct SummarizeArgs {
  std::string checkpoint, input, trace, annotate = "none";
};

InferenceConfig inference_for(const Checkpoint& ck, const Overrides& o) {
  auto base = config_from_checkpoint(ck);
  if (o.mode && parse_mode(*o.mode) != base.mode) {
    throw UsageError("--mode " + *o.mode + " does not match the checkpoint (trained as " +
                     std::string(to_string(base.mode)) + ")");
  }
  Overrides decode_only;
  decode_only.tw = o.tw;
  decode_only.ss = o.ss;
  decode_only.tx = o.tx;
  decode_only.ty = o.ty;
  decode_only.beam = o.beam;
  decode_only.k = o.k;
  decode_only.d = o.d;
  decode_only.mode = std::string(to_string(base.mode));
  if (base.mode == Mode::kStan) decode_only.tw = decode_only.tx ? decode_only.tx : std::optional<int>(base.tx);
  return apply(base, decode_only).inference(stats_from_checkpoint(ck));
}

int cmd_summarize(const SummarizeArgs& a, const Overrides& o, std::ostream& out, std::ostream& err) {
  const auto style = [&] {
    try {
      return parse_annotation_style(a.annotate);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }();
  const auto ck = load_checkpoint(a.checkpoint);
  const auto config = inference_for(ck, o);
  const Vocabulary vocab(ck.words);
  const auto doc = Document::from_text(read_file(a.input));
  if (config.mode == Mode::kStan && static_cast<int>(doc.size()) > config.max_input) {
    err << "warning: input has " << doc.size() << " tokens; the fixed-input model reads only the first "
        << config.max_input << " (T_x)\n";
  }
  const auto summary = summarize(ck.params, vocab, doc, config);
  out << render_annotated(summary, style) << "\n";
  if (!a.trace.empty()) write_file_atomic(a.trace, trace_jsonl(summary));
  if (summary.truncated) err << "warning: summary reached T_y = " << config.max_len << " tokens without <eos>\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::string corpus, checkpoint, baseline, format = "text", json_out;
};

int cmd_evaluate(const EvaluateArgs& a, const Overrides& o, std::ostream& out, std::ostream& err) {
  if (a.checkpoint.empty() == a.baseline.empty()) throw UsageError("evaluate: give exactly one of --checkpoint, --baseline");
  const auto corpus = load_corpus(a.corpus);
  std::string name;
  Summarizer summarizer;
  std::optional<Checkpoint> ck;
  std::optional<Vocabulary> vocab;
  InferenceConfig config;
  if (!a.baseline.empty()) {
    name = "Lead-3";
    summarizer = [](const SummaryPair& p) { return lead3(p.document); };
  } else {
    ck = load_checkpoint(a.checkpoint);
    config = inference_for(*ck, o);
    vocab.emplace(ck->words);
    name = std::string(to_string(config.mode));
    for (auto& ch : name) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    summarizer = [&](const SummaryPair& p) { return summarize(ck->params, *vocab, p.document, config).tokens; };
  }
  const auto scores = evaluate_corpus(summarizer, corpus);
  for (const auto& e : scores.errors) err << "warning: " << e << "\n";
  const auto json = scores_to_json(name, scores).dump(2) + "\n";
  if (a.format == "json") {
    out << json;
  } else {
    const std::pair<std::string, CorpusScores> row{name, scores};
    out << format_score_table(std::span(&row, 1));
  }
  if (!a.json_out.empty()) write_file_atomic(a.json_out, json);
  return scores.documents == 0 && !corpus.empty() ? kExitFailure : kExitOk;
}

struct SynthesizeArgs {
  std::string corpus, embeddings;
  int pairs = 50, windows = 2, sentence_len = 5, words = 30, dim = 16;
};

int cmd_synthesize(const SynthesizeArgs& a, const Overrides& o, std::ostream& out) {
  CopyTaskSpec spec;
  spec.pairs = a.pairs;
  spec.windows = a.windows;
  spec.window = {o.tw.value_or(12), o.ss.value_or(10)};
  spec.sentence_len = a.sentence_len;
  spec.words = a.words;
  spec.seed = o.seed.value_or(7);
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_file_atomic(a.corpus, corpus_text(copy_task_corpus(spec)));
  if (!a.embeddings.empty()) {
    std::ostringstream emb;
    write_embeddings(emb, synthetic_embeddings(a.words, a.dim, spec.seed));
    write_file_atomic(a.embeddings, emb.str());
  }
  out << "wrote " << a.pairs << " synthetic pairs to " << a.corpus << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Windowed pointer-generator summarization", "winsum"};
  app.set_config("--config", "", "Flat key=value config file")->envname(kConfigEnv);
  app.require_subcommand(1);
  Overrides overrides;
  add_overrides(app, overrides);

  PreprocessArgs pre_args;
  auto* pre = app.add_subcommand("preprocess", "Annotate window shifts and compute corpus statistics")->fallthrough();
  pre->add_option("--corpus", pre_args.corpus, "Input JSONL corpus")->required();
  pre->add_option("--embeddings", pre_args.embeddings, "Word embeddings (text format)");
  pre->add_option("--out", pre_args.out, "Output JSONL corpus");
  pre->add_option("--stats", pre_args.stats, "Output statistics JSON");

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "Train a model")->fallthrough();
  tr->add_option("--train", train_args.train, "Training JSONL corpus")->required();
  tr->add_option("--dev", train_args.dev, "Development JSONL corpus for model selection");
  tr->add_option("--embeddings", train_args.embeddings, "Word embeddings (text format)")->required();
  tr->add_option("--out", train_args.out, "Best checkpoint path")->required();
  tr->add_option("--log", train_args.log, "Training log (default <out>.log)");
  tr->add_flag("--resume", train_args.resume, "Continue from <out>.last");

  SummarizeArgs sum_args;
  auto* su = app.add_subcommand("summarize", "Summarize a text file")->fallthrough();
  su->add_option("--checkpoint", sum_args.checkpoint, "Model checkpoint")->required();
  su->add_option("--input", sum_args.input, "Plain text document")->required();
  su->add_option("--trace", sum_args.trace, "Write the per-token window trace (JSONL)");
  su->add_option("--annotate", sum_args.annotate, "none, tags or ansi");

  EvaluateArgs eval_args;
  auto* ev = app.add_subcommand("evaluate", "ROUGE against reference summaries")->fallthrough();
  ev->add_option("--corpus", eval_args.corpus, "JSONL corpus with references")->required();
  ev->add_option("--checkpoint", eval_args.checkpoint, "Model checkpoint");
  ev->add_option("--baseline", eval_args.baseline, "Baseline instead of a model")->check(CLI::IsMember({"lead3"}));
  ev->add_option("--format", eval_args.format, "text or json")->check(CLI::IsMember({"text", "json"}));
  ev->add_option("--json-out", eval_args.json_out, "Also write the scores as JSON");

  SynthesizeArgs syn_args;
  auto* sy = app.add_subcommand("synthesize", "Write a synthetic copy-task corpus")->fallthrough();
  sy->add_option("--corpus", syn_args.corpus, "Output JSONL corpus")->required();
  sy->add_option("--embeddings", syn_args.embeddings, "Output embeddings");
  sy->add_option("--pairs", syn_args.pairs, "Number of pairs");
  sy->add_option("--windows", syn_args.windows, "Windows per document");
  sy->add_option("--sentence-len", syn_args.sentence_len, "Tokens per sentence, including the period");
  sy->add_option("--words", syn_args.words, "Distinct content words");
  sy->add_option("--dim", syn_args.dim, "Embedding dimension");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*pre) return cmd_preprocess(pre_args, overrides, out);
    if (*tr) return cmd_train(train_args, overrides, out, err);
    if (*su) return cmd_summarize(sum_args, overrides, out, err);
    if (*ev) return cmd_evaluate(eval_args, overrides, out, err);
    if (*sy) return cmd_synthesize(syn_args, overrides, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace winsum
