#include "winsum/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "winsum/rouge.hpp"

namespace winsum {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (learning_rate <= 0) fail("learning rate must be positive");
  if (batch_size < 1) fail("batch size must be positive");
  if (max_epochs < 0) fail("max epochs must be non-negative");
  if (ty < 1) fail("T_y must be positive");
  if (tx < 1) fail("T_x must be positive");
  if (encoder_hidden < 1) fail("hidden size must be positive");
  if (beam < 1) fail("beam size must be positive");
  if (mode == Mode::kStan && tw != tx) fail("the fixed-input baseline needs a single window with T_w = T_x");
  if (mode == Mode::kSwm && !(std::isfinite(k) && std::isfinite(d))) fail("SWM needs finite k and d");
  window_spec().validate();
}

InferenceConfig TrainConfig::inference(const CorpusStats& stats) const {
  InferenceConfig c;
  c.beam = beam;
  c.max_len = ty;
  c.max_input = tx;
  c.mode = mode;
  c.window = {tw, ss};
  c.k = k;
  c.d = d;
  c.stats = stats;
  return c;
}

std::vector<int> teacher_windows(Mode mode, std::span<const TokenId> target, TokenId shift, int window_count,
                                 std::span<const int> budgets) {
  std::vector<int> windows(target.size(), 0);
  int cursor = 0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    switch (mode) {
      case Mode::kStan: break;
      case Mode::kSwm: windows[t] = std::min(window_count - 1, window_for_step(budgets, static_cast<int>(t))); break;
      case Mode::kDwm:
        windows[t] = cursor;
        if (target[t] == shift) cursor = std::min(cursor + 1, window_count - 1);
        break;
    }
  }
  return windows;
}

std::optional<TrainingExample> prepare_example(const SummaryPair& pair, const Embeddings& embeddings,
                                               const TrainConfig& config, const CorpusStats& stats) {
  const auto& vocab = embeddings.vocab;
  std::span<const std::string> doc = pair.document.tokens;
  if (config.mode == Mode::kStan && static_cast<int>(doc.size()) > config.tx) doc = doc.first(config.tx);
  if (doc.empty()) return std::nullopt;

  TrainingExample ex;
  ex.source = extend_source(vocab, doc);
  ex.plan = segment(static_cast<int>(doc.size()), config.window_spec());

  std::vector<std::string> words;
  if (config.mode == Mode::kDwm) {
    words = pair.summary_shifted ? *pair.summary_shifted : annotate_summary(pair, config.window_spec(), embeddings).tokens;
  } else {
    words = pair.summary.tokens;
  }
  for (const auto& w : words) {
    if (w == Vocabulary::kEosSurface) break;
    ex.target.push_back(w == Vocabulary::kShiftSurface ? vocab.shift() : ex.source.id_of(vocab, w));
  }
  if (static_cast<int>(ex.target.size()) > config.ty - 1) ex.target.resize(config.ty - 1);
  ex.target.push_back(vocab.eos());

  std::vector<int> budgets;
  if (config.mode == Mode::kSwm) {
    budgets = static_budgets(static_cast<int>(doc.size()), ex.plan, config.inference(stats));
  }
  ex.step_windows = teacher_windows(config.mode, ex.target, vocab.shift(), ex.plan.count(), budgets);
  return ex;
}

NllResult nll_loss(std::span<const Eigen::VectorXd> step_distributions, std::span<const TokenId> targets) {
  if (step_distributions.size() != targets.size()) throw std::invalid_argument("nll_loss: one target per step");
  NllResult r;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] < 0) continue;
    const auto& dist = step_distributions[t];
    const double p = targets[t] < dist.size() ? dist(targets[t]) : 0.0;
    if (p < kProbabilityFloor) ++r.clamped;
    r.loss -= std::log(std::max(p, kProbabilityFloor));
    ++r.steps;
  }
  if (r.steps > 0) r.loss /= r.steps;
  return r;
}

BatchResult batch_gradients(const ModelParams<double>& params, std::span<const TrainingExample* const> batch,
                            ModelParams<double>& grads) {
  BatchResult r;
  for (const auto* ex : batch) {
    const auto loss = sequence_loss(params, ex->source.ids, ex->plan, ex->target, ex->step_windows, &grads);
    r.loss_sum += loss.loss;
    r.clamped += loss.clamped;
    ++r.examples;
  }
  return r;
}

std::size_t select_best(std::span<const EpochRecord> history) {
  if (history.empty()) throw std::invalid_argument("select_best: empty history");
  std::size_t best = history.size() - 1;
  double best_score = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double s = history[i].dev_rouge_l;
    if (std::isnan(s)) continue;
    if (!any || s > best_score) {
      best = i;
      best_score = s;
      any = true;
    }
  }
  return best;
}

TrainingRun start_training(const Embeddings& embeddings, const TrainConfig& config) {
  config.validate();
  TrainingRun run;
  run.params = make_model<double>(embeddings, config.encoder_hidden, config.seed, config.train_word_embeddings,
                                  config.mode == Mode::kDwm);
  run.adam = AdamState<double>::for_params(run.params);
  run.best_params = run.params;
  return run;
}

double dev_rouge_l(const ModelParams<double>& params, const Vocabulary& vocab, std::span<const SummaryPair> dev,
                   const InferenceConfig& config) {
  const auto scores = evaluate_corpus(
      [&](const SummaryPair& pair) { return summarize(params, vocab, pair.document, config).tokens; }, dev);
  return scores.documents > 0 ? scores.rouge_l.f1 : std::numeric_limits<double>::quiet_NaN();
}

void train(TrainingRun& run, std::span<const SummaryPair> train_pairs, std::span<const SummaryPair> dev_pairs,
           const Embeddings& embeddings, const TrainConfig& config, const CorpusStats& stats,
           const EpochCallback& on_epoch) {
  config.validate();
  std::vector<TrainingExample> examples;
  for (const auto& pair : train_pairs) {
    if (auto ex = prepare_example(pair, embeddings, config, stats)) examples.push_back(std::move(*ex));
  }
  if (examples.empty()) throw std::invalid_argument("train: no usable training pairs");

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return examples[a].source.ids.size() < examples[b].source.ids.size(); });
  std::vector<std::vector<const TrainingExample*>> batches;
  for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
    auto& b = batches.emplace_back();
    for (std::size_t j = i; j < std::min(order.size(), i + config.batch_size); ++j) b.push_back(&examples[order[j]]);
  }

  const auto adam_config = config.adam();
  const auto inference = config.inference(stats);
  while (run.epoch < config.max_epochs) {
    const int epoch = run.epoch + 1;
    Random rng(config.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> batch_order(batches.size());
    std::iota(batch_order.begin(), batch_order.end(), 0);
    for (std::size_t i = batch_order.size(); i > 1; --i) std::swap(batch_order[i - 1], batch_order[rng.below(i)]);

    double loss_sum = 0.0;
    int seen = 0;
    for (std::size_t b : batch_order) {
      auto grads = run.params.zeros_like();
      const auto result = batch_gradients(run.params, batches[b], grads);
      if (!std::isfinite(result.loss_sum)) {
        throw TrainingDiverged("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += result.loss_sum;
      seen += result.examples;
      scale_tensors(grads, 1.0 / result.examples);
      if (!all_finite(grads)) {
        ++run.skipped_batches;
        continue;
      }
      clip_global_norm(grads, config.clip_norm);
      adam_step(run.params, grads, run.adam, adam_config);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.step = run.adam.step;
    record.loss = loss_sum / std::max(1, seen);
    if (!dev_pairs.empty()) record.dev_rouge_l = dev_rouge_l(run.params, embeddings.vocab, dev_pairs, inference);
    run.epoch = epoch;
    run.history.push_back(record);
    // Same rule as select_best: NaN scores only win while nothing has been scored.
    const bool improved = std::isnan(record.dev_rouge_l)
                              ? run.best_score == -std::numeric_limits<double>::infinity()
                              : record.dev_rouge_l > run.best_score;
    if (improved) {
      run.best_params = run.params;
      run.best_epoch = epoch;
      if (!std::isnan(record.dev_rouge_l)) run.best_score = record.dev_rouge_l;
    }
    if (on_epoch) on_epoch(run, record, improved);
  }
}

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

Checkpoint make_checkpoint(const ModelParams<double>& params, const Vocabulary& vocab, const TrainConfig& config,
                           const CorpusStats& stats, const AdamState<double>* adam, int epoch) {
  Checkpoint ck;
  ck.params = params;
  ck.words = vocab.words();
  ck.meta["mode"] = std::string(to_string(config.mode));
  ck.meta["tx"] = std::to_string(config.tx);
  ck.meta["tw"] = std::to_string(config.tw);
  ck.meta["ss"] = std::to_string(config.ss);
  ck.meta["ty"] = std::to_string(config.ty);
  ck.meta["k"] = format_double(config.k);
  ck.meta["d"] = format_double(config.d);
  ck.meta["beam"] = std::to_string(config.beam);
  ck.meta["seed"] = std::to_string(config.seed);
  ck.meta["learning_rate"] = format_double(config.learning_rate);
  ck.meta["batch_size"] = std::to_string(config.batch_size);
  ck.meta["clip_norm"] = format_double(config.clip_norm);
  ck.meta["majority_doc_len"] = std::to_string(stats.majority_doc_len);
  ck.meta["majority_sum_len"] = std::to_string(stats.majority_sum_len);
  ck.meta["epoch"] = std::to_string(epoch);
  if (adam) ck.adam = *adam;
  return ck;
}

TrainConfig config_from_checkpoint(const Checkpoint& ck) {
  TrainConfig c;
  auto get = [&](const char* key) {
    auto it = ck.meta.find(key);
    if (it == ck.meta.end()) throw FormatError(std::string("checkpoint metadata lacks '") + key + "'");
    return it->second;
  };
  c.mode = parse_mode(get("mode"));
  c.tx = std::stoi(get("tx"));
  c.tw = std::stoi(get("tw"));
  c.ss = std::stoi(get("ss"));
  c.ty = std::stoi(get("ty"));
  c.k = std::stod(get("k"));
  c.d = std::stod(get("d"));
  c.beam = std::stoi(get("beam"));
  c.seed = std::stoull(get("seed"));
  c.learning_rate = std::stod(get("learning_rate"));
  c.batch_size = std::stoi(get("batch_size"));
  c.clip_norm = std::stod(get("clip_norm"));
  c.encoder_hidden = ck.params.encoder_hidden();
  c.train_word_embeddings = ck.params.train_word_embeddings;
  return c;
}

CorpusStats stats_from_checkpoint(const Checkpoint& ck) {
  return {std::stoi(ck.meta_or("majority_doc_len", "0")), std::stoi(ck.meta_or("majority_sum_len", "0"))};
}

}  // namespace winsum
