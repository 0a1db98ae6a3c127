#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "winsum/adam.hpp"
#include "winsum/checkpoint.hpp"
#include "winsum/corpus.hpp"
#include "winsum/inference.hpp"
#include "winsum/model.hpp"
#include "winsum/windowing.hpp"

namespace winsum {

struct TrainConfig {
  Mode mode = Mode::kDwm;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 16;
  int max_epochs = 10;
  int tx = 400;  // fixed-input length (STAN)
  int tw = 400;
  int ss = 380;
  int ty = 125;
  double k = 0.8;
  double d = 1.2;
  double clip_norm = 2.0;
  std::uint64_t seed = 1;
  int encoder_hidden = 256;
  bool train_word_embeddings = false;
  int beam = 3;  // dev decoding

  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  WindowSpec window_spec() const { return mode == Mode::kStan ? WindowSpec{tx, tx} : WindowSpec{tw, ss}; }
  InferenceConfig inference(const CorpusStats& stats) const;
  AdamConfig<double> adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

// Training-ready view of one pair: extended-vocabulary ids, the window plan
// and the window attended at each teacher-forced step.
struct TrainingExample {
  ExtendedSource source;
  WindowPlan plan;
  std::vector<TokenId> target;
  std::vector<int> step_windows;
};

// Cursor per target step: STAN stays in window 0, DWM advances after every
// SHIFT target (clamped), SWM follows the budgets.
std::vector<int> teacher_windows(Mode mode, std::span<const TokenId> target, TokenId shift, int window_count,
                                 std::span<const int> budgets);

// DWM pairs without "summary_shifted" are annotated on the fly. Returns
// std::nullopt for empty documents.
std::optional<TrainingExample> prepare_example(const SummaryPair& pair, const Embeddings& embeddings,
                                               const TrainConfig& config, const CorpusStats& stats);

struct NllResult {
  double loss = 0.0;
  int steps = 0;
  int clamped = 0;
};

// Mean over steps of -log P(target). Negative targets mark padding and are
// skipped; probabilities below 1e-12 are clamped and counted.
NllResult nll_loss(std::span<const Eigen::VectorXd> step_distributions, std::span<const TokenId> targets);

struct BatchResult {
  double loss_sum = 0.0;  // sum of per-example mean losses
  int examples = 0;
  int clamped = 0;
};

// Sums per-example losses and their gradients into `grads`.
BatchResult batch_gradients(const ModelParams<double>& params, std::span<const TrainingExample* const> batch,
                            ModelParams<double>& grads);

struct EpochRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double loss = 0.0;
  double dev_rouge_l = std::numeric_limits<double>::quiet_NaN();
};

// Index of the record with the highest dev ROUGE-L (earliest on ties). With
// no dev scores at all, the last record.
std::size_t select_best(std::span<const EpochRecord> history);

class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

struct TrainingRun {
  ModelParams<double> params;
  AdamState<double> adam;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;
  ModelParams<double> best_params;
  double best_score = -std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int skipped_batches = 0;
};

TrainingRun start_training(const Embeddings& embeddings, const TrainConfig& config);

// Called after every epoch; `improved` is set when the epoch became the best.
using EpochCallback = std::function<void(const TrainingRun&, const EpochRecord&, bool improved)>;

// Runs epochs run.epoch+1 .. config.max_epochs. Batches group examples of
// similar document length; batch order is shuffled per epoch from the seed,
// so results depend only on (config, data, epoch). Throws TrainingDiverged
// when the loss turns non-finite.
void train(TrainingRun& run, std::span<const SummaryPair> train_pairs, std::span<const SummaryPair> dev_pairs,
           const Embeddings& embeddings, const TrainConfig& config, const CorpusStats& stats,
           const EpochCallback& on_epoch = {});

double dev_rouge_l(const ModelParams<double>& params, const Vocabulary& vocab, std::span<const SummaryPair> dev,
                   const InferenceConfig& config);

// Checkpoint metadata round trip.
Checkpoint make_checkpoint(const ModelParams<double>& params, const Vocabulary& vocab, const TrainConfig& config,
                           const CorpusStats& stats, const AdamState<double>* adam, int epoch);
TrainConfig config_from_checkpoint(const Checkpoint& checkpoint);
CorpusStats stats_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace winsum
