#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "winsum/corpus.hpp"
#include "winsum/model.hpp"
#include "winsum/windowing.hpp"

namespace winsum {

struct ModelStep {
  Eigen::VectorXd probs;  // over the extended vocabulary
  DecoderState<double> next;
};

// What beam search needs from a model: a next-token distribution given the
// emitted prefix and a state whose `window` field selects the attended window.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual int window_count() const = 0;
  virtual TokenId eos() const = 0;
  virtual TokenId shift() const = 0;
  virtual DecoderState<double> initial_state() = 0;
  virtual ModelStep step(const DecoderState<double>& state, std::span<const TokenId> prefix) = 0;
};

// The pointer-generator over one document. Windows are encoded on first use,
// so a session over a very long document only pays for windows it visits.
class PointerGeneratorSession : public SequenceModel {
 public:
  PointerGeneratorSession(const ModelParams<double>& params, std::vector<TokenId> source, WindowPlan plan,
                          int extended_size);

  int window_count() const override { return plan_.count(); }
  TokenId eos() const override { return params_.eos(); }
  TokenId shift() const override { return params_.shift(); }
  DecoderState<double> initial_state() override;
  ModelStep step(const DecoderState<double>& state, std::span<const TokenId> prefix) override;

  const EncodedWindow<double>& window(int w);
  int encoded_windows() const;

 private:
  const ModelParams<double>& params_;
  std::vector<TokenId> source_;
  WindowPlan plan_;
  int extended_size_;
  std::vector<std::optional<EncodedWindow<double>>> windows_;
};

struct BeamHypothesis {
  std::vector<TokenId> tokens;  // emitted tokens, shifts and the final EOS included
  std::vector<int> windows;     // 0-based cursor at each emission
  double log_prob = 0.0;
  bool completed = false;
  DecoderState<double> state;
};

// Sum of log-probabilities over the token count (shifts count as tokens).
double normalized_score(const BeamHypothesis& hyp);

struct SearchConfig {
  int beam = 3;
  int max_len = 125;  // T_y, shifts included
  Mode mode = Mode::kDwm;
  std::vector<int> budgets;  // static policy only
};

// Cursor for the hypothesis' next emission under the configured policy.
int policy_window(const BeamHypothesis& hyp, const SearchConfig& config, int window_count);

// One step of batch-level beam search: completed (or length-capped)
// hypotheses carry over unchanged and compete with the expansions of the
// live ones by normalized score; the best `beam` survive, ties going to the
// earlier beam.
std::vector<BeamHypothesis> beam_step(const std::vector<BeamHypothesis>& beams, SequenceModel& model,
                                      const SearchConfig& config);

struct SearchResult {
  BeamHypothesis best;
  std::vector<BeamHypothesis> beams;
  bool truncated = false;  // best hypothesis hit max_len without EOS
};

SearchResult beam_search(SequenceModel& model, const SearchConfig& config);
SearchResult greedy_decode(SequenceModel& model, const SearchConfig& config);

// Static policy: the cursor moves once a window's budget of emitted tokens is
// spent. EOS may come at any step.
SearchResult swm_decode(SequenceModel& model, std::span<const int> budgets, int beam, int max_len);
// Dynamic policy: every emitted SHIFT advances the cursor (clamped).
SearchResult dwm_decode(SequenceModel& model, int beam, int max_len);

struct InferenceConfig {
  int beam = 3;
  int max_len = 125;    // T_y
  int max_input = 400;  // T_x, fixed-input baseline only
  Mode mode = Mode::kDwm;
  WindowSpec window{400, 380};
  double k = 0.8;
  double d = 1.2;
  CorpusStats stats;

  WindowSpec effective_window() const { return mode == Mode::kStan ? WindowSpec{max_input, max_input} : window; }
};

struct TraceEntry {
  std::string token;
  int window = 0;  // 1-based
  bool shift = false;
};

struct Summary {
  std::vector<std::string> tokens;  // content tokens only
  std::vector<int> token_windows;   // 1-based, parallel to tokens
  std::vector<TraceEntry> trace;    // every emission except EOS
  std::vector<int> budgets;
  int window_count = 0;
  bool truncated = false;        // T_y reached without EOS
  bool input_truncated = false;  // fixed-input baseline dropped tokens beyond T_x

  std::string text() const;
};

Summary summarize(const ModelParams<double>& params, const Vocabulary& vocab, const Document& document,
                  const InferenceConfig& config);

// Static-policy budgets for a document of `doc_len` tokens.
std::vector<int> static_budgets(int doc_len, const WindowPlan& plan, const InferenceConfig& config);

// First min(3, #sentences) sentences.
std::vector<std::string> lead3(const Document& document);

enum class AnnotationStyle { kNone, kTags, kAnsi };
AnnotationStyle parse_annotation_style(std::string_view text);
std::string render_annotated(const Summary& summary, AnnotationStyle style);
// One JSON object per emitted token: {"index", "token", "window", "shift"}.
std::string trace_jsonl(const Summary& summary);

}  // namespace winsum
