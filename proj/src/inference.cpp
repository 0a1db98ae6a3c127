#include "winsum/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace winsum {

PointerGeneratorSession::PointerGeneratorSession(const ModelParams<double>& params, std::vector<TokenId> source,
                                                 WindowPlan plan, int extended_size)
    : params_(params),
      source_(std::move(source)),
      plan_(std::move(plan)),
      extended_size_(extended_size),
      windows_(plan_.count()) {}

const EncodedWindow<double>& PointerGeneratorSession::window(int w) {
  auto& slot = windows_.at(w);
  if (!slot) slot = encode_window(params_, window_ids(source_, plan_, w, params_.pad()));
  return *slot;
}

int PointerGeneratorSession::encoded_windows() const {
  return static_cast<int>(std::count_if(windows_.begin(), windows_.end(), [](const auto& w) { return w.has_value(); }));
}

DecoderState<double> PointerGeneratorSession::initial_state() { return init_decoder_state(window(0)); }

ModelStep PointerGeneratorSession::step(const DecoderState<double>& state, std::span<const TokenId> prefix) {
  const TokenId input = prefix.empty() ? params_.start() : prefix.back();
  auto [out, next] = decode_step(params_, state, input, window(state.window), extended_size_);
  return {std::move(out.extended_probs), std::move(next)};
}

double normalized_score(const BeamHypothesis& hyp) {
  if (hyp.tokens.empty()) return 0.0;
  return hyp.log_prob / static_cast<double>(hyp.tokens.size());
}

int policy_window(const BeamHypothesis& hyp, const SearchConfig& config, int window_count) {
  switch (config.mode) {
    case Mode::kStan: return 0;
    case Mode::kSwm:
      return std::min(window_count - 1, window_for_step(config.budgets, static_cast<int>(hyp.tokens.size())));
    case Mode::kDwm: return std::min(hyp.state.window, window_count - 1);
  }
  return 0;
}

namespace {

bool expandable(const BeamHypothesis& hyp, const SearchConfig& config) {
  return !hyp.completed && static_cast<int>(hyp.tokens.size()) < config.max_len;
}

// The `limit` most probable admissible tokens, most probable first.
std::vector<TokenId> top_tokens(const Eigen::VectorXd& probs, int limit, std::optional<TokenId> banned) {
  std::vector<TokenId> ids;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs(i) > 0.0 && (!banned || *banned != i)) ids.push_back(static_cast<TokenId>(i));
  }
  const auto take = std::min<std::size_t>(ids.size(), static_cast<std::size_t>(limit));
  std::partial_sort(ids.begin(), ids.begin() + take, ids.end(),
                    [&](TokenId a, TokenId b) { return probs(a) > probs(b) || (probs(a) == probs(b) && a < b); });
  ids.resize(take);
  return ids;
}

std::vector<BeamHypothesis> expand(const BeamHypothesis& hyp, SequenceModel& model, const SearchConfig& config,
                                   int limit) {
  const int windows = model.window_count();
  auto state = hyp.state;
  state.window = policy_window(hyp, config, windows);
  auto step = model.step(state, hyp.tokens);
  std::optional<TokenId> banned;
  if (config.mode != Mode::kDwm) banned = model.shift();
  std::vector<BeamHypothesis> out;
  for (TokenId tok : top_tokens(step.probs, limit, banned)) {
    BeamHypothesis next;
    next.tokens = hyp.tokens;
    next.tokens.push_back(tok);
    next.windows = hyp.windows;
    next.windows.push_back(state.window);
    next.log_prob = hyp.log_prob + std::log(step.probs(tok));
    next.completed = tok == model.eos();
    next.state = step.next;
    next.state.window = state.window;
    if (config.mode == Mode::kDwm && tok == model.shift()) next.state = shift_window(next.state, windows);
    out.push_back(std::move(next));
  }
  return out;
}

}  // namespace

std::vector<BeamHypothesis> beam_step(const std::vector<BeamHypothesis>& beams, SequenceModel& model,
                                      const SearchConfig& config) {
  std::vector<BeamHypothesis> candidates;
  for (const auto& hyp : beams) {
    if (!expandable(hyp, config)) {
      candidates.push_back(hyp);
      continue;
    }
    for (auto& next : expand(hyp, model, config, config.beam)) candidates.push_back(std::move(next));
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const BeamHypothesis& a, const BeamHypothesis& b) {
    return normalized_score(a) > normalized_score(b);
  });
  if (static_cast<int>(candidates.size()) > config.beam) candidates.resize(config.beam);
  return candidates;
}

SearchResult beam_search(SequenceModel& model, const SearchConfig& config) {
  if (config.beam < 1 || config.max_len < 1) throw std::invalid_argument("beam_search: need B >= 1 and T_y >= 1");
  BeamHypothesis root;
  root.state = model.initial_state();
  std::vector<BeamHypothesis> beams{std::move(root)};
  while (std::any_of(beams.begin(), beams.end(), [&](const auto& h) { return expandable(h, config); })) {
    beams = beam_step(beams, model, config);
    if (beams.empty()) break;
  }
  SearchResult result;
  if (!beams.empty()) result.best = beams.front();
  result.truncated = !result.best.completed;
  result.beams = std::move(beams);
  return result;
}

SearchResult greedy_decode(SequenceModel& model, const SearchConfig& config) {
  BeamHypothesis hyp;
  hyp.state = model.initial_state();
  while (expandable(hyp, config)) {
    auto next = expand(hyp, model, config, 1);
    if (next.empty()) break;
    hyp = std::move(next.front());
  }
  SearchResult result;
  result.truncated = !hyp.completed;
  result.best = hyp;
  result.beams = {std::move(hyp)};
  return result;
}

SearchResult swm_decode(SequenceModel& model, std::span<const int> budgets, int beam, int max_len) {
  SearchConfig config{beam, max_len, Mode::kSwm, std::vector<int>(budgets.begin(), budgets.end())};
  return beam_search(model, config);
}

SearchResult dwm_decode(SequenceModel& model, int beam, int max_len) {
  return beam_search(model, SearchConfig{beam, max_len, Mode::kDwm, {}});
}

std::string Summary::text() const {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<int> static_budgets(int doc_len, const WindowPlan& plan, const InferenceConfig& config) {
  const auto weights = static_weights(plan.count(), config.k, config.d);
  return window_budgets(weights, expected_summary_length(doc_len, config.stats, config.max_len));
}

Summary summarize(const ModelParams<double>& params, const Vocabulary& vocab, const Document& document,
                  const InferenceConfig& config) {
  Summary summary;
  std::span<const std::string> tokens = document.tokens;
  if (config.mode == Mode::kStan && static_cast<int>(tokens.size()) > config.max_input) {
    tokens = tokens.first(config.max_input);
    summary.input_truncated = true;
  }
  if (tokens.empty()) return summary;
  auto source = extend_source(vocab, tokens);
  const int doc_len = static_cast<int>(tokens.size());
  auto plan = segment(doc_len, config.effective_window());
  summary.window_count = plan.count();
  SearchConfig search{config.beam, config.max_len, config.mode, {}};
  if (config.mode == Mode::kSwm) summary.budgets = search.budgets = static_budgets(doc_len, plan, config);

  const int extended = source.extended_size(vocab);
  PointerGeneratorSession session(params, source.ids, plan, extended);
  const auto result = beam_search(session, search);
  summary.truncated = result.truncated;
  const auto& best = result.best;
  for (std::size_t i = 0; i < best.tokens.size(); ++i) {
    const TokenId id = best.tokens[i];
    if (id == params.eos()) break;
    const bool is_shift = id == params.shift();
    TraceEntry entry{std::string(source.surface(vocab, id)), best.windows[i] + 1, is_shift};
    if (!is_shift) {
      summary.tokens.push_back(entry.token);
      summary.token_windows.push_back(entry.window);
    }
    summary.trace.push_back(std::move(entry));
  }
  return summary;
}

std::vector<std::string> lead3(const Document& document) {
  std::vector<std::string> out;
  const auto n = std::min<std::size_t>(3, document.sentences.size());
  for (std::size_t s = 0; s < n; ++s) {
    for (const auto& t : document.sentence(s)) out.push_back(t);
  }
  return out;
}

AnnotationStyle parse_annotation_style(std::string_view text) {
  if (text == "none") return AnnotationStyle::kNone;
  if (text == "tags") return AnnotationStyle::kTags;
  if (text == "ansi") return AnnotationStyle::kAnsi;
  throw std::invalid_argument("unknown annotation style '" + std::string(text) + "' (none, tags, ansi)");
}

std::string render_annotated(const Summary& summary, AnnotationStyle style) {
  if (style == AnnotationStyle::kNone) return summary.text();
  static constexpr int kColors[] = {31, 32, 33, 34, 35, 36};
  std::string out;
  int current = 0;
  for (std::size_t i = 0; i < summary.tokens.size(); ++i) {
    if (i > 0) out += ' ';
    const int w = summary.token_windows[i];
    if (w != current) {
      if (style == AnnotationStyle::kTags) {
        out += "[w" + std::to_string(w) + "] ";
      } else {
        if (current != 0) out += "\x1b[0m";
        out += "\x1b[" + std::to_string(kColors[(w - 1) % 6]) + "m";
      }
      current = w;
    }
    out += summary.tokens[i];
  }
  if (style == AnnotationStyle::kAnsi && current != 0) out += "\x1b[0m";
  return out;
}

std::string trace_jsonl(const Summary& summary) {
  std::string out;
  for (std::size_t i = 0; i < summary.trace.size(); ++i) {
    nlohmann::ordered_json obj;
    obj["index"] = i;
    obj["token"] = summary.trace[i].token;
    obj["window"] = summary.trace[i].window;
    obj["shift"] = summary.trace[i].shift;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

}  // namespace winsum
