// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Tolerances are fixed here and nowhere else.

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../oracles/oracles.hpp"
#include "../oracles/toy.hpp"
#include "winsum/checkpoint.hpp"
#include "winsum/inference.hpp"
#include "winsum/rouge.hpp"
#include "winsum/synthetic.hpp"
#include "winsum/training.hpp"

using namespace winsum;

namespace {

constexpr double kGradTolerance = 1e-3;
constexpr double kGradStep = 1e-4;
constexpr double kGradSeconds = 60;
constexpr double kSumTolerance = 1e-6;
constexpr double kRealTolerance = 1e-9;
constexpr double kGoldenTolerance = 1e-6;
constexpr double kLossDrop = 0.90;
constexpr int kMaxEpochs = 200;
constexpr double kLearningSeconds = 600;
constexpr int kLongDocTokens = 13000;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome gradient_correctness() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  for (Mode mode : {Mode::kStan, Mode::kSwm, Mode::kDwm}) {
    const auto p = toy::model(mode);
    const auto plan = toy::plan(mode);
    const auto src = toy::source();
    const auto tgt = toy::target(mode);
    auto grads = p.zeros_like();
    sequence_loss(p, src, plan, tgt.tokens, tgt.windows, &grads);
    const auto reports = oracle::check_gradients(
        p, grads, [&](const ModelParams<double>& q) { return oracle::sequence_loss(q, src, plan, tgt.tokens, tgt.windows); },
        kGradStep);
    o.require(reports.size() == 17, std::string(to_string(mode)) + ": not every parameter group was checked");
    for (const auto& r : reports) {
      worst = std::max(worst, r.max_rel_error);
      o.require(r.max_rel_error < kGradTolerance,
                std::string(to_string(mode)) + " " + r.tensor + " rel error " + fmt("%.3g", r.max_rel_error));
    }
  }
  const double secs = seconds_since(start);
  o.require(secs < kGradSeconds, "took " + fmt("%.1f", secs) + " s");
  if (o.pass) o.detail = "max rel error " + fmt("%.2e", worst) + " over 3 modes, " + fmt("%.1f", secs) + " s";
  return o;
}

Outcome distribution_invariants() {
  Outcome o;
  Random rng(2024);
  double worst = 0;
  for (int c = 0; c < 1000 && o.pass; ++c) {
    const Mode mode = static_cast<Mode>(rng.below(3));
    const auto p = toy::model(mode, 100 + c);
    const int len = 1 + static_cast<int>(rng.below(10));
    const int oovs = static_cast<int>(rng.below(3));
    std::vector<TokenId> ids(len);
    for (auto& id : ids) {
      const auto r = rng.below(10);
      id = r < 2 ? p.pad() : r < 3 && oovs > 0 ? p.vocab_size() + static_cast<int>(rng.below(oovs))
                                               : static_cast<TokenId>(rng.below(p.content_size()));
    }
    ids[rng.below(len)] = static_cast<TokenId>(rng.below(p.content_size()));  // at least one real token
    const auto window = encode_window(p, ids);
    DecoderState<double> state;
    state.hidden = state.cell = Eigen::VectorXd(p.decoder_hidden());
    for (int i = 0; i < p.decoder_hidden(); ++i) {
      state.hidden(i) = rng.uniform(-1, 1);
      state.cell(i) = rng.uniform(-2, 2);
    }
    const TokenId input = static_cast<TokenId>(rng.below(p.vocab_size() + oovs));
    const auto [out, next] = decode_step(p, state, input, window, p.vocab_size() + oovs);
    const double sa = out.attention.sum(), sv = out.vocab_probs.sum(), se = out.extended_probs.sum();
    const double copy = se - out.p_gen * sv - (1 - out.p_gen);
    for (double e : {sa - 1, sv - 1, se - 1, copy}) worst = std::max(worst, std::abs(e));
    o.require(std::abs(sa - 1) < kSumTolerance, "attention sums to " + fmt("%.12f", sa));
    o.require(std::abs(sv - 1) < kSumTolerance, "P_V sums to " + fmt("%.12f", sv));
    o.require(std::abs(se - 1) < kSumTolerance, "extended P sums to " + fmt("%.12f", se));
    o.require(std::abs(copy) < kSumTolerance, "copy-mass identity off by " + fmt("%.3g", copy));
  }
  if (o.pass) o.detail = "1000 cases, max deviation " + fmt("%.2e", worst);
  return o;
}

Outcome scheduler_oracles() {
  Outcome o;
  Random rng(77);
  for (int c = 0; c < 500; ++c) {
    const int n = 1 + static_cast<int>(rng.below(12));
    const double k = rng.uniform(0, 3), d = rng.uniform(0, 2);
    const auto got = static_weights(n, k, d);
    const auto want = oracle::static_weights(n, k, d);
    for (int i = 0; i < n; ++i) o.require(std::abs(got[i] - want[i]) < kRealTolerance, "static_weights mismatch");
    const auto uniform = static_weights(n, k, 0.0);
    for (double w : uniform) o.require(w == 1.0 / n, "d=0 weights not exactly uniform");

    std::vector<int> lengths(1 + rng.below(60));
    for (auto& l : lengths) l = 1 + static_cast<int>(rng.below(100));
    o.require(majority_length(lengths) == oracle::majority_length(lengths), "majority_length mismatch");

    const CorpusStats stats{1 + static_cast<int>(rng.below(2000)), 1 + static_cast<int>(rng.below(200))};
    const int doc_len = 1 + static_cast<int>(rng.below(20000)), max_len = 1 + static_cast<int>(rng.below(200));
    o.require(expected_summary_length(doc_len, stats, max_len) ==
                  oracle::expected_summary_length(doc_len, stats.majority_sum_len, stats.majority_doc_len, max_len),
              "expected_summary_length mismatch");

    const int windows = 1 + static_cast<int>(rng.below(10));
    const auto weights = static_weights(windows, rng.uniform(0, 3), c % 4 == 0 ? 0.0 : rng.uniform(0, 2));
    const int total = static_cast<int>(rng.below(150));
    const auto budgets = window_budgets(weights, total);
    o.require(budgets == oracle::window_budgets(weights, total), "window_budgets mismatch");
  }
  if (o.pass) o.detail = "500 instances x 4 functions, d=0 exactly uniform";
  return o;
}

Outcome dwm_preprocessing() {
  Outcome o;
  // The worked example: windows [1,3,2,4,3] become [1,3,3,4,4], two shifts
  // after sentence 1 and one after sentence 3.
  const std::vector<int> assigned{1, 3, 2, 4, 3};
  const auto seq = sequentialize(assigned);
  o.require(seq == std::vector<int>{1, 3, 3, 4, 4}, "worked example sequentialization");
  const auto summary = Document::from_text("s1 . s2 . s3 . s4 . s5 .");
  const auto annotated = inject_shift_tokens(summary, seq);
  const std::vector<std::string> expect{"s1", ".", "-->", "-->", "s2", ".", "s3", ".", "-->", "s4", ".", "s5", ".", "<eos>"};
  o.require(annotated.tokens == expect, "worked example shift placement");

  Random rng(404);
  const auto emb = synthetic_embeddings(40, 6, 5);
  for (int c = 0; c < 200; ++c) {
    std::vector<std::string> sentences;
    const int count = 3 + static_cast<int>(rng.below(10));
    for (int s = 0; s < count; ++s) {
      std::string text;
      const int len = 2 + static_cast<int>(rng.below(7));
      for (int i = 0; i < len; ++i) text += "w" + std::to_string(rng.below(40)) + " ";
      sentences.push_back(text + ".");
    }
    std::string doc, sum;
    for (const auto& s : sentences) doc += s + " ";
    const int picks = 1 + static_cast<int>(rng.below(5));
    for (int i = 0; i < picks; ++i) sum += sentences[rng.below(sentences.size())] + " ";
    const auto pair = make_pair(doc, sum);
    const int tw = 5 + static_cast<int>(rng.below(26));
    const WindowSpec spec{tw, 1 + static_cast<int>(rng.below(tw))};
    const auto out = annotate_summary(pair, spec, emb);
    o.require(out.assigned == oracle::map_windows(pair, spec, emb), "window mapping differs from brute force");
    o.require(out.sequential == oracle::running_max(out.assigned), "sequentialize differs from running max");
    o.require(strip_shift_tokens(out.tokens) == pair.summary.tokens, "inject/strip round trip");
    const auto shifts = std::count(out.tokens.begin(), out.tokens.end(), "-->");
    o.require(shifts == out.sequential.back() - 1, "shift count");
  }
  if (o.pass) o.detail = "worked example verbatim, 200 random documents";
  return o;
}

Eigen::VectorXd dist(std::initializer_list<double> values) {
  Eigen::VectorXd v(values.size());
  int i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

Outcome beam_oracle() {
  Outcome o;
  // Tokens a=0 b=1 c=2, EOS=3, SHIFT=4.
  constexpr TokenId a = 0, b = 1, eos = 3, shift = 4;
  const auto flat = dist({0.25, 0.25, 0.25, 0.25, 0});
  auto check = [&](oracle::TableModel& model, Mode mode, int beam, const char* name) {
    const SearchConfig config{beam, 3, mode, {}};
    const auto got = beam_search(model, config).best.tokens;
    const auto want = oracle::exhaustive_best(model, 3, mode == Mode::kDwm);
    o.require(got == want.tokens, std::string(name) + " B=" + std::to_string(beam));
  };

  // A completed [EOS] leads after step 1; [a b EOS] overtakes it later.
  oracle::TableModel overtake(5, eos, shift, 1, flat);
  overtake.set({}, dist({0.4, 0.1, 0, 0.5, 0}));
  overtake.set({a}, dist({0, 0.95, 0, 0.05, 0}));
  overtake.set({a, b}, dist({0.005, 0.005, 0, 0.99, 0}));
  for (int beam : {2, 3}) check(overtake, Mode::kStan, beam, "overtake");
  {
    const SearchConfig config{2, 3, Mode::kStan, {}};
    BeamHypothesis root;
    auto first = beam_step({root}, overtake, config);
    const bool completed_leads = first.front().completed;
    const auto final_best = beam_search(overtake, config).best;
    o.require(completed_leads && final_best.tokens == std::vector<TokenId>{a, b, eos},
              "no incomplete hypothesis overtook a completed one");
  }

  oracle::TableModel greedy(5, eos, shift, 1, flat);
  greedy.set({}, dist({0.6, 0.2, 0.1, 0.1, 0}));
  greedy.set({a}, dist({0.05, 0.8, 0.05, 0.1, 0}));
  greedy.set({a, b}, dist({0.03, 0.03, 0.04, 0.9, 0}));
  for (int beam : {1, 2, 3}) check(greedy, Mode::kStan, beam, "greedy-optimal");

  oracle::TableModel shifting(5, eos, shift, 2, dist({0.2, 0.2, 0.2, 0.2, 0.2}));
  shifting.set({}, dist({0.5, 0.1, 0.05, 0.05, 0.3}));
  shifting.set({a}, dist({0.05, 0.05, 0.05, 0.15, 0.7}));
  shifting.set({a, shift}, dist({0.02, 0.02, 0.02, 0.9, 0.04}));
  for (int beam : {1, 2, 3}) check(shifting, Mode::kDwm, beam, "dwm shift");

  // With a beam wider than the search space the search is exhaustive.
  Random rng(5);
  for (int c = 0; c < 50; ++c) {
    const int vocab = 3 + static_cast<int>(rng.below(3));
    const Mode mode = c % 2 ? Mode::kDwm : Mode::kStan;
    oracle::TableModel model(vocab, vocab - 2, vocab - 1, 3, oracle::random_distribution(rng, vocab));
    std::vector<std::vector<TokenId>> prefixes{{}};
    for (int depth = 0; depth < 2; ++depth) {
      std::vector<std::vector<TokenId>> next;
      for (const auto& pre : prefixes) {
        model.set(pre, oracle::random_distribution(rng, vocab));
        for (int t = 0; t < vocab; ++t) {
          auto q = pre;
          q.push_back(t);
          next.push_back(q);
        }
      }
      prefixes = std::move(next);
    }
    const SearchConfig config{200, 3, mode, {}};
    const auto got = beam_search(model, config).best.tokens;
    o.require(got == oracle::exhaustive_best(model, 3, mode == Mode::kDwm).tokens, "wide-beam random table");
  }
  if (o.pass) o.detail = "3 hand-set tables x B in {1,2,3} (overtake at B=2,3), 50 random wide-beam tables";
  return o;
}

// Index of the first SHIFT in a summary trace, or -1.
int first_shift(const Summary& s) {
  for (std::size_t i = 0; i < s.trace.size(); ++i) {
    if (s.trace[i].shift) return static_cast<int>(i);
  }
  return -1;
}

Outcome learning_gate() {
  Outcome o;
  const auto start = std::chrono::steady_clock::now();
  CopyTaskSpec spec;  // 50 pairs, 2 windows of 12 with stride 10, 5-token sentences
  const auto corpus = copy_task_corpus(spec);
  const auto emb = synthetic_embeddings(spec.words, 16, spec.seed);
  TrainConfig config;
  config.mode = Mode::kDwm;
  config.tw = 12;
  config.ss = 10;
  config.ty = 20;
  config.encoder_hidden = 32;
  config.learning_rate = 0.01;
  config.batch_size = 10;
  config.max_epochs = kMaxEpochs;
  config.seed = 1;
  const auto stats = compute_corpus_stats(corpus);
  auto run = start_training(emb, config);
  train(run, corpus, {}, emb, config, stats);
  const double first = run.history.front().loss, last = run.history.back().loss;
  const double drop = 1 - last / first;
  o.require(drop > kLossDrop, "loss " + fmt("%.4f", first) + " -> " + fmt("%.4f", last));

  CopyTaskSpec held = spec;
  held.pairs = 1;
  held.seed = 99;
  const auto doc = copy_task_corpus(held).front();
  const auto reference = annotate_summary(doc, config.window_spec(), emb);
  const auto ref_shift = std::find(reference.tokens.begin(), reference.tokens.end(), "-->") - reference.tokens.begin();
  const auto summary = summarize(run.params, emb.vocab, doc.document, config.inference(stats));
  const int at = first_shift(summary);
  bool prefix_ok = at == ref_shift;
  for (int i = 0; prefix_ok && i < at; ++i) prefix_ok = summary.trace[i].token == reference.tokens[i];
  const bool lands = prefix_ok && at + 1 < static_cast<int>(summary.trace.size()) && summary.trace[at + 1].window == 2;
  o.require(lands, "held-out summary has no correct shift: " + summary.text());
  const double secs = seconds_since(start);
  o.require(secs < kLearningSeconds, "took " + fmt("%.1f", secs) + " s");
  if (o.pass) {
    o.detail = "loss " + fmt("%.3f", first) + " -> " + fmt("%.5f", last) + " (" + fmt("%.1f", 100 * drop) +
               "% drop), shift after token " + std::to_string(at) + ", " + fmt("%.1f", secs) + " s";
  }
  return o;
}

Outcome long_input() {
  Outcome o;
  CopyTaskSpec spec;
  spec.pairs = 20;
  spec.windows = 3;  // 1,140-token documents
  spec.window = {400, 380};
  spec.seed = 11;
  const auto corpus = copy_task_corpus(spec);
  const auto emb = synthetic_embeddings(spec.words, 16, spec.seed);
  TrainConfig config;
  config.mode = Mode::kDwm;
  config.tw = 400;
  config.ss = 380;
  config.tx = spec.doc_len();
  config.encoder_hidden = 16;
  config.learning_rate = 0.01;
  config.batch_size = 10;
  config.max_epochs = 200;
  const auto stats = compute_corpus_stats(corpus);
  auto run = start_training(emb, config);
  train(run, corpus, {}, emb, config, stats);

  CopyTaskSpec big = spec;
  big.pairs = 1;
  big.windows = 35;
  big.seed = 5;
  const auto doc = copy_task_corpus(big).front().document;
  o.require(static_cast<int>(doc.size()) >= kLongDocTokens, "document too short");
  const auto summary = summarize(run.params, emb.vocab, doc, config.inference(stats));
  o.require(!summary.input_truncated, "input was truncated");
  o.require(summary.window_count == 35, "expected 35 windows");
  o.require(!summary.truncated, "summary hit T_y without <eos>");
  std::set<int> visited;
  for (const auto& t : summary.trace) visited.insert(t.window);
  o.require(visited.size() >= 2, "trace stays in one window");
  if (o.pass) {
    o.detail = std::to_string(doc.size()) + " tokens, " + std::to_string(summary.window_count) + " windows, trace visits " +
               std::to_string(visited.size()) + " windows, " + std::to_string(summary.tokens.size()) + " output tokens";
  }
  return o;
}

Outcome rouge_correctness() {
  Outcome o;
  std::vector<std::vector<std::string>> seqs{{}};
  for (int len = 1; len <= 7; ++len) {
    for (int code = 0; code < (1 << len); ++code) {
      std::vector<std::string> s;
      for (int i = 0; i < len; ++i) s.push_back(code >> i & 1 ? "b" : "a");
      seqs.push_back(s);
    }
  }
  long pairs = 0;
  for (const auto& x : seqs) {
    for (const auto& y : seqs) {
      const auto lcs = oracle::brute_lcs(x, y);
      const auto got = rouge_l(x, y);
      const double p = x.empty() ? 0.0 : static_cast<double>(lcs) / x.size();
      const double r = y.empty() ? 0.0 : static_cast<double>(lcs) / y.size();
      o.require(lcs_length(x, y) == lcs && std::abs(got.f1 - oracle::f1(p, r)) < 1e-12 &&
                    std::abs(got.precision - p) < 1e-12 && std::abs(got.recall - r) < 1e-12,
                "rouge_l differs from brute-force LCS");
      ++pairs;
    }
  }

  // Hand-scored per document (R-1, R-2, R-L F1): (5/6, 3/5, 5/6), (2/3, 0, 2/3),
  // (1, 0, 1/3). R-1 precision (5/6, 1, 1), recall (5/6, 1/2, 1).
  std::vector<SummaryPair> golden{make_pair("x .", "the cat sat on the mat"), make_pair("y .", "a b c d"),
                                  make_pair("z .", "x y z")};
  const std::vector<std::vector<std::string>> candidates{
      {"the", "cat", "lay", "on", "the", "mat"}, {"a", "c"}, {"z", "y", "x"}};
  std::size_t next = 0;
  const auto scores = evaluate_corpus([&](const SummaryPair&) { return candidates[next++]; }, golden);
  o.require(std::abs(scores.rouge1.f1 - 2.5 / 3) < kGoldenTolerance, "golden R-1");
  o.require(std::abs(scores.rouge2.f1 - 0.2) < kGoldenTolerance, "golden R-2");
  o.require(std::abs(scores.rouge_l.f1 - (5.0 / 6 + 2.0 / 3 + 1.0 / 3) / 3) < kGoldenTolerance, "golden R-L");
  o.require(std::abs(scores.rouge1.precision - (5.0 / 6 + 2) / 3) < kGoldenTolerance, "golden R-1 precision");
  o.require(std::abs(scores.rouge1.recall - (5.0 / 6 + 1.5) / 3) < kGoldenTolerance, "golden R-1 recall");

  std::vector<SummaryPair> lead;
  Random rng(8);
  for (int i = 0; i < 20; ++i) {
    std::vector<std::string> sents;
    for (int s = 0; s < 5; ++s) sents.push_back("s" + std::to_string(rng.below(50)) + " w" + std::to_string(s) + " .");
    lead.push_back(make_pair(sents[0] + " " + sents[1] + " " + sents[2] + " " + sents[3] + " " + sents[4],
                             sents[0] + " " + sents[1] + " " + sents[2]));
  }
  const auto lead_scores = evaluate_corpus([](const SummaryPair& p) { return lead3(p.document); }, lead);
  o.require(lead_scores.rouge_l.f1 == 1.0, "Lead-3 R-L f1 " + fmt("%.6f", lead_scores.rouge_l.f1));
  if (o.pass) o.detail = std::to_string(pairs) + " exhaustive pairs, golden corpus, Lead-3 f1 = 1";
  return o;
}

Outcome determinism() {
  Outcome o;
  CopyTaskSpec spec;
  spec.pairs = 12;
  const auto corpus = copy_task_corpus(spec);
  spec.pairs = 3;
  spec.seed = 8;
  const auto dev = copy_task_corpus(spec);
  const auto emb = synthetic_embeddings(spec.words, 16, spec.seed);
  TrainConfig config;
  config.tw = 12;
  config.ss = 10;
  config.ty = 20;
  config.encoder_hidden = 8;
  config.batch_size = 4;
  config.max_epochs = 5;
  config.learning_rate = 0.01;
  config.seed = 42;
  const auto stats = compute_corpus_stats(corpus);
  auto once = [&] {
    auto run = start_training(emb, config);
    train(run, corpus, dev, emb, config, stats);
    const auto bytes = serialize_checkpoint(make_checkpoint(run.params, emb.vocab, config, stats, &run.adam, run.epoch));
    std::string text;
    for (const auto& p : dev) text += summarize(run.best_params, emb.vocab, p.document, config.inference(stats)).text() + "\n";
    return std::make_pair(bytes, text);
  };
  const auto first = once();
  const auto second = once();
  o.require(first.first == second.first, "checkpoint bytes differ");
  o.require(first.second == second.second, "summaries differ");
  if (o.pass) o.detail = "checkpoints identical (" + std::to_string(first.first.size()) + " bytes), summaries identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"distribution invariants", distribution_invariants},
      {"scheduler oracle equivalence", scheduler_oracles},
      {"DWM preprocessing oracle", dwm_preprocessing},
      {"beam search oracle", beam_oracle},
      {"learning gate", learning_gate},
      {"long-input contract", long_input},
      {"ROUGE correctness", rouge_correctness},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
