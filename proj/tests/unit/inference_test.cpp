#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>
#include <json.hpp>

#include "../oracles/oracles.hpp"
#include "../oracles/toy.hpp"
#include "winsum/inference.hpp"

using namespace winsum;

namespace {

// Ids 0..3 are words, 4 is EOS, 5 is SHIFT.
constexpr TokenId kEos = 4, kShift = 5;
constexpr int kVocab = 6;

Eigen::VectorXd dist(std::initializer_list<double> values) {
  Eigen::VectorXd p(kVocab);
  int i = 0;
  for (double v : values) p(i++) = v;
  return p / p.sum();
}

oracle::TableModel random_table(Random& rng, int windows, bool with_shift, int depth) {
  auto draw = [&] {
    Eigen::VectorXd p = oracle::random_distribution(rng, kVocab);
    if (!with_shift) p(kShift) = 0;
    return Eigen::VectorXd(p / p.sum());
  };
  oracle::TableModel m(kVocab, kEos, kShift, windows, draw());
  std::vector<std::vector<TokenId>> frontier{{}};
  for (int d = 0; d < depth; ++d) {
    std::vector<std::vector<TokenId>> next;
    for (const auto& prefix : frontier) {
      m.set(prefix, draw());
      for (TokenId t = 0; t < kVocab; ++t) {
        if (t == kEos) continue;
        auto longer = prefix;
        longer.push_back(t);
        next.push_back(std::move(longer));
      }
    }
    frontier = std::move(next);
  }
  return m;
}

Summary summary_of(std::vector<std::string> tokens, std::vector<int> windows) {
  Summary s;
  s.tokens = std::move(tokens);
  s.token_windows = std::move(windows);
  for (std::size_t i = 0; i < s.tokens.size(); ++i) s.trace.push_back({s.tokens[i], s.token_windows[i], false});
  return s;
}

}  // namespace

TEST(NormalizedScore, IsLogProbabilityPerToken) {
  BeamHypothesis h;
  EXPECT_EQ(normalized_score(h), 0.0);
  h.tokens = {1, 2, 3};
  h.log_prob = -3.0;
  EXPECT_DOUBLE_EQ(normalized_score(h), -1.0);
  h.tokens = {1, kShift, 2, kEos};
  h.log_prob = std::log(0.5) * 4;
  EXPECT_DOUBLE_EQ(normalized_score(h), std::log(0.5));
}

TEST(BeamSearch, WidthOneIsGreedy) {
  Random rng(1);
  for (int c = 0; c < 50; ++c) {
    auto m = random_table(rng, 2, c % 2 == 0, 3);
    const SearchConfig config{1, 6, c % 2 == 0 ? Mode::kDwm : Mode::kStan, {}};
    const auto beam = beam_search(m, config);
    const auto greedy = greedy_decode(m, config);
    EXPECT_EQ(beam.best.tokens, greedy.best.tokens);
    EXPECT_EQ(beam.best.windows, greedy.best.windows);
    EXPECT_DOUBLE_EQ(beam.best.log_prob, greedy.best.log_prob);
  }
}

TEST(BeamSearch, WideBeamFindsTheExhaustiveOptimum) {
  Random rng(2);
  for (int c = 0; c < 20; ++c) {
    const bool dwm = c % 2 == 0;
    auto m = random_table(rng, 3, dwm, 3);
    const int max_len = 3;
    const auto found = beam_search(m, SearchConfig{500, max_len, dwm ? Mode::kDwm : Mode::kStan, {}});
    const auto best = oracle::exhaustive_best(m, max_len, dwm);
    EXPECT_NEAR(normalized_score(found.best), best.score, 1e-12);
    EXPECT_EQ(found.best.tokens, best.tokens);
  }
}

TEST(BeamSearch, CompletedHypothesesCarryOverUnchanged) {
  oracle::TableModel m(kVocab, kEos, kShift, 1, dist({1, 1, 1, 1, 1, 0}));
  BeamHypothesis a, b;
  a.tokens = {0, kEos};
  a.log_prob = -1;
  a.completed = true;
  b.tokens = {1, kEos};
  b.log_prob = -2;
  b.completed = true;
  const std::vector<BeamHypothesis> beams{a, b};
  const auto next = beam_step(beams, m, SearchConfig{2, 10, Mode::kStan, {}});
  ASSERT_EQ(next.size(), 2u);
  EXPECT_EQ(next[0].tokens, a.tokens);
  EXPECT_EQ(next[1].tokens, b.tokens);
  EXPECT_EQ(beam_step(next, m, SearchConfig{2, 10, Mode::kStan, {}})[0].tokens, a.tokens);
}

TEST(BeamSearch, LiveExpansionsCanOvertakeACompletedHypothesis) {
  // After [0], continuing with 1 (p=0.9) beats the finished [0, EOS] with p=0.1.
  oracle::TableModel m(kVocab, kEos, kShift, 1, dist({0, 0, 0, 0, 1, 0}));
  m.set({}, dist({1, 0, 0, 0, 0, 0}));
  m.set({0}, dist({0, 9, 0, 0, 1, 0}));
  const auto r = beam_search(m, SearchConfig{2, 5, Mode::kStan, {}});
  EXPECT_EQ(r.best.tokens, (std::vector<TokenId>{0, 1, kEos}));
  EXPECT_TRUE(r.best.completed);
  EXPECT_FALSE(r.truncated);
}

TEST(BeamSearch, EarlyEosEndsTheSummary) {
  oracle::TableModel m(kVocab, kEos, kShift, 2, dist({1, 1, 1, 1, 1, 0}));
  m.set({}, dist({8, 1, 0, 0, 1, 0}));
  m.set({0}, dist({1, 1, 0, 0, 8, 0}));
  const auto r = swm_decode(m, std::vector<int>{3, 2}, 3, 10);
  EXPECT_EQ(r.best.tokens, (std::vector<TokenId>{0, kEos}));
  EXPECT_FALSE(r.truncated);
}

TEST(BeamSearch, StaticPolicyFollowsTheBudgets) {
  oracle::TableModel m(kVocab, kEos, kShift, 2, dist({6, 1, 1, 1, 1, 0}));
  const auto r = swm_decode(m, std::vector<int>{3, 2}, 1, 6);
  EXPECT_EQ(r.best.windows, (std::vector<int>{0, 0, 0, 1, 1, 1}));
  EXPECT_TRUE(r.truncated);
}

TEST(BeamSearch, ShiftIsNeverEmittedOutsideTheDynamicPolicy) {
  oracle::TableModel m(kVocab, kEos, kShift, 3, dist({1, 1, 1, 1, 1, 20}));
  for (Mode mode : {Mode::kStan, Mode::kSwm}) {
    const auto r = beam_search(m, SearchConfig{3, 6, mode, {2, 2, 2}});
    EXPECT_EQ(std::count(r.best.tokens.begin(), r.best.tokens.end(), kShift), 0);
  }
}

TEST(BeamSearch, DynamicPolicyAdvancesOnEveryShift) {
  oracle::TableModel m(kVocab, kEos, kShift, 3, dist({0, 0, 0, 0, 1, 0}));
  m.set({}, dist({1, 0, 0, 0, 0, 0}));
  m.set({0}, dist({0, 0, 0, 0, 0, 1}));
  m.set({0, kShift}, dist({0, 1, 0, 0, 0, 0}));
  m.set({0, kShift, 1}, dist({0, 0, 0, 0, 0, 1}));
  m.set({0, kShift, 1, kShift}, dist({0, 0, 1, 0, 0, 0}));
  const auto r = dwm_decode(m, 2, 10);
  EXPECT_EQ(r.best.tokens, (std::vector<TokenId>{0, kShift, 1, kShift, 2, kEos}));
  EXPECT_EQ(r.best.windows, (std::vector<int>{0, 0, 1, 1, 2, 2}));
}

TEST(BeamSearch, DynamicCursorClampsAtTheLastWindow) {
  oracle::TableModel m(kVocab, kEos, kShift, 2, dist({0, 0, 0, 0, 1, 0}));
  m.set({}, dist({0, 0, 0, 0, 0, 1}));
  m.set({kShift}, dist({0, 0, 0, 0, 0, 1}));
  m.set({kShift, kShift}, dist({0, 0, 0, 0, 0, 1}));
  m.set({kShift, kShift, kShift}, dist({1, 0, 0, 0, 0, 0}));
  const auto r = dwm_decode(m, 1, 10);
  EXPECT_EQ(r.best.windows, (std::vector<int>{0, 1, 1, 1, 1}));
}

TEST(BeamSearch, DynamicCursorIsNonDecreasingAndMovesOnlyOnShifts) {
  Random rng(3);
  for (int c = 0; c < 40; ++c) {
    auto m = random_table(rng, 3, true, 4);
    const auto r = dwm_decode(m, 3, 8);
    for (const auto& h : r.beams) {
      for (std::size_t i = 1; i < h.tokens.size(); ++i) {
        const int expected = std::min(2, h.windows[i - 1] + (h.tokens[i - 1] == kShift ? 1 : 0));
        EXPECT_EQ(h.windows[i], expected);
      }
    }
  }
}

TEST(BeamSearch, RespectsTheLengthLimit) {
  oracle::TableModel m(kVocab, kEos, kShift, 1, dist({5, 5, 1, 1, 0.01, 0}));
  const auto r = beam_search(m, SearchConfig{3, 4, Mode::kStan, {}});
  EXPECT_EQ(r.best.tokens.size(), 4u);
  EXPECT_TRUE(r.truncated);
  EXPECT_THROW(beam_search(m, SearchConfig{0, 4, Mode::kStan, {}}), std::invalid_argument);
}

TEST(Summarize, ShortInputUsesASingleWindow) {
  const auto p = toy::model(Mode::kDwm);
  const auto e = toy::embeddings();
  InferenceConfig c;
  c.mode = Mode::kDwm;
  c.window = {6, 4};
  c.max_len = 8;
  const auto s = summarize(p, e.vocab, Document::from_text("t1 t2 t3 ."), c);
  EXPECT_EQ(s.window_count, 1);
  for (const auto& t : s.trace) EXPECT_EQ(t.window, 1);
  EXPECT_LE(s.trace.size(), 8u);
}

TEST(Summarize, TraceAndTokensAgree) {
  const auto e = toy::embeddings();
  const auto doc = Document::from_text("t3 t5 t7 zork t3 t9 t11 t2 t6 t1 t4 t8 t10 t12");
  for (Mode mode : {Mode::kStan, Mode::kSwm, Mode::kDwm}) {
    const auto p = toy::model(mode);
    InferenceConfig c;
    c.mode = mode;
    c.window = {6, 4};
    c.max_input = 20;
    c.max_len = 10;
    c.beam = 3;
    c.stats = {10, 5};
    const auto s = summarize(p, e.vocab, doc, c);
    EXPECT_EQ(s.tokens.size(), s.token_windows.size());
    std::vector<std::string> content;
    int last = 1;
    for (const auto& t : s.trace) {
      EXPECT_GE(t.window, 1);
      EXPECT_LE(t.window, s.window_count);
      if (mode == Mode::kDwm) EXPECT_GE(t.window, last);
      last = t.window;
      EXPECT_EQ(t.shift, t.token == "-->");
      if (!t.shift) content.push_back(t.token);
    }
    EXPECT_EQ(content, s.tokens);
    if (mode == Mode::kSwm) {
      EXPECT_EQ(s.budgets.size(), static_cast<std::size_t>(s.window_count));
    }
    if (mode == Mode::kStan) EXPECT_EQ(s.window_count, 1);
  }
}

TEST(Summarize, FixedInputTruncatesLongDocuments) {
  const auto p = toy::model(Mode::kStan);
  const auto e = toy::embeddings();
  InferenceConfig c;
  c.mode = Mode::kStan;
  c.max_input = 5;
  c.max_len = 4;
  EXPECT_TRUE(summarize(p, e.vocab, Document::from_text("t1 t2 t3 t4 t5 t6"), c).input_truncated);
  EXPECT_FALSE(summarize(p, e.vocab, Document::from_text("t1 t2 t3 t4 t5"), c).input_truncated);
  EXPECT_TRUE(summarize(p, e.vocab, Document::from_text(""), c).tokens.empty());
}

TEST(Lead3, TakesTheFirstThreeSentences) {
  using T = std::vector<std::string>;
  EXPECT_EQ(lead3(Document::from_text("a . b . c . d . e .")), (T{"a", ".", "b", ".", "c", "."}));
  EXPECT_EQ(lead3(Document::from_text("a b . c")), (T{"a", "b", ".", "c"}));
  EXPECT_TRUE(lead3(Document::from_text("")).empty());
}

TEST(Rendering, TagsMarkEachWindowChange) {
  const auto s = summary_of({"a", "b", "c", "d"}, {1, 1, 2, 3});
  EXPECT_EQ(render_annotated(s, AnnotationStyle::kNone), "a b c d");
  EXPECT_EQ(render_annotated(s, AnnotationStyle::kTags), "[w1] a b [w2] c [w3] d");
}

TEST(Rendering, AnsiColoursResetAtTheEnd) {
  const auto s = summary_of({"a", "b", "c"}, {1, 1, 2});
  EXPECT_EQ(render_annotated(s, AnnotationStyle::kAnsi), "\x1b[31ma b \x1b[0m\x1b[32mc\x1b[0m");
  EXPECT_EQ(render_annotated(Summary{}, AnnotationStyle::kAnsi), "");
  EXPECT_EQ(parse_annotation_style("tags"), AnnotationStyle::kTags);
  EXPECT_THROW(parse_annotation_style("bold"), std::invalid_argument);
}

TEST(Rendering, TraceIsOneJsonObjectPerEmission) {
  Summary s = summary_of({"a", "b"}, {1, 2});
  s.trace.insert(s.trace.begin() + 1, TraceEntry{"-->", 1, true});
  const auto text = trace_jsonl(s);
  EXPECT_EQ(text,
            "{\"index\":0,\"token\":\"a\",\"window\":1,\"shift\":false}\n"
            "{\"index\":1,\"token\":\"-->\",\"window\":1,\"shift\":true}\n"
            "{\"index\":2,\"token\":\"b\",\"window\":2,\"shift\":false}\n");
  EXPECT_EQ(nlohmann::json::parse(text.substr(0, text.find('\n')))["token"], "a");
}
