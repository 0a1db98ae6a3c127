#include "winsum/windowing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace winsum {

void WindowSpec::validate() const {
  if (length <= 0 || stride <= 0 || stride > length) {
    throw std::invalid_argument("invalid window spec: need 0 < ss <= T_w (T_w=" + std::to_string(length) +
                                ", ss=" + std::to_string(stride) + ")");
  }
}

int WindowPlan::last_window_containing(int pos) const {
  return std::min(count() - 1, pos / stride);
}

int WindowPlan::last_window_covering(int begin, int end) const {
  const int i = std::min(count() - 1, begin / stride);
  if (offsets[i] <= begin && end <= offsets[i] + window_length) return i;
  return -1;
}

WindowPlan segment(int doc_len, const WindowSpec& spec) {
  spec.validate();
  if (doc_len < 1) throw std::invalid_argument("segment: document must contain at least one token");
  WindowPlan plan;
  plan.doc_len = doc_len;
  plan.window_length = spec.length;
  plan.stride = spec.stride;
  int n = 1;
  if (doc_len > spec.length) n = (doc_len - spec.length + spec.stride - 1) / spec.stride + 1;
  plan.offsets.resize(n);
  for (int i = 0; i < n; ++i) plan.offsets[i] = i * spec.stride;
  plan.padded_tail = plan.offsets.back() + spec.length - doc_len;
  return plan;
}

std::vector<double> static_weights(int n, double k, double d) {
  if (n < 1) throw std::invalid_argument("static_weights: need at least one window");
  std::vector<double> logits(n);
  for (int i = 1; i <= n; ++i) logits[i - 1] = -k * (1.0 + i * std::pow(d, i));
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& v : logits) total += (v = std::exp(v - top));
  for (auto& v : logits) v /= total;
  return logits;
}

int majority_length(std::span<const int> lengths) {
  if (lengths.empty()) throw std::invalid_argument("majority_length: empty list");
  std::vector<int> sorted(lengths.begin(), lengths.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t covered = (9 * n + 9) / 10;  // ceil(0.9 n)
  return sorted[covered - 1];
}

CorpusStats compute_corpus_stats(std::span<const SummaryPair> corpus) {
  std::vector<int> docs, sums;
  for (const auto& p : corpus) {
    docs.push_back(static_cast<int>(p.document.size()));
    sums.push_back(static_cast<int>(p.summary.size()));
  }
  return {majority_length(docs), majority_length(sums)};
}

int expected_summary_length(int doc_len, const CorpusStats& stats, int max_len) {
  if (!stats.valid()) throw std::invalid_argument("expected_summary_length: invalid corpus statistics");
  const double expected = static_cast<double>(stats.majority_sum_len) * doc_len / stats.majority_doc_len;
  const long rounded = std::lround(expected);
  return static_cast<int>(std::clamp<long>(rounded, 1, std::max(1, max_len)));
}

std::vector<int> window_budgets(std::span<const double> weights, int expected_len) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> budgets(n);
  std::vector<double> remainder(n);
  int assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double real = expected_len * weights[i];
    budgets[i] = static_cast<int>(std::floor(real));
    remainder[i] = real - budgets[i];
    assigned += budgets[i];
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  const int deficit = std::clamp(expected_len - assigned, 0, n);
  for (int r = 0; r < deficit; ++r) ++budgets[order[r]];
  return budgets;
}

int window_for_step(std::span<const int> budgets, int step) {
  int cumulative = 0;
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    cumulative += budgets[i];
    if (step < cumulative) return static_cast<int>(i);
  }
  return std::max(0, static_cast<int>(budgets.size()) - 1);
}

Eigen::VectorXd sentence_embedding(std::span<const std::string> tokens, const Embeddings& embeddings) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(embeddings.dim());
  for (const auto& t : tokens) sum += embeddings.table.row(embeddings.vocab.id_of(t)).transpose();
  return sum;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

std::vector<int> map_summary_to_windows(const SummaryPair& pair, const WindowPlan& plan,
                                        const Embeddings& embeddings) {
  const auto& doc = pair.document;
  std::vector<Eigen::VectorXd> source;
  std::vector<int> source_window;
  for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
    source.push_back(sentence_embedding(doc.sentence(s), embeddings));
    const auto& span = doc.sentences[s];
    int w = plan.last_window_covering(static_cast<int>(span.begin), static_cast<int>(span.end));
    if (w < 0) w = plan.last_window_containing(static_cast<int>(span.end) - 1);
    source_window.push_back(w + 1);
  }
  std::vector<int> assigned;
  for (std::size_t s = 0; s < pair.summary.sentences.size(); ++s) {
    if (source.empty()) {
      assigned.push_back(1);
      continue;
    }
    const auto query = sentence_embedding(pair.summary.sentence(s), embeddings);
    std::size_t best = 0;
    double best_sim = cosine_similarity(query, source[0]);
    for (std::size_t j = 1; j < source.size(); ++j) {
      const double sim = cosine_similarity(query, source[j]);
      if (sim > best_sim) {
        best_sim = sim;
        best = j;
      }
    }
    assigned.push_back(source_window[best]);
  }
  return assigned;
}

std::vector<int> sequentialize(std::span<const int> window_indices) {
  std::vector<int> out(window_indices.begin(), window_indices.end());
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = std::max(out[i], out[i - 1]);
  return out;
}

ShiftAnnotatedSummary inject_shift_tokens(const Document& summary, std::span<const int> seq_indices) {
  if (seq_indices.size() != summary.sentences.size()) {
    throw std::invalid_argument("inject_shift_tokens: one window index per summary sentence required");
  }
  ShiftAnnotatedSummary out;
  out.sequential.assign(seq_indices.begin(), seq_indices.end());
  const std::string shift(Vocabulary::kShiftSurface);
  int previous = 1;
  for (std::size_t s = 0; s < summary.sentences.size(); ++s) {
    for (int k = previous; k < seq_indices[s]; ++k) out.tokens.push_back(shift);
    previous = std::max(previous, seq_indices[s]);
    for (const auto& t : summary.sentence(s)) out.tokens.push_back(t);
  }
  out.tokens.emplace_back(Vocabulary::kEosSurface);
  return out;
}

std::vector<std::string> strip_shift_tokens(std::span<const std::string> tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (t != Vocabulary::kShiftSurface) out.push_back(t);
  }
  if (!out.empty() && out.back() == Vocabulary::kEosSurface) out.pop_back();
  return out;
}

ShiftAnnotatedSummary annotate_summary(const SummaryPair& pair, const WindowSpec& spec, const Embeddings& embeddings) {
  const auto plan = segment(std::max<int>(1, static_cast<int>(pair.document.size())), spec);
  auto assigned = map_summary_to_windows(pair, plan, embeddings);
  auto sequential = sequentialize(assigned);
  auto out = inject_shift_tokens(pair.summary, sequential);
  out.assigned = std::move(assigned);
  return out;
}

}  // namespace winsum
