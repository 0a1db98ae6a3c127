#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "winsum/corpus.hpp"

namespace winsum {

struct WindowSpec {
  int length = 400;  // T_w
  int stride = 380;  // ss

  // Throws std::invalid_argument unless 0 < stride <= length.
  void validate() const;
};

struct WindowPlan {
  int doc_len = 0;
  int window_length = 0;
  int stride = 0;
  std::vector<int> offsets;
  int padded_tail = 0;

  int count() const { return static_cast<int>(offsets.size()); }
  // 0-based index of the last window containing token `pos`.
  int last_window_containing(int pos) const;
  // 0-based index of the last window that fully contains [begin, end), or -1.
  int last_window_covering(int begin, int end) const;
};

WindowPlan segment(int doc_len, const WindowSpec& spec);

// Softmax over the logits -k (1 + i d^i), i = 1..n.
std::vector<double> static_weights(int n, double k, double d);

// Smallest v such that at least 90% of `lengths` are <= v.
int majority_length(std::span<const int> lengths);

struct CorpusStats {
  int majority_doc_len = 0;
  int majority_sum_len = 0;

  bool valid() const { return majority_doc_len > 0 && majority_sum_len > 0; }
};

// Lengths are taken before any training-time truncation.
CorpusStats compute_corpus_stats(std::span<const SummaryPair> corpus);

// round(majority_sum_len * doc_len / majority_doc_len), clamped to [1, max_len].
int expected_summary_length(int doc_len, const CorpusStats& stats, int max_len);

// Largest-remainder integerization of expected_len * weights; sums to expected_len.
std::vector<int> window_budgets(std::span<const double> weights, int expected_len);

// 0-based window a decoder attends at 0-based output step `step` under the
// static policy: the first window whose cumulative budget exceeds `step`, or
// the last window once every budget is spent.
int window_for_step(std::span<const int> budgets, int step);

// Sum of the token embeddings (OOV tokens contribute the UNK row).
Eigen::VectorXd sentence_embedding(std::span<const std::string> tokens, const Embeddings& embeddings);

// Cosine similarity; 0 when either vector has zero norm.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// 1-based window per summary sentence: the window of the most similar source
// sentence (ties to the earliest). A source sentence maps to the last window
// covering it entirely, or if none does, to the last window holding its final
// token.
std::vector<int> map_summary_to_windows(const SummaryPair& pair, const WindowPlan& plan,
                                        const Embeddings& embeddings);

// Running maximum.
std::vector<int> sequentialize(std::span<const int> window_indices);

struct ShiftAnnotatedSummary {
  std::vector<std::string> tokens;  // "-->" shifts, ends with "<eos>"
  std::vector<int> assigned;
  std::vector<int> sequential;
};

ShiftAnnotatedSummary inject_shift_tokens(const Document& summary, std::span<const int> seq_indices);

// Drops "-->" and the trailing "<eos>".
std::vector<std::string> strip_shift_tokens(std::span<const std::string> tokens);

// Full DWM preprocessing of one pair: map, sequentialize, inject.
ShiftAnnotatedSummary annotate_summary(const SummaryPair& pair, const WindowSpec& spec, const Embeddings& embeddings);

}  // namespace winsum
