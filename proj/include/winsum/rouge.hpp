#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "winsum/corpus.hpp"

namespace winsum {

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool empty_reference = false;
};

// f1 = 2pr / (p + r), or 0 when p + r = 0.
RougeScore make_rouge_score(double overlap, double candidate_total, double reference_total);

// Clipped n-gram overlap; no stemming, no stopword removal.
RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, int n);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// Summary-level LCS: precision LCS/|candidate|, recall LCS/|reference|.
RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);

struct CorpusScores {
  RougeScore rouge1, rouge2, rouge_l;  // means over scored documents
  int documents = 0;
  int failures = 0;
  std::vector<std::string> errors;  // "record N: message"
};

using Summarizer = std::function<std::vector<std::string>(const SummaryPair&)>;

// Scores each document against its tokenized reference summary. A summarizer
// that throws is recorded and the document excluded from the means.
CorpusScores evaluate_corpus(const Summarizer& summarizer, std::span<const SummaryPair> corpus);

// Fixed-column "Model  R-1  R-2  R-L" table (F1 x 100, two decimals).
std::string format_score_table(std::span<const std::pair<std::string, CorpusScores>> rows);
nlohmann::ordered_json scores_to_json(const std::string& name, const CorpusScores& scores);

}  // namespace winsum
