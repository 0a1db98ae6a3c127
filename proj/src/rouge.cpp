#include "winsum/rouge.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

namespace winsum {

RougeScore make_rouge_score(double overlap, double candidate_total, double reference_total) {
  RougeScore s;
  s.empty_reference = reference_total == 0;
  s.precision = candidate_total > 0 ? overlap / candidate_total : 0.0;
  s.recall = reference_total > 0 ? overlap / reference_total : 0.0;
  const double sum = s.precision + s.recall;
  s.f1 = sum > 0 ? 2 * s.precision * s.recall / sum : 0.0;
  return s;
}

namespace {

std::map<std::vector<std::string>, int> ngram_counts(std::span<const std::string> tokens, int n) {
  std::map<std::vector<std::string>, int> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n: n must be positive");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  int overlap = 0, cand_total = 0, ref_total = 0;
  for (const auto& [gram, c] : cand) {
    cand_total += c;
    if (auto it = ref.find(gram); it != ref.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [gram, c] : ref) ref_total += c;
  return make_rouge_score(overlap, cand_total, ref_total);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return make_rouge_score(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
                          static_cast<double>(reference.size()));
}

CorpusScores evaluate_corpus(const Summarizer& summarizer, std::span<const SummaryPair> corpus) {
  CorpusScores out;
  auto accumulate = [](RougeScore& into, const RougeScore& s) {
    into.precision += s.precision;
    into.recall += s.recall;
    into.f1 += s.f1;
  };
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::vector<std::string> candidate;
    try {
      candidate = summarizer(corpus[i]);
    } catch (const std::exception& e) {
      ++out.failures;
      out.errors.push_back("record " + std::to_string(i + 1) + ": " + e.what());
      continue;
    }
    const auto& reference = corpus[i].summary.tokens;
    accumulate(out.rouge1, rouge_n(candidate, reference, 1));
    accumulate(out.rouge2, rouge_n(candidate, reference, 2));
    accumulate(out.rouge_l, rouge_l(candidate, reference));
    ++out.documents;
  }
  if (out.documents > 0) {
    for (auto* s : {&out.rouge1, &out.rouge2, &out.rouge_l}) {
      s->precision /= out.documents;
      s->recall /= out.documents;
      s->f1 /= out.documents;
    }
  }
  return out;
}

std::string format_score_table(std::span<const std::pair<std::string, CorpusScores>> rows) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %8s\n", "Model", "R-1", "R-2", "R-L");
  out += line;
  for (const auto& [name, s] : rows) {
    std::snprintf(line, sizeof line, "%-12s %8.2f %8.2f %8.2f\n", name.c_str(), 100 * s.rouge1.f1,
                  100 * s.rouge2.f1, 100 * s.rouge_l.f1);
    out += line;
  }
  return out;
}

nlohmann::ordered_json scores_to_json(const std::string& name, const CorpusScores& scores) {
  auto metric = [](const RougeScore& s) {
    return nlohmann::ordered_json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  };
  nlohmann::ordered_json j;
  j["model"] = name;
  j["rouge_1"] = metric(scores.rouge1);
  j["rouge_2"] = metric(scores.rouge2);
  j["rouge_l"] = metric(scores.rouge_l);
  j["documents"] = scores.documents;
  j["failures"] = scores.failures;
  j["errors"] = scores.errors;
  return j;
}

}  // namespace winsum
