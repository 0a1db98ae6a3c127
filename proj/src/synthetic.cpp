#include "winsum/synthetic.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

#include "winsum/random.hpp"

namespace winsum {

Embeddings synthetic_embeddings(int words, int dim, std::uint64_t seed) {
  if (words < 1 || dim < 1) throw std::invalid_argument("synthetic_embeddings: need words >= 1 and dim >= 1");
  std::vector<std::string> names;
  for (int i = 0; i < words; ++i) names.push_back("w" + std::to_string(i));
  names.push_back(".");
  Random rng(seed);
  Eigen::MatrixXd rows(words + 1, dim);
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) rows(r, c) = rng.uniform(-1.0, 1.0);
  }
  return {Vocabulary(std::move(names)), with_special_rows(rows)};
}

void CopyTaskSpec::validate() const {
  window.validate();
  if (pairs < 0 || windows < 1 || words < 2 || sentence_len < 2) {
    throw std::invalid_argument("copy task: bad sizes");
  }
  if (window.stride % sentence_len != 0) {
    throw std::invalid_argument("copy task: stride must be a multiple of the sentence length");
  }
  if (segment(doc_len(), window).count() != windows) {
    throw std::invalid_argument("copy task: document length does not give the requested window count");
  }
}

std::vector<SummaryPair> copy_task_corpus(const CopyTaskSpec& spec) {
  spec.validate();
  Random rng(spec.seed);
  const int per_doc = spec.doc_len() / spec.sentence_len;
  std::vector<SummaryPair> out;
  for (int p = 0; p < spec.pairs; ++p) {
    std::set<std::vector<int>> seen;
    std::vector<std::string> sentences;
    std::string summary;
    for (int s = 0; s < per_doc; ++s) {
      std::vector<int> words;
      for (int attempt = 0;; ++attempt) {
        if (attempt == 10000) throw std::invalid_argument("copy task: too few words for distinct sentences");
        words.clear();
        for (int i = 0; i + 1 < spec.sentence_len; ++i) words.push_back(static_cast<int>(rng.below(spec.words)));
        auto key = words;
        std::sort(key.begin(), key.end());
        if (seen.insert(key).second) break;
      }
      std::string text;
      for (int w : words) text += "w" + std::to_string(w) + " ";
      text += ".";
      if ((s * spec.sentence_len) % spec.window.stride == 0) {
        if (!summary.empty()) summary += ' ';
        summary += text;
      }
      sentences.push_back(std::move(text));
    }
    std::string doc;
    for (const auto& s : sentences) {
      if (!doc.empty()) doc += ' ';
      doc += s;
    }
    out.push_back(make_pair(std::move(doc), std::move(summary)));
  }
  return out;
}

}  // namespace winsum
