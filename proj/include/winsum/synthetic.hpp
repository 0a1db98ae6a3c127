#pragma once

#include <cstdint>
#include <vector>

#include "winsum/corpus.hpp"
#include "winsum/windowing.hpp"

namespace winsum {

// Words "w0".."w{n-1}" plus "." with uniform(-1, 1) vectors.
Embeddings synthetic_embeddings(int words, int dim, std::uint64_t seed);

// Documents of `windows * stride` tokens built from sentences of
// `sentence_len` tokens (the last one "."), so every window offset starts a
// sentence. The summary is the first sentence of each window. Sentences of a
// document have pairwise distinct word multisets, which makes the
// window mapping unambiguous.
struct CopyTaskSpec {
  int pairs = 50;
  int windows = 2;
  WindowSpec window{12, 10};
  int sentence_len = 5;
  int words = 30;
  std::uint64_t seed = 7;

  // Throws std::invalid_argument unless the stride is a multiple of the
  // sentence length and the doc length yields exactly `windows` windows.
  void validate() const;
  int doc_len() const { return windows * window.stride; }
};

std::vector<SummaryPair> copy_task_corpus(const CopyTaskSpec& spec);

}  // namespace winsum
