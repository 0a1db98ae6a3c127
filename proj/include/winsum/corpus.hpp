#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "winsum/types.hpp"

namespace winsum {

// Lowercases ASCII letters, splits every ASCII punctuation character into its
// own token and splits on whitespace. Bytes >= 0x80 are kept as word
// characters, so UTF-8 sequences pass through untouched.
std::vector<std::string> tokenize(std::string_view text);

struct SentenceSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end - begin; }
  bool operator==(const SentenceSpan&) const = default;
};

// Sentences end after ".", "!" or "?". A trailing unterminated run is kept.
std::vector<SentenceSpan> split_sentences(std::span<const std::string> tokens);

struct Document {
  std::vector<std::string> tokens;
  std::vector<SentenceSpan> sentences;

  static Document from_text(std::string_view text);
  static Document from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens.size(); }
  std::span<const std::string> sentence(std::size_t i) const {
    const auto& s = sentences.at(i);
    return std::span<const std::string>(tokens).subspan(s.begin, s.size());
  }
};

struct SummaryPair {
  std::string raw_document;
  std::string raw_summary;
  Document document;
  Document summary;
  // Whitespace-separated tokens with "-->" for window shifts (DWM corpora).
  std::optional<std::vector<std::string>> summary_shifted;
};

// Word <-> id bijection. Content words occupy ids [0, content_size()); the
// five special symbols follow in the order PAD, UNK, START, EOS, SHIFT.
class Vocabulary {
 public:
  static constexpr int kNumSpecials = 5;
  static constexpr std::string_view kPadSurface = "<pad>";
  static constexpr std::string_view kUnkSurface = "<unk>";
  static constexpr std::string_view kStartSurface = "<s>";
  static constexpr std::string_view kEosSurface = "<eos>";
  static constexpr std::string_view kShiftSurface = "-->";

  Vocabulary() = default;
  // Throws FormatError on duplicates or collisions with special surfaces.
  explicit Vocabulary(std::vector<std::string> words);

  int size() const { return content_size() + kNumSpecials; }
  int content_size() const { return static_cast<int>(words_.size()); }

  TokenId pad() const { return content_size(); }
  TokenId unk() const { return content_size() + 1; }
  TokenId start() const { return content_size() + 2; }
  TokenId eos() const { return content_size() + 3; }
  TokenId shift() const { return content_size() + 4; }

  bool is_special(TokenId id) const { return id >= content_size() && id < size(); }
  bool contains(std::string_view word) const;
  // UNK for unknown words. Special surfaces map to their special ids.
  TokenId id_of(std::string_view word) const;
  std::string_view word(TokenId id) const;
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// Vocabulary plus its |V| x d_emb embedding table (rows indexed by id).
struct Embeddings {
  Vocabulary vocab;
  Eigen::MatrixXd table;

  int dim() const { return static_cast<int>(table.cols()); }
  // OOV words resolve to the UNK row.
  Eigen::VectorXd row(std::string_view word) const { return table.row(vocab.id_of(word)).transpose(); }
};

inline constexpr std::uint64_t kSpecialEmbeddingSeed = 0x5eedULL;

// Appends the special rows: PAD is zero, the rest are small deterministic
// pseudo-random vectors.
Eigen::MatrixXd with_special_rows(const Eigen::MatrixXd& content_rows);

// Text embedding format with optional "<count> <dim>" header. Keeps the first
// `vocab_size` words in file order. `expected_dim` of 0 takes the dimension
// from the header or the first data line.
Embeddings load_embeddings(const std::string& path, int vocab_size, int expected_dim = 0);
Embeddings parse_embeddings(std::istream& in, int vocab_size, int expected_dim = 0);
void write_embeddings(std::ostream& out, const Embeddings& embeddings);

// JSONL with string fields "document" and "summary" (and optionally
// "summary_shifted"). Errors name the 1-based record index.
std::vector<SummaryPair> load_corpus(const std::string& path);
std::vector<SummaryPair> parse_corpus(std::istream& in);
SummaryPair make_pair(std::string document, std::string summary);
void write_corpus(std::ostream& out, std::span<const SummaryPair> pairs);

// Source ids over the extended vocabulary: in-vocabulary words keep their id,
// OOV words get ids |V|, |V|+1, ... in order of first appearance.
struct ExtendedSource {
  std::vector<TokenId> ids;
  std::vector<std::string> oov_words;

  int extended_size(const Vocabulary& vocab) const {
    return vocab.size() + static_cast<int>(oov_words.size());
  }
  // Id of `word` in the extended vocabulary, or UNK.
  TokenId id_of(const Vocabulary& vocab, std::string_view word) const;
  std::string_view surface(const Vocabulary& vocab, TokenId id) const;
};

ExtendedSource extend_source(const Vocabulary& vocab, std::span<const std::string> tokens);

}  // namespace winsum
