#include "winsum/corpus.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "winsum/random.hpp"

namespace winsum {

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::kStan: return "stan";
    case Mode::kSwm: return "swm";
    case Mode::kDwm: return "dwm";
  }
  return "?";
}

Mode parse_mode(std::string_view text) {
  if (text == "stan") return Mode::kStan;
  if (text == "swm") return Mode::kSwm;
  if (text == "dwm") return Mode::kDwm;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected stan, swm or dwm)");
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto byte = static_cast<unsigned char>(ch);
    if (byte < 0x80 && std::isspace(byte)) {
      flush();
    } else if (byte < 0x80 && std::ispunct(byte)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(byte < 0x80 ? static_cast<char>(std::tolower(byte)) : ch);
    }
  }
  flush();
  return tokens;
}

std::vector<SentenceSpan> split_sentences(std::span<const std::string> tokens) {
  std::vector<SentenceSpan> spans;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t == "." || t == "!" || t == "?") {
      spans.push_back({begin, i + 1});
      begin = i + 1;
    }
  }
  if (begin < tokens.size()) spans.push_back({begin, tokens.size()});
  return spans;
}

Document Document::from_text(std::string_view text) { return from_tokens(tokenize(text)); }

Document Document::from_tokens(std::vector<std::string> tokens) {
  Document doc;
  doc.tokens = std::move(tokens);
  doc.sentences = split_sentences(doc.tokens);
  return doc;
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  index_.reserve(words_.size() + kNumSpecials);
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<TokenId>(i)).second) {
      throw FormatError("duplicate vocabulary word '" + words_[i] + "'");
    }
  }
  const std::string_view specials[] = {kPadSurface, kUnkSurface, kStartSurface, kEosSurface, kShiftSurface};
  for (int s = 0; s < kNumSpecials; ++s) {
    if (!index_.emplace(std::string(specials[s]), content_size() + s).second) {
      throw FormatError("vocabulary word collides with special symbol '" + std::string(specials[s]) + "'");
    }
  }
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

TokenId Vocabulary::id_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? unk() : it->second;
}

std::string_view Vocabulary::word(TokenId id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id outside vocabulary");
  if (id < content_size()) return words_[id];
  switch (id - content_size()) {
    case 0: return kPadSurface;
    case 1: return kUnkSurface;
    case 2: return kStartSurface;
    case 3: return kEosSurface;
    default: return kShiftSurface;
  }
}

Eigen::MatrixXd with_special_rows(const Eigen::MatrixXd& content_rows) {
  const auto dim = content_rows.cols();
  Eigen::MatrixXd table(content_rows.rows() + Vocabulary::kNumSpecials, dim);
  table.topRows(content_rows.rows()) = content_rows;
  Random rng(kSpecialEmbeddingSeed);
  auto specials = table.bottomRows(Vocabulary::kNumSpecials);
  specials.row(0).setZero();
  for (int r = 1; r < Vocabulary::kNumSpecials; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) specials(r, c) = rng.uniform(-0.1, 0.1);
  }
  return table;
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_int(std::string_view s, long& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

Embeddings parse_embeddings(std::istream& in, int vocab_size, int expected_dim) {
  if (vocab_size < 0) throw std::invalid_argument("vocab_size must be non-negative");
  std::vector<std::string> words;
  std::vector<double> values;
  int dim = expected_dim;
  std::string line;
  long line_no = 0;
  while (static_cast<int>(words.size()) < vocab_size && std::getline(in, line)) {
    ++line_no;
    auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2) {
      long count = 0, header_dim = 0;
      if (parse_int(fields[0], count) && parse_int(fields[1], header_dim)) {
        if (header_dim <= 0) throw FormatError("line 1: non-positive embedding dimension");
        if (dim != 0 && dim != header_dim) {
          throw FormatError("line 1: header dimension " + std::to_string(header_dim) + " != expected " +
                            std::to_string(dim));
        }
        dim = static_cast<int>(header_dim);
        continue;
      }
    }
    const int found = static_cast<int>(fields.size()) - 1;
    if (dim == 0) {
      if (found <= 0) throw FormatError("line " + std::to_string(line_no) + ": word without vector");
      dim = found;
    }
    if (found != dim) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                        " values, found " + std::to_string(found));
    }
    for (int c = 0; c < dim; ++c) {
      double v = 0.0;
      if (!parse_double(fields[c + 1], v)) {
        throw FormatError("line " + std::to_string(line_no) + ": malformed number '" +
                          std::string(fields[c + 1]) + "'");
      }
      values.push_back(v);
    }
    words.emplace_back(fields[0]);
  }
  if (dim == 0) throw FormatError("embedding file contains no vectors");

  Embeddings result;
  try {
    result.vocab = Vocabulary(std::move(words));
  } catch (const FormatError& e) {
    throw FormatError(std::string("embedding file: ") + e.what());
  }
  const auto rows = static_cast<Eigen::Index>(result.vocab.content_size());
  Eigen::MatrixXd content =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, dim);
  result.table = with_special_rows(content);
  return result;
}

Embeddings load_embeddings(const std::string& path, int vocab_size, int expected_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embeddings file " + path);
  try {
    return parse_embeddings(in, vocab_size, expected_dim);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_embeddings(std::ostream& out, const Embeddings& embeddings) {
  const int n = embeddings.vocab.content_size();
  out << n << ' ' << embeddings.dim() << '\n';
  char buf[64];
  for (int r = 0; r < n; ++r) {
    out << embeddings.vocab.word(r);
    for (int c = 0; c < embeddings.dim(); ++c) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, embeddings.table(r, c));
      out << ' ' << std::string_view(buf, ptr - buf);
    }
    out << '\n';
  }
}

SummaryPair make_pair(std::string document, std::string summary) {
  SummaryPair pair;
  pair.document = Document::from_text(document);
  pair.summary = Document::from_text(summary);
  pair.raw_document = std::move(document);
  pair.raw_summary = std::move(summary);
  return pair;
}

std::vector<SummaryPair> parse_corpus(std::istream& in) {
  std::vector<SummaryPair> pairs;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++record;
    const auto where = "record " + std::to_string(record);
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": invalid JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw FormatError(where + ": expected a JSON object");
    for (const char* field : {"document", "summary"}) {
      if (!obj.contains(field) || !obj[field].is_string()) {
        throw FormatError(where + ": missing string field \"" + field + "\"");
      }
    }
    auto pair = make_pair(obj["document"].get<std::string>(), obj["summary"].get<std::string>());
    if (obj.contains("summary_shifted")) {
      if (!obj["summary_shifted"].is_string()) throw FormatError(where + ": \"summary_shifted\" must be a string");
      const auto text = obj["summary_shifted"].get<std::string>();
      std::vector<std::string> shifted;
      for (auto f : split_spaces(text)) shifted.emplace_back(f);
      pair.summary_shifted = std::move(shifted);
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<SummaryPair> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path);
  try {
    return parse_corpus(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_corpus(std::ostream& out, std::span<const SummaryPair> pairs) {
  for (const auto& pair : pairs) {
    nlohmann::ordered_json obj;
    obj["document"] = pair.raw_document;
    obj["summary"] = pair.raw_summary;
    if (pair.summary_shifted) {
      std::string joined;
      for (const auto& t : *pair.summary_shifted) {
        if (!joined.empty()) joined += ' ';
        joined += t;
      }
      obj["summary_shifted"] = joined;
    }
    out << obj.dump() << '\n';
  }
}

TokenId ExtendedSource::id_of(const Vocabulary& vocab, std::string_view word) const {
  const TokenId id = vocab.id_of(word);
  if (id != vocab.unk()) return id;
  for (std::size_t i = 0; i < oov_words.size(); ++i) {
    if (oov_words[i] == word) return vocab.size() + static_cast<TokenId>(i);
  }
  return vocab.unk();
}

std::string_view ExtendedSource::surface(const Vocabulary& vocab, TokenId id) const {
  if (id < vocab.size()) return vocab.word(id);
  return oov_words.at(static_cast<std::size_t>(id - vocab.size()));
}

ExtendedSource extend_source(const Vocabulary& vocab, std::span<const std::string> tokens) {
  ExtendedSource src;
  std::unordered_map<std::string_view, TokenId> oov;
  src.ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    TokenId id = vocab.id_of(t);
    if (id == vocab.unk()) {
      auto [it, fresh] = oov.emplace(t, vocab.size() + static_cast<TokenId>(src.oov_words.size()));
      if (fresh) src.oov_words.push_back(t);
      id = it->second;
    }
    src.ids.push_back(id);
  }
  return src;
}

}  // namespace winsum
