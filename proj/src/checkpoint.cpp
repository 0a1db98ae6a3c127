#include "winsum/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "winsum/io.hpp"

namespace winsum {
namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  void raw(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

struct TensorRef {
  std::string name;
  const MatrixX<double>* matrix = nullptr;
  const VectorX<double>* vector = nullptr;
  Eigen::Index rows() const { return matrix ? matrix->rows() : vector->rows(); }
  Eigen::Index cols() const { return matrix ? matrix->cols() : 1; }
  double at(Eigen::Index r, Eigen::Index c) const { return matrix ? (*matrix)(r, c) : (*vector)(r); }
};

template <typename T>
TensorRef ref_of(std::string name, const T& t) {
  TensorRef r;
  r.name = std::move(name);
  if constexpr (T::ColsAtCompileTime == 1) {
    r.vector = &t;
  } else {
    r.matrix = &t;
  }
  return r;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  std::vector<TensorRef> tensors;
  zip_tensors([&](std::string_view name, const auto& t) { tensors.push_back(ref_of(std::string(name), t)); },
              ck.params);
  auto meta = ck.meta;
  meta["train_word_embeddings"] = ck.params.train_word_embeddings ? "1" : "0";
  meta["emits_shift"] = ck.params.emits_shift ? "1" : "0";
  if (ck.adam) {
    meta["adam_step"] = std::to_string(ck.adam->step);
    zip_tensors(
        [&](std::string_view name, const auto& m, const auto& v) {
          if (m.size() == 0) return;
          tensors.push_back(ref_of("adam.m:" + std::string(name), m));
          tensors.push_back(ref_of("adam.v:" + std::string(name), v));
        },
        ck.adam->first, ck.adam->second);
  }

  Writer w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ck.words.size()));
  for (const auto& word : ck.words) w.str(word);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
  }
  for (const auto& t : tensors) {
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) w.f64(t.at(r, c));
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.raw(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.u32();
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  for (auto n = r.u32(); n > 0; --n) {
    auto key = r.str();
    ck.meta[key] = r.str();
  }
  for (auto n = r.u32(); n > 0; --n) ck.words.push_back(r.str());

  struct Entry {
    std::string name;
    std::uint32_t rows, cols;
  };
  std::vector<Entry> table;
  for (auto n = r.u32(); n > 0; --n) {
    Entry e;
    e.name = r.str();
    e.rows = r.u32();
    e.cols = r.u32();
    table.push_back(std::move(e));
  }
  std::map<std::string, MatrixX<double>> blocks;
  for (const auto& e : table) {
    MatrixX<double> m(e.rows, e.cols);
    for (std::uint32_t i = 0; i < e.rows; ++i) {
      for (std::uint32_t j = 0; j < e.cols; ++j) m(i, j) = r.f64();
    }
    if (!blocks.emplace(e.name, std::move(m)).second) throw FormatError("duplicate tensor " + e.name);
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint data");

  auto assign = [&](const std::string& name, auto& target, bool required) {
    auto it = blocks.find(name);
    if (it == blocks.end()) {
      if (required) throw FormatError("checkpoint is missing tensor " + name);
      target.resize(0, target.ColsAtCompileTime == 1 ? 1 : 0);
      return;
    }
    if (target.ColsAtCompileTime == 1 && it->second.cols() != 1) throw FormatError("tensor " + name + " must be a column");
    target = it->second;
  };
  zip_tensors([&](std::string_view name, auto& t) { assign(std::string(name), t, true); }, ck.params);
  ck.params.train_word_embeddings = ck.meta_or("train_word_embeddings", "0") == "1";
  ck.params.emits_shift = ck.meta_or("emits_shift", "0") == "1";
  try {
    ck.params.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  if (static_cast<int>(ck.words.size()) != ck.params.content_size()) {
    throw FormatError("vocabulary size does not match the embedding table");
  }
  if (ck.meta.count("adam_step")) {
    AdamState<double> adam = AdamState<double>::for_params(ck.params);
    adam.step = std::stoll(ck.meta.at("adam_step"));
    zip_tensors(
        [&](std::string_view name, auto& m, auto& v) {
          if (m.size() == 0) return;
          assign("adam.m:" + std::string(name), m, true);
          assign("adam.v:" + std::string(name), v, true);
        },
        adam.first, adam.second);
    ck.adam = std::move(adam);
  }
  return ck;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) {
  try {
    return deserialize_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace winsum
