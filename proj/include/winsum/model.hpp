#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "winsum/corpus.hpp"
#include "winsum/lstm.hpp"
#include "winsum/random.hpp"
#include "winsum/types.hpp"
#include "winsum/windowing.hpp"

namespace winsum {

// Trainable tensors of the windowed pointer-generator. The decoder hidden size
// D is twice the encoder hidden size H so that s_0 = [fwd_end ; bwd_start].
//
// Embedding rows are split: `word_embeddings` holds the pretrained content
// rows (frozen unless `train_word_embeddings`), `special_embeddings` holds
// PAD, UNK, START, EOS and SHIFT in that order. PAD stays zero.
template <typename Scalar>
struct ModelParams {
  LstmParams<Scalar> encoder_forward;
  LstmParams<Scalar> encoder_backward;
  LstmParams<Scalar> decoder;
  MatrixX<Scalar> output_weights;  // d_emb x 2D
  VectorX<Scalar> output_bias;     // d_emb
  VectorX<Scalar> gate_context;    // D
  VectorX<Scalar> gate_state;      // D
  VectorX<Scalar> gate_input;      // d_emb
  VectorX<Scalar> gate_bias;       // 1
  MatrixX<Scalar> word_embeddings;
  MatrixX<Scalar> special_embeddings;

  bool train_word_embeddings = false;
  // Whether SHIFT belongs to the output distribution (DWM only).
  bool emits_shift = false;

  static ModelParams zeros(int content_words, int embedding_dim, int encoder_hidden) {
    ModelParams p;
    const int d = 2 * encoder_hidden;
    p.encoder_forward = LstmParams<Scalar>(embedding_dim, encoder_hidden);
    p.encoder_backward = LstmParams<Scalar>(embedding_dim, encoder_hidden);
    p.decoder = LstmParams<Scalar>(embedding_dim, d);
    p.output_weights = MatrixX<Scalar>::Zero(embedding_dim, 2 * d);
    p.output_bias = VectorX<Scalar>::Zero(embedding_dim);
    p.gate_context = VectorX<Scalar>::Zero(d);
    p.gate_state = VectorX<Scalar>::Zero(d);
    p.gate_input = VectorX<Scalar>::Zero(embedding_dim);
    p.gate_bias = VectorX<Scalar>::Zero(1);
    p.word_embeddings = MatrixX<Scalar>::Zero(content_words, embedding_dim);
    p.special_embeddings = MatrixX<Scalar>::Zero(Vocabulary::kNumSpecials, embedding_dim);
    return p;
  }

  int embedding_dim() const { return static_cast<int>(output_bias.size()); }
  int encoder_hidden() const { return encoder_forward.hidden(); }
  int decoder_hidden() const { return decoder.hidden(); }
  int content_size() const { return static_cast<int>(word_embeddings.rows()); }
  int vocab_size() const { return content_size() + Vocabulary::kNumSpecials; }

  TokenId pad() const { return content_size(); }
  TokenId unk() const { return content_size() + 1; }
  TokenId start() const { return content_size() + 2; }
  TokenId eos() const { return content_size() + 3; }
  TokenId shift() const { return content_size() + 4; }

  // Extended-vocabulary ids beyond |V| embed as UNK.
  VectorX<Scalar> embed(TokenId id) const {
    if (id < content_size()) return word_embeddings.row(id).transpose();
    if (id >= vocab_size()) id = unk();
    return special_embeddings.row(id - content_size()).transpose();
  }

  // Gradient accumulator matching these parameters. Frozen word embeddings
  // get an empty tensor.
  ModelParams zeros_like() const {
    ModelParams g = zeros(content_size(), embedding_dim(), encoder_hidden());
    g.train_word_embeddings = train_word_embeddings;
    g.emits_shift = emits_shift;
    if (!train_word_embeddings) g.word_embeddings.resize(0, 0);
    return g;
  }

  // Throws std::invalid_argument if the tensor shapes disagree.
  void validate() const {
    const int e = embedding_dim(), h = encoder_hidden(), d = decoder_hidden();
    auto check = [](bool ok, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("inconsistent model shapes: ") + what);
    };
    check(d == 2 * h, "decoder hidden must be twice the encoder hidden");
    for (const auto* lstm : {&encoder_forward, &encoder_backward}) {
      check(lstm->input() == e && lstm->hidden() == h && lstm->input_weights.rows() == 4 * h &&
                lstm->bias.size() == 4 * h,
            "encoder LSTM");
    }
    check(decoder.input() == e && decoder.input_weights.rows() == 4 * d && decoder.bias.size() == 4 * d &&
              decoder.recurrent_weights.rows() == 4 * d,
          "decoder LSTM");
    check(output_weights.rows() == e && output_weights.cols() == 2 * d, "output projection");
    check(gate_context.size() == d && gate_state.size() == d && gate_input.size() == e && gate_bias.size() == 1,
          "pointer-generator gate");
    check(word_embeddings.cols() == e && special_embeddings.rows() == Vocabulary::kNumSpecials &&
              special_embeddings.cols() == e,
          "embeddings");
  }
};

// Calls f(name, tensor_of_p0, tensor_of_p1, ...) for every tensor in a fixed order.
template <typename F, typename... P>
void zip_tensors(F&& f, P&&... p) {
  f(std::string_view("encoder_forward.input_weights"), p.encoder_forward.input_weights...);
  f(std::string_view("encoder_forward.recurrent_weights"), p.encoder_forward.recurrent_weights...);
  f(std::string_view("encoder_forward.bias"), p.encoder_forward.bias...);
  f(std::string_view("encoder_backward.input_weights"), p.encoder_backward.input_weights...);
  f(std::string_view("encoder_backward.recurrent_weights"), p.encoder_backward.recurrent_weights...);
  f(std::string_view("encoder_backward.bias"), p.encoder_backward.bias...);
  f(std::string_view("decoder.input_weights"), p.decoder.input_weights...);
  f(std::string_view("decoder.recurrent_weights"), p.decoder.recurrent_weights...);
  f(std::string_view("decoder.bias"), p.decoder.bias...);
  f(std::string_view("output.weights"), p.output_weights...);
  f(std::string_view("output.bias"), p.output_bias...);
  f(std::string_view("gate.context"), p.gate_context...);
  f(std::string_view("gate.state"), p.gate_state...);
  f(std::string_view("gate.input"), p.gate_input...);
  f(std::string_view("gate.bias"), p.gate_bias...);
  f(std::string_view("embeddings.words"), p.word_embeddings...);
  f(std::string_view("embeddings.special"), p.special_embeddings...);
}

// Xavier-uniform matrices, zero biases (forget gate bias 1), small gate
// vectors. Embedding rows are copied from `embeddings`.
template <typename Scalar>
ModelParams<Scalar> make_model(const Embeddings& embeddings, int encoder_hidden, std::uint64_t seed,
                               bool train_word_embeddings = false, bool emits_shift = false) {
  const int words = embeddings.vocab.content_size();
  auto p = ModelParams<Scalar>::zeros(words, embeddings.dim(), encoder_hidden);
  p.train_word_embeddings = train_word_embeddings;
  p.emits_shift = emits_shift;
  Random rng(seed);
  auto xavier = [&](MatrixX<Scalar>& m, int fan_in, int fan_out) {
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<Scalar>(rng.uniform(-a, a));
    }
  };
  for (auto* lstm : {&p.encoder_forward, &p.encoder_backward, &p.decoder}) {
    const int h = lstm->hidden();
    xavier(lstm->input_weights, lstm->input(), h);
    xavier(lstm->recurrent_weights, h, h);
    lstm->bias.segment(h, h).setOnes();
  }
  xavier(p.output_weights, static_cast<int>(p.output_weights.cols()), static_cast<int>(p.output_weights.rows()));
  for (auto* v : {&p.gate_context, &p.gate_state, &p.gate_input}) {
    for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = static_cast<Scalar>(rng.uniform(-0.05, 0.05));
  }
  p.word_embeddings = embeddings.table.topRows(words).template cast<Scalar>();
  p.special_embeddings = embeddings.table.bottomRows(Vocabulary::kNumSpecials).template cast<Scalar>();
  return p;
}

template <typename Derived>
auto softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  VectorX<Scalar> p = (logits.array() - logits.maxCoeff()).exp().matrix();
  return VectorX<Scalar>(p / p.sum());
}

// Softmax over positions with mask[i] set; masked entries get probability 0.
template <typename Scalar>
VectorX<Scalar> masked_softmax(const VectorX<Scalar>& logits, const std::vector<bool>& mask) {
  Scalar top = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[i]) top = std::max(top, logits(i));
  }
  if (!std::isfinite(top)) {
    if (top == -std::numeric_limits<Scalar>::infinity()) throw std::invalid_argument("attention: every position is masked");
    throw NumericError("attention: non-finite score");
  }
  VectorX<Scalar> p = VectorX<Scalar>::Zero(logits.size());
  Scalar total = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (mask[i]) total += (p(i) = std::exp(logits(i) - top));
  }
  return p / total;
}

// Bi-LSTM encoding of one padded window. Row j of `states` is [fwd_j ; bwd_j].
template <typename Scalar>
struct EncodedWindow {
  MatrixX<Scalar> states;
  std::vector<TokenId> ids;  // extended ids, PAD where padded
  std::vector<bool> mask;    // attendable positions
  std::vector<LstmStepCache<Scalar>> forward_cache, backward_cache;

  int length() const { return static_cast<int>(ids.size()); }
  int half() const { return static_cast<int>(states.cols() / 2); }
  VectorX<Scalar> forward_end() const { return states.row(length() - 1).head(half()).transpose(); }
  VectorX<Scalar> backward_start() const { return states.row(0).tail(half()).transpose(); }
};

template <typename Scalar>
EncodedWindow<Scalar> encode_window(const ModelParams<Scalar>& p, std::span<const TokenId> ids,
                                    bool keep_cache = false) {
  const int len = static_cast<int>(ids.size());
  const int h = p.encoder_hidden();
  if (len == 0) throw std::invalid_argument("encode_window: empty window");
  EncodedWindow<Scalar> w;
  w.ids.assign(ids.begin(), ids.end());
  w.mask.resize(len);
  for (int j = 0; j < len; ++j) w.mask[j] = ids[j] != p.pad();
  w.states.resize(len, 2 * h);
  if (keep_cache) {
    w.forward_cache.resize(len);
    w.backward_cache.resize(len);
  }
  VectorX<Scalar> hid = VectorX<Scalar>::Zero(h), cell = VectorX<Scalar>::Zero(h);
  for (int j = 0; j < len; ++j) {
    auto k = lstm_step(p.encoder_forward, p.embed(ids[j]), hid, cell);
    w.states.row(j).head(h) = k.hidden.transpose();
    hid = k.hidden;
    cell = k.cell;
    if (keep_cache) w.forward_cache[j] = std::move(k);
  }
  hid.setZero();
  cell.setZero();
  for (int j = len - 1; j >= 0; --j) {
    auto k = lstm_step(p.encoder_backward, p.embed(ids[j]), hid, cell);
    w.states.row(j).tail(h) = k.hidden.transpose();
    hid = k.hidden;
    cell = k.cell;
    if (keep_cache) w.backward_cache[j] = std::move(k);
  }
  return w;
}

template <typename Scalar>
struct DecoderState {
  VectorX<Scalar> hidden;
  VectorX<Scalar> cell;
  int window = 0;  // 0-based cursor
  int step = 0;
};

// s_0 = [fwd_end ; bwd_start] of the first window; zero cell.
template <typename Scalar>
DecoderState<Scalar> init_decoder_state(const EncodedWindow<Scalar>& first) {
  DecoderState<Scalar> s;
  s.hidden.resize(first.states.cols());
  s.hidden << first.forward_end(), first.backward_start();
  s.cell = VectorX<Scalar>::Zero(s.hidden.size());
  return s;
}

// Advances the cursor, clamped at the last window. Recurrent state is kept.
template <typename Scalar>
DecoderState<Scalar> shift_window(DecoderState<Scalar> state, int window_count) {
  state.window = std::min(state.window + 1, window_count - 1);
  return state;
}

template <typename Scalar>
struct Attention {
  VectorX<Scalar> context;
  VectorX<Scalar> weights;
};

// alpha = masked softmax of s^T h_j, c = sum_j alpha_j h_j.
template <typename Scalar>
Attention<Scalar> attend(const VectorX<Scalar>& query, const EncodedWindow<Scalar>& window) {
  if (query.size() != window.states.cols()) throw std::invalid_argument("attend: dimension mismatch");
  Attention<Scalar> a;
  a.weights = masked_softmax<Scalar>(window.states * query, window.mask);
  a.context = window.states.transpose() * a.weights;
  return a;
}

// Generation distribution over |V|. PAD, UNK and START never receive mass;
// SHIFT only when the model emits shifts.
template <typename Scalar>
VectorX<Scalar> output_distribution(const ModelParams<Scalar>& p, const VectorX<Scalar>& projection) {
  const int k = p.content_size();
  const int n = k + (p.emits_shift ? 2 : 1);
  VectorX<Scalar> logits(n);
  logits.head(k).noalias() = p.word_embeddings * projection;
  logits(k) = p.special_embeddings.row(p.eos() - k).dot(projection);
  if (p.emits_shift) logits(k + 1) = p.special_embeddings.row(p.shift() - k).dot(projection);
  const VectorX<Scalar> q = softmax(logits);
  VectorX<Scalar> out = VectorX<Scalar>::Zero(p.vocab_size());
  out.head(k) = q.head(k);
  out(p.eos()) = q(k);
  if (p.emits_shift) out(p.shift()) = q(k + 1);
  return out;
}

// p_gen = sigmoid(w_c . c + w_s . s + w_x . x + b_ptr)
template <typename Scalar>
Scalar pg_gate(const VectorX<Scalar>& context, const VectorX<Scalar>& state, const VectorX<Scalar>& input,
               const ModelParams<Scalar>& p) {
  return logistic<Scalar>(p.gate_context.dot(context) + p.gate_state.dot(state) + p.gate_input.dot(input) +
                         p.gate_bias(0));
}

// P(x) = p_gen P_V(x) + (1 - p_gen) sum_{j : x_j = x} alpha_j over the
// extended vocabulary. Positions holding `pad` contribute nothing.
template <typename Scalar>
VectorX<Scalar> extended_distribution(const VectorX<Scalar>& vocab_probs, Scalar p_gen,
                                      const VectorX<Scalar>& attention, std::span<const TokenId> window_ids,
                                      int extended_size, TokenId pad) {
  VectorX<Scalar> out = VectorX<Scalar>::Zero(extended_size);
  out.head(vocab_probs.size()) = p_gen * vocab_probs;
  for (std::size_t j = 0; j < window_ids.size(); ++j) {
    if (window_ids[j] == pad) continue;
    out(window_ids[j]) += (Scalar(1) - p_gen) * attention(static_cast<Eigen::Index>(j));
  }
  return out;
}

template <typename Scalar>
struct StepOutput {
  VectorX<Scalar> context;
  VectorX<Scalar> attention;
  VectorX<Scalar> projection;  // l_t
  VectorX<Scalar> vocab_probs;
  Scalar p_gen = 0;
  VectorX<Scalar> extended_probs;
};

template <typename Scalar>
std::pair<StepOutput<Scalar>, DecoderState<Scalar>> decode_step(const ModelParams<Scalar>& p,
                                                                const DecoderState<Scalar>& state, TokenId input,
                                                                const EncodedWindow<Scalar>& window,
                                                                int extended_size) {
  const VectorX<Scalar> x = p.embed(input);
  const auto k = lstm_step(p.decoder, x, state.hidden, state.cell);
  StepOutput<Scalar> out;
  auto att = attend(k.hidden, window);
  out.context = std::move(att.context);
  out.attention = std::move(att.weights);
  VectorX<Scalar> joint(2 * k.hidden.size());
  joint << out.context, k.hidden;
  out.projection = p.output_weights * joint.array().tanh().matrix() + p.output_bias;
  if (!out.projection.allFinite()) throw NumericError("decode_step: non-finite output projection");
  out.vocab_probs = output_distribution(p, out.projection);
  out.p_gen = pg_gate(out.context, k.hidden, x, p);
  out.extended_probs = extended_distribution<Scalar>(out.vocab_probs, out.p_gen, out.attention, window.ids,
                                                     std::max(extended_size, p.vocab_size()), p.pad());
  if (!out.extended_probs.allFinite()) throw NumericError("decode_step: non-finite distribution");
  DecoderState<Scalar> next{k.hidden, k.cell, state.window, state.step + 1};
  return {std::move(out), std::move(next)};
}

// Window `w` of `source` padded to the plan's window length.
inline std::vector<TokenId> window_ids(std::span<const TokenId> source, const WindowPlan& plan, int w, TokenId pad) {
  std::vector<TokenId> ids(plan.window_length, pad);
  const int offset = plan.offsets.at(w);
  for (int j = 0; j < plan.window_length && offset + j < static_cast<int>(source.size()); ++j) {
    ids[j] = source[offset + j];
  }
  return ids;
}

inline constexpr double kProbabilityFloor = 1e-12;

template <typename Scalar>
struct SequenceLoss {
  Scalar loss = 0;  // mean over steps of -log P(target)
  int steps = 0;
  int clamped = 0;  // steps whose target probability fell below the floor
};

namespace detail {

template <typename Scalar>
void add_embedding_grad(const ModelParams<Scalar>& p, ModelParams<Scalar>& g, TokenId id,
                        const VectorX<Scalar>& d_input) {
  if (id < p.content_size()) {
    if (g.word_embeddings.size() != 0) g.word_embeddings.row(id) += d_input.transpose();
    return;
  }
  if (id >= p.vocab_size()) id = p.unk();
  if (id == p.pad()) return;
  g.special_embeddings.row(id - p.content_size()) += d_input.transpose();
}

template <typename Scalar>
struct TeacherStep {
  LstmStepCache<Scalar> lstm;
  TokenId input = 0;
  TokenId target = 0;
  int window = 0;
  VectorX<Scalar> alpha, context, squashed, projection, vocab_probs;
  Scalar p_gen = 0, target_vocab = 0, target_copy = 0, target_prob = 0;
  bool clamped = false;
};

}  // namespace detail

// Teacher-forced NLL of `target` given the document. `step_windows[t]` is the
// 0-based window attended at output step t. When `grads` is non-null the
// exact gradient of the returned loss is accumulated into it.
template <typename Scalar>
SequenceLoss<Scalar> sequence_loss(const ModelParams<Scalar>& p, std::span<const TokenId> source,
                                   const WindowPlan& plan, std::span<const TokenId> target,
                                   std::span<const int> step_windows, ModelParams<Scalar>* grads = nullptr) {
  if (target.size() != step_windows.size()) throw std::invalid_argument("sequence_loss: one window per step required");
  SequenceLoss<Scalar> result;
  result.steps = static_cast<int>(target.size());
  if (target.empty()) return result;
  int needed = 1;
  for (int w : step_windows) {
    if (w < 0 || w >= plan.count()) throw std::invalid_argument("sequence_loss: step window outside plan");
    needed = std::max(needed, w + 1);
  }
  const bool backprop = grads != nullptr;
  std::vector<EncodedWindow<Scalar>> windows;
  windows.reserve(needed);
  for (int w = 0; w < needed; ++w) windows.push_back(encode_window(p, window_ids(source, plan, w, p.pad()), backprop));

  auto state = init_decoder_state(windows[0]);
  std::vector<detail::TeacherStep<Scalar>> trace(target.size());
  const Scalar floor = static_cast<Scalar>(kProbabilityFloor);
  for (std::size_t t = 0; t < target.size(); ++t) {
    auto& k = trace[t];
    k.input = t == 0 ? p.start() : target[t - 1];
    k.target = target[t];
    k.window = step_windows[t];
    const auto& win = windows[k.window];
    const VectorX<Scalar> x = p.embed(k.input);
    k.lstm = lstm_step(p.decoder, x, state.hidden, state.cell);
    const auto& s = k.lstm.hidden;
    auto att = attend(s, win);
    k.alpha = std::move(att.weights);
    k.context = std::move(att.context);
    VectorX<Scalar> joint(2 * s.size());
    joint << k.context, s;
    k.squashed = joint.array().tanh();
    k.projection = p.output_weights * k.squashed + p.output_bias;
    k.vocab_probs = output_distribution(p, k.projection);
    k.p_gen = pg_gate(k.context, s, x, p);
    k.target_vocab = k.target < p.vocab_size() ? k.vocab_probs(k.target) : Scalar(0);
    k.target_copy = 0;
    for (int j = 0; j < win.length(); ++j) {
      if (win.mask[j] && win.ids[j] == k.target) k.target_copy += k.alpha(j);
    }
    k.target_prob = k.p_gen * k.target_vocab + (Scalar(1) - k.p_gen) * k.target_copy;
    if (!std::isfinite(k.target_prob)) throw NumericError("sequence_loss: non-finite probability");
    k.clamped = k.target_prob < floor;
    result.loss -= std::log(k.clamped ? floor : k.target_prob);
    result.clamped += k.clamped;
    state.hidden = k.lstm.hidden;
    state.cell = k.lstm.cell;
  }
  result.loss /= static_cast<Scalar>(result.steps);
  if (!backprop) return result;

  auto& g = *grads;
  const int d = p.decoder_hidden(), h = p.encoder_hidden(), kw = p.content_size();
  const Scalar scale = Scalar(1) / static_cast<Scalar>(result.steps);
  std::vector<MatrixX<Scalar>> d_states;
  for (const auto& w : windows) d_states.push_back(MatrixX<Scalar>::Zero(w.length(), 2 * h));
  VectorX<Scalar> dh_next = VectorX<Scalar>::Zero(d), dc_next = VectorX<Scalar>::Zero(d);

  for (std::size_t t = target.size(); t-- > 0;) {
    const auto& k = trace[t];
    const auto& win = windows[k.window];
    const auto& s = k.lstm.hidden;
    VectorX<Scalar> ds = dh_next;
    VectorX<Scalar> dx = VectorX<Scalar>::Zero(p.embedding_dim());
    if (!k.clamped) {
      const Scalar dprob = -scale / k.target_prob;
      const Scalar dgen = dprob * (k.target_vocab - k.target_copy);
      const Scalar dvocab = dprob * k.p_gen;

      VectorX<Scalar> dl = VectorX<Scalar>::Zero(p.embedding_dim());
      if (k.target_vocab > 0) {
        // d/dz of log-softmax restricted to the output set (zeros elsewhere).
        VectorX<Scalar> dz = -k.target_vocab * dvocab * k.vocab_probs;
        dz(k.target) += k.target_vocab * dvocab;
        dl.noalias() += p.word_embeddings.transpose() * dz.head(kw);
        if (g.word_embeddings.size() != 0) g.word_embeddings.noalias() += dz.head(kw) * k.projection.transpose();
        for (TokenId special : {p.eos(), p.shift()}) {
          const int r = special - kw;
          dl += dz(special) * p.special_embeddings.row(r).transpose();
          g.special_embeddings.row(r) += dz(special) * k.projection.transpose();
        }
      }
      g.output_weights.noalias() += dl * k.squashed.transpose();
      g.output_bias += dl;
      const VectorX<Scalar> djoint =
          (p.output_weights.transpose() * dl).cwiseProduct((1 - k.squashed.array().square()).matrix());
      VectorX<Scalar> dcontext = djoint.head(d);
      ds += djoint.tail(d);

      const Scalar dgate = dgen * k.p_gen * (Scalar(1) - k.p_gen);
      const VectorX<Scalar> x = p.embed(k.input);
      g.gate_context += dgate * k.context;
      g.gate_state += dgate * s;
      g.gate_input += dgate * x;
      g.gate_bias(0) += dgate;
      dcontext += dgate * p.gate_context;
      ds += dgate * p.gate_state;
      dx += dgate * p.gate_input;

      VectorX<Scalar> dalpha = win.states * dcontext;
      const Scalar copy_grad = dprob * (Scalar(1) - k.p_gen);
      for (int j = 0; j < win.length(); ++j) {
        if (win.mask[j] && win.ids[j] == k.target) dalpha(j) += copy_grad;
      }
      auto& dh = d_states[k.window];
      dh.noalias() += k.alpha * dcontext.transpose();
      const VectorX<Scalar> de = k.alpha.cwiseProduct((dalpha.array() - k.alpha.dot(dalpha)).matrix());
      ds.noalias() += win.states.transpose() * de;
      dh.noalias() += de * s.transpose();
    }
    const auto back = lstm_step_backward(p.decoder, k.lstm, ds, dc_next, g.decoder);
    dx += back.input;
    detail::add_embedding_grad(p, g, k.input, dx);
    dh_next = back.hidden_prev;
    dc_next = back.cell_prev;
  }

  // s_0 came from the first window's end states; the initial cell is constant.
  d_states[0].row(windows[0].length() - 1).head(h) += dh_next.head(h).transpose();
  d_states[0].row(0).tail(h) += dh_next.tail(h).transpose();

  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto& win = windows[w];
    const auto& dh = d_states[w];
    VectorX<Scalar> dhid = VectorX<Scalar>::Zero(h), dcell = VectorX<Scalar>::Zero(h);
    for (int j = win.length() - 1; j >= 0; --j) {
      dhid += dh.row(j).head(h).transpose();
      const auto back = lstm_step_backward(p.encoder_forward, win.forward_cache[j], dhid, dcell, g.encoder_forward);
      detail::add_embedding_grad(p, g, win.ids[j], back.input);
      dhid = back.hidden_prev;
      dcell = back.cell_prev;
    }
    dhid.setZero();
    dcell.setZero();
    for (int j = 0; j < win.length(); ++j) {
      dhid += dh.row(j).tail(h).transpose();
      const auto back = lstm_step_backward(p.encoder_backward, win.backward_cache[j], dhid, dcell, g.encoder_backward);
      detail::add_embedding_grad(p, g, win.ids[j], back.input);
      dhid = back.hidden_prev;
      dcell = back.cell_prev;
    }
  }
  return result;
}

}  // namespace winsum
