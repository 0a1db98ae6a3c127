#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace winsum {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
}

template <typename Scalar>
Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

// Gate blocks are stacked in the order input, forget, candidate, output.
template <typename Scalar>
struct LstmParams {
  MatrixX<Scalar> input_weights;      // 4H x in
  MatrixX<Scalar> recurrent_weights;  // 4H x H
  VectorX<Scalar> bias;               // 4H

  LstmParams() = default;
  LstmParams(int input_dim, int hidden_dim)
      : input_weights(MatrixX<Scalar>::Zero(4 * hidden_dim, input_dim)),
        recurrent_weights(MatrixX<Scalar>::Zero(4 * hidden_dim, hidden_dim)),
        bias(VectorX<Scalar>::Zero(4 * hidden_dim)) {}

  int hidden() const { return static_cast<int>(recurrent_weights.cols()); }
  int input() const { return static_cast<int>(input_weights.cols()); }
};

template <typename Scalar>
struct LstmStepCache {
  VectorX<Scalar> input, hidden_prev, cell_prev;
  VectorX<Scalar> in_gate, forget_gate, candidate, out_gate;
  VectorX<Scalar> cell, cell_tanh, hidden;
};

template <typename Scalar, typename DerivedX, typename DerivedH, typename DerivedC>
LstmStepCache<Scalar> lstm_step(const LstmParams<Scalar>& p, const Eigen::MatrixBase<DerivedX>& x,
                                const Eigen::MatrixBase<DerivedH>& h, const Eigen::MatrixBase<DerivedC>& c) {
  const int n = p.hidden();
  LstmStepCache<Scalar> k;
  k.input = x;
  k.hidden_prev = h;
  k.cell_prev = c;
  const VectorX<Scalar> z = p.input_weights * k.input + p.recurrent_weights * k.hidden_prev + p.bias;
  k.in_gate = sigmoid(z.segment(0, n));
  k.forget_gate = sigmoid(z.segment(n, n));
  k.candidate = z.segment(2 * n, n).array().tanh();
  k.out_gate = sigmoid(z.segment(3 * n, n));
  k.cell = k.forget_gate.cwiseProduct(k.cell_prev) + k.in_gate.cwiseProduct(k.candidate);
  k.cell_tanh = k.cell.array().tanh();
  k.hidden = k.out_gate.cwiseProduct(k.cell_tanh);
  return k;
}

// Accumulates parameter gradients into `grads` and returns the gradients
// flowing into the step's input, previous hidden and previous cell state.
template <typename Scalar>
struct LstmStepGrad {
  VectorX<Scalar> input, hidden_prev, cell_prev;
};

template <typename Scalar>
LstmStepGrad<Scalar> lstm_step_backward(const LstmParams<Scalar>& p, const LstmStepCache<Scalar>& k,
                                        const VectorX<Scalar>& d_hidden, const VectorX<Scalar>& d_cell,
                                        LstmParams<Scalar>& grads) {
  const int n = p.hidden();
  const auto one = VectorX<Scalar>::Ones(n).array();
  const VectorX<Scalar> dc =
      d_cell + d_hidden.cwiseProduct(k.out_gate).cwiseProduct((one - k.cell_tanh.array().square()).matrix());
  VectorX<Scalar> dz(4 * n);
  dz.segment(0, n) = (dc.array() * k.candidate.array() * k.in_gate.array() * (one - k.in_gate.array())).matrix();
  dz.segment(n, n) =
      (dc.array() * k.cell_prev.array() * k.forget_gate.array() * (one - k.forget_gate.array())).matrix();
  dz.segment(2 * n, n) = (dc.array() * k.in_gate.array() * (one - k.candidate.array().square())).matrix();
  dz.segment(3 * n, n) =
      (d_hidden.array() * k.cell_tanh.array() * k.out_gate.array() * (one - k.out_gate.array())).matrix();

  grads.input_weights.noalias() += dz * k.input.transpose();
  grads.recurrent_weights.noalias() += dz * k.hidden_prev.transpose();
  grads.bias += dz;

  LstmStepGrad<Scalar> g;
  g.input.noalias() = p.input_weights.transpose() * dz;
  g.hidden_prev.noalias() = p.recurrent_weights.transpose() * dz;
  g.cell_prev = dc.cwiseProduct(k.forget_gate);
  return g;
}

}  // namespace winsum
