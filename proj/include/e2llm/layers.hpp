#pragma once

#include "e2llm/ops.hpp"
#include "e2llm/tensor.hpp"

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace e2llm {

template <class S>
Mat<S> randn(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, S std_dev) {
  std::normal_distribution<double> d(0.0, static_cast<double>(std_dev));
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<S>(d(rng));
  return m;
}

template <class S>
struct Linear {
  Tensor<S> weight;  // out x in
  Tensor<S> bias;    // 1 x out

  Linear() = default;
  Linear(Eigen::Index out, Eigen::Index in, std::mt19937_64& rng, S std_dev = S(0.08))
      : weight(randn<S>(out, in, rng, std_dev), true), bias(Mat<S>::Zero(1, out), true) {}

  typename Tape<S>::Var forward(Tape<S>& t, typename Tape<S>::Var x) {
    return add_row(t, matmul_nt(t, x, t.leaf(weight)), t.leaf(bias));
  }
};

/// Linear layer with a low-rank additive branch: y = x W^T + b + (alpha/r) x A^T B^T.
/// B starts at zero so a freshly wrapped layer computes exactly the base map.
template <class S>
struct LoraLinear {
  Tensor<S> weight;  // out x in, the base map
  Tensor<S> bias;    // 1 x out
  Tensor<S> A;       // r x in
  Tensor<S> B;       // out x r
  int rank = 0;
  S alpha = S(1);
  bool base_frozen = true;

  LoraLinear() = default;
  LoraLinear(Eigen::Index out, Eigen::Index in, int r, S a, std::mt19937_64& rng,
             S std_dev = S(0.08))
      : weight(randn<S>(out, in, rng, std_dev), true),
        bias(Mat<S>::Zero(1, out), true),
        A(randn<S>(r, in, rng, S(0.02)), true),
        B(Mat<S>::Zero(out, r), true),
        rank(r),
        alpha(a) {
    weight.frozen = true;
    bias.frozen = true;
  }

  typename Tape<S>::Var forward(Tape<S>& t, typename Tape<S>::Var x) {
    if (rank <= 0) throw std::invalid_argument("invalid rank");
    auto base = add_row(t, matmul_nt(t, x, t.leaf(weight)), t.leaf(bias));
    auto delta = matmul_nt(t, matmul_nt(t, x, t.leaf(A)), t.leaf(B));
    return add(t, base, scale(t, delta, alpha / S(rank)));
  }

  /// base + (alpha/r) B A folded into one matrix, for merge-equivalence checks.
  Mat<S> merged_weight() const {
    return weight.value + (alpha / S(rank)) * (B.value * A.value);
  }
};

template <class S>
struct LayerNormParams {
  Tensor<S> gain;
  Tensor<S> bias;

  LayerNormParams() = default;
  explicit LayerNormParams(Eigen::Index n)
      : gain(Mat<S>::Ones(1, n), true), bias(Mat<S>::Zero(1, n), true) {}

  typename Tape<S>::Var forward(Tape<S>& t, typename Tape<S>::Var x, S eps = S(1e-5)) {
    return layer_norm(t, x, t.leaf(gain), t.leaf(bias), eps);
  }
};

/// Adam with bias correction. Moments are keyed by parameter order, so the
/// same parameter list must be passed on every step.
template <class S>
class Adam {
 public:
  Adam(S lr = S(1e-3), S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Tensor<S>*>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = Mat<S>::Zero(params[i]->value.rows(), params[i]->value.cols());
        v_[i] = m_[i];
      }
    }
    if (m_.size() != params.size())
      throw std::invalid_argument("adam_step: parameter list changed size");
    ++step_count_;
    const S bc1 = S(1) - std::pow(beta1_, S(step_count_));
    const S bc2 = S(1) - std::pow(beta2_, S(step_count_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<S>& p = *params[i];
      if (!p.trainable()) continue;
      p.ensure_grad();
      if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
      m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * p.grad;
      v_[i] = beta2_ * v_[i] + (S(1) - beta2_) * p.grad.cwiseProduct(p.grad);
      Mat<S> mhat = m_[i] / bc1;
      Mat<S> vhat = v_[i] / bc2;
      p.value.array() -= lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    }
  }

  long step_count() const { return step_count_; }
  S learning_rate() const { return lr_; }
  void set_learning_rate(S lr) { lr_ = lr; }

 private:
  S lr_, beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::vector<Mat<S>> m_, v_;
};

}  // namespace e2llm
