#pragma once

#include "e2llm/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace e2llm {

// Tape-recorded primitives. Each op pushes a node holding the forward value
// and, when any input tracks gradients, a closure routing d(out) to d(inputs).

namespace detail {
template <class S>
inline S gelu_scalar(S x) {
  return S(0.5) * x * (S(1) + std::erf(x / std::numbers::sqrt2_v<S>));
}
template <class S>
inline S gelu_grad_scalar(S x) {
  const S cdf = S(0.5) * (S(1) + std::erf(x / std::numbers::sqrt2_v<S>));
  const S pdf = std::exp(S(-0.5) * x * x) / std::sqrt(S(2) * std::numbers::pi_v<S>);
  return cdf + x * pdf;
}
}  // namespace detail

template <class S>
typename Tape<S>::Var matmul(Tape<S>& t, typename Tape<S>::Var a, typename Tape<S>::Var b) {
  if (t.value(a).cols() != t.value(b).rows())
    throw std::invalid_argument("matmul: inner dimensions disagree");
  const bool req = t.requires_grad(a) || t.requires_grad(b);
  auto out = t.push(t.value(a) * t.value(b), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, b, out]() {
      const Mat<S>& g = t.grad(out);
      if (t.requires_grad(a)) t.grad(a) += g * t.value(b).transpose();
      if (t.requires_grad(b)) t.grad(b) += t.value(a).transpose() * g;
    });
  return out;
}

/// y = a * b^T  (the x * W^T shape used by linear layers).
template <class S>
typename Tape<S>::Var matmul_nt(Tape<S>& t, typename Tape<S>::Var a, typename Tape<S>::Var b) {
  if (t.value(a).cols() != t.value(b).cols())
    throw std::invalid_argument("matmul_nt: inner dimensions disagree");
  const bool req = t.requires_grad(a) || t.requires_grad(b);
  auto out = t.push(t.value(a) * t.value(b).transpose(), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, b, out]() {
      const Mat<S>& g = t.grad(out);
      if (t.requires_grad(a)) t.grad(a) += g * t.value(b);
      if (t.requires_grad(b)) t.grad(b) += g.transpose() * t.value(a);
    });
  return out;
}

template <class S>
typename Tape<S>::Var add(Tape<S>& t, typename Tape<S>::Var a, typename Tape<S>::Var b) {
  const bool req = t.requires_grad(a) || t.requires_grad(b);
  auto out = t.push(t.value(a) + t.value(b), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, b, out]() {
      const Mat<S>& g = t.grad(out);
      if (t.requires_grad(a)) t.grad(a) += g;
      if (t.requires_grad(b)) t.grad(b) += g;
    });
  return out;
}

/// Broadcast-add a 1 x n row (bias) to every row of a.
template <class S>
typename Tape<S>::Var add_row(Tape<S>& t, typename Tape<S>::Var a, typename Tape<S>::Var row) {
  if (t.value(row).rows() != 1 || t.value(row).cols() != t.value(a).cols())
    throw std::invalid_argument("add_row: bias shape mismatch");
  const bool req = t.requires_grad(a) || t.requires_grad(row);
  Mat<S> y = t.value(a);
  y.rowwise() += t.value(row).row(0);
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, row, out]() {
      const Mat<S>& g = t.grad(out);
      if (t.requires_grad(a)) t.grad(a) += g;
      if (t.requires_grad(row)) t.grad(row).row(0) += g.colwise().sum();
    });
  return out;
}

template <class S>
typename Tape<S>::Var scale(Tape<S>& t, typename Tape<S>::Var a, S c) {
  const bool req = t.requires_grad(a);
  auto out = t.push(Mat<S>(t.value(a) * c), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, out, c]() { t.grad(a) += t.grad(out) * c; });
  return out;
}

/// Exact (erf-based) GELU, applied elementwise.
template <class S>
typename Tape<S>::Var gelu(Tape<S>& t, typename Tape<S>::Var a) {
  const bool req = t.requires_grad(a);
  Mat<S> y = t.value(a).unaryExpr([](S x) { return detail::gelu_scalar(x); });
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, out]() {
      Mat<S> d = t.value(a).unaryExpr([](S x) { return detail::gelu_grad_scalar(x); });
      t.grad(a) += t.grad(out).cwiseProduct(d);
    });
  return out;
}

/// Row-wise softmax with max subtraction.
template <class S>
typename Tape<S>::Var softmax_rows(Tape<S>& t, typename Tape<S>::Var a) {
  Mat<S> y = t.value(a);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const S m = y.row(i).maxCoeff();
    y.row(i) = (y.row(i).array() - m).exp();
    y.row(i) /= y.row(i).sum();
  }
  const bool req = t.requires_grad(a);
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, out]() {
      const Mat<S>& p = t.value(out);
      const Mat<S>& g = t.grad(out);
      Mat<S>& ga = t.grad(a);
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const S dot = g.row(i).dot(p.row(i));
        ga.row(i) += p.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
      }
    });
  return out;
}

/// Per-row layer normalization followed by the affine (gain, bias) transform.
/// gain and bias are 1 x n rows; variance is the population variance.
template <class S>
typename Tape<S>::Var layer_norm(Tape<S>& t, typename Tape<S>::Var a,
                                 typename Tape<S>::Var gain, typename Tape<S>::Var bias,
                                 S eps = S(1e-5)) {
  const Mat<S>& x = t.value(a);
  const Eigen::Index n = x.cols();
  if (t.value(gain).cols() != n || t.value(bias).cols() != n)
    throw std::invalid_argument("layer_norm: gain/bias must match last dimension");
  Mat<S> xhat(x.rows(), n);
  std::vector<S> inv_std(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const S mu = x.row(i).mean();
    const S var = (x.row(i).array() - mu).square().sum() / S(n);
    const S is = S(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    xhat.row(i) = (x.row(i).array() - mu) * is;
  }
  Mat<S> y = xhat;
  y.array().rowwise() *= t.value(gain).row(0).array();
  y.rowwise() += t.value(bias).row(0);
  const bool req = t.requires_grad(a) || t.requires_grad(gain) || t.requires_grad(bias);
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, gain, bias, out, xhat, inv_std, n]() {
      const Mat<S>& g = t.grad(out);
      if (t.requires_grad(bias)) t.grad(bias).row(0) += g.colwise().sum();
      if (t.requires_grad(gain))
        t.grad(gain).row(0) += g.cwiseProduct(xhat).colwise().sum();
      if (t.requires_grad(a)) {
        Mat<S>& ga = t.grad(a);
        const auto gr = t.value(gain).row(0);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          Eigen::Matrix<S, 1, Eigen::Dynamic> dxhat =
              g.row(i).cwiseProduct(gr);
          const S m1 = dxhat.mean();
          const S m2 = dxhat.cwiseProduct(xhat.row(i)).mean();
          ga.row(i) += ((dxhat.array() - m1 - xhat.row(i).array() * m2) *
                        inv_std[static_cast<std::size_t>(i)])
                           .matrix();
        }
      }
    });
  return out;
}

/// Scaled dot-product attention. mask(i, j) == true means query i may attend
/// to key j. A query row with no allowed keys is rejected.
template <class S>
typename Tape<S>::Var attention(Tape<S>& t, typename Tape<S>::Var q, typename Tape<S>::Var k,
                                typename Tape<S>::Var v,
                                const std::vector<std::vector<std::uint8_t>>& mask) {
  const Mat<S>& Q = t.value(q);
  const Mat<S>& K = t.value(k);
  const Mat<S>& V = t.value(v);
  if (Q.cols() != K.cols() || K.rows() != V.rows())
    throw std::invalid_argument("attention: shapes do not conform");
  if (mask.size() != static_cast<std::size_t>(Q.rows()))
    throw std::invalid_argument("attention: mask rows mismatch");
  const S inv_sqrt_d = S(1) / std::sqrt(S(Q.cols()));
  Mat<S> scores = Q * K.transpose() * inv_sqrt_d;
  constexpr S kNegInf = -std::numeric_limits<S>::infinity();
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const auto& row = mask[static_cast<std::size_t>(i)];
    if (row.size() != static_cast<std::size_t>(K.rows()))
      throw std::invalid_argument("attention: mask cols mismatch");
    bool any = false;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (row[static_cast<std::size_t>(j)]) any = true;
      else scores(i, j) = kNegInf;
    }
    if (!any) throw std::invalid_argument("degenerate attention row");
  }
  Mat<S> probs(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const S m = scores.row(i).maxCoeff();
    probs.row(i) = (scores.row(i).array() - m).exp();
    probs.row(i) /= probs.row(i).sum();
  }
  const bool req = t.requires_grad(q) || t.requires_grad(k) || t.requires_grad(v);
  auto out = t.push(Mat<S>(probs * V), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, q, k, v, out, probs, inv_sqrt_d]() {
      const Mat<S>& g = t.grad(out);
      const Mat<S>& V = t.value(v);
      if (t.requires_grad(v)) t.grad(v) += probs.transpose() * g;
      if (t.requires_grad(q) || t.requires_grad(k)) {
        Mat<S> dP = g * V.transpose();
        Mat<S> dS(probs.rows(), probs.cols());
        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
          const S dot = dP.row(i).dot(probs.row(i));
          dS.row(i) = probs.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
        }
        dS *= inv_sqrt_d;
        if (t.requires_grad(q)) t.grad(q) += dS * t.value(k);
        if (t.requires_grad(k)) t.grad(k) += dS.transpose() * t.value(q);
      }
    });
  return out;
}

/// Gather rows of an embedding table by id. Gradients scatter-add straight
/// into the table tensor.
template <class S>
typename Tape<S>::Var embed(Tape<S>& t, Tensor<S>& table, const std::vector<int>& ids) {
  Mat<S> y(static_cast<Eigen::Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.value.rows())
      throw std::out_of_range("embed: id out of range");
    y.row(static_cast<Eigen::Index>(i)) = table.value.row(ids[i]);
  }
  const bool req = table.trainable();
  auto out = t.push(std::move(y), req, nullptr);
  if (req) {
    Tensor<S>* tb = &table;
    t.set_backprop(out, [&t, out, tb, ids]() {
      tb->ensure_grad();
      const Mat<S>& g = t.grad(out);
      for (std::size_t i = 0; i < ids.size(); ++i)
        tb->grad.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    });
  }
  return out;
}

template <class S>
typename Tape<S>::Var concat_rows(Tape<S>& t, const std::vector<typename Tape<S>::Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Eigen::Index rows = 0;
  const Eigen::Index cols = t.value(parts[0]).cols();
  bool req = false;
  for (auto p : parts) {
    if (t.value(p).cols() != cols)
      throw std::invalid_argument("concat_rows: column mismatch");
    rows += t.value(p).rows();
    req = req || t.requires_grad(p);
  }
  Mat<S> y(rows, cols);
  Eigen::Index at = 0;
  for (auto p : parts) {
    y.middleRows(at, t.value(p).rows()) = t.value(p);
    at += t.value(p).rows();
  }
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, out, parts]() {
      const Mat<S>& g = t.grad(out);
      Eigen::Index at = 0;
      for (auto p : parts) {
        const Eigen::Index n = t.value(p).rows();
        if (t.requires_grad(p)) t.grad(p) += g.middleRows(at, n);
        at += n;
      }
    });
  return out;
}

template <class S>
typename Tape<S>::Var slice_rows(Tape<S>& t, typename Tape<S>::Var a, Eigen::Index start,
                                 Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > t.value(a).rows())
    throw std::out_of_range("slice_rows: range out of bounds");
  const bool req = t.requires_grad(a);
  auto out = t.push(Mat<S>(t.value(a).middleRows(start, count)), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, out, start, count]() {
      t.grad(a).middleRows(start, count) += t.grad(out);
    });
  return out;
}

template <class S>
typename Tape<S>::Var slice_cols(Tape<S>& t, typename Tape<S>::Var a, Eigen::Index start,
                                 Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > t.value(a).cols())
    throw std::out_of_range("slice_cols: range out of bounds");
  const bool req = t.requires_grad(a);
  auto out = t.push(Mat<S>(t.value(a).middleCols(start, count)), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, out, start, count]() {
      t.grad(a).middleCols(start, count) += t.grad(out);
    });
  return out;
}

template <class S>
typename Tape<S>::Var concat_cols(Tape<S>& t, const std::vector<typename Tape<S>::Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool req = false;
  for (auto p : parts) {
    if (t.value(p).rows() != rows)
      throw std::invalid_argument("concat_cols: row mismatch");
    cols += t.value(p).cols();
    req = req || t.requires_grad(p);
  }
  Mat<S> y(rows, cols);
  Eigen::Index at = 0;
  for (auto p : parts) {
    y.middleCols(at, t.value(p).cols()) = t.value(p);
    at += t.value(p).cols();
  }
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, out, parts]() {
      const Mat<S>& g = t.grad(out);
      Eigen::Index at = 0;
      for (auto p : parts) {
        const Eigen::Index n = t.value(p).cols();
        if (t.requires_grad(p)) t.grad(p) += g.middleCols(at, n);
        at += n;
      }
    });
  return out;
}

template <class S>
typename Tape<S>::Var sum_all(Tape<S>& t, typename Tape<S>::Var a) {
  Mat<S> y(1, 1);
  y(0, 0) = t.value(a).sum();
  const bool req = t.requires_grad(a);
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, a, out]() {
      t.grad(a).array() += t.grad(out)(0, 0);
    });
  return out;
}

/// Mean cross-entropy over supervised rows: logits row i scores the token
/// target[i]; rows with mask[i] == false do not contribute.
template <class S>
typename Tape<S>::Var cross_entropy_rows(Tape<S>& t, typename Tape<S>::Var logits,
                                         const std::vector<int>& targets,
                                         const std::vector<std::uint8_t>& mask) {
  const Mat<S>& z = t.value(logits);
  if (targets.size() != static_cast<std::size_t>(z.rows()) || mask.size() != targets.size())
    throw std::invalid_argument("cross_entropy_rows: target/mask length mismatch");
  Eigen::Index count = 0;
  S loss = S(0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const int tgt = targets[static_cast<std::size_t>(i)];
    if (tgt < 0 || tgt >= z.cols()) throw std::out_of_range("cross_entropy_rows: bad target id");
    const S m = z.row(i).maxCoeff();
    const S lse = m + std::log((z.row(i).array() - m).exp().sum());
    loss += lse - z(i, tgt);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("empty target");
  Mat<S> y(1, 1);
  y(0, 0) = loss / S(count);
  const bool req = t.requires_grad(logits);
  auto out = t.push(std::move(y), req, nullptr);
  if (req)
    t.set_backprop(out, [&t, logits, out, targets, mask, count]() {
      const S g = t.grad(out)(0, 0) / S(count);
      const Mat<S>& z = t.value(logits);
      Mat<S>& gl = t.grad(logits);
      for (Eigen::Index i = 0; i < z.rows(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const S m = z.row(i).maxCoeff();
        Eigen::Matrix<S, 1, Eigen::Dynamic> p = (z.row(i).array() - m).exp();
        p /= p.sum();
        gl.row(i) += g * p;
        gl(i, targets[static_cast<std::size_t>(i)]) -= g;
      }
    });
  return out;
}

}  // namespace e2llm
