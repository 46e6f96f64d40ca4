#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace e2llm {

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A dense parameter or buffer: value, optional gradient, trainability flags.
/// Frozen tensors never receive gradient accumulation and are skipped by the
/// optimizer, so their bytes stay untouched across any number of steps.
template <class Scalar>
struct Tensor {
  Mat<Scalar> value;
  Mat<Scalar> grad;
  bool requires_grad = false;
  bool frozen = false;

  Tensor() = default;
  Tensor(Eigen::Index rows, Eigen::Index cols, bool req = false)
      : value(Mat<Scalar>::Zero(rows, cols)), requires_grad(req) {}
  explicit Tensor(Mat<Scalar> v, bool req = false)
      : value(std::move(v)), requires_grad(req) {}

  bool trainable() const { return requires_grad && !frozen; }

  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Mat<Scalar>::Zero(value.rows(), value.cols());
  }
  void zero_grad() { grad = Mat<Scalar>::Zero(value.rows(), value.cols()); }
};

/// Reverse-mode tape. Operations append nodes holding the forward value and a
/// closure that pushes the node's gradient into its inputs. Nodes are recorded
/// in topological order by construction, so backward() is a reverse sweep.
template <class Scalar>
class Tape {
 public:
  using Var = std::size_t;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Mat<Scalar> v) {
    return push(std::move(v), false, nullptr);
  }

  /// Bring a parameter onto the tape. Gradients flow back into p.grad unless
  /// the parameter is frozen or does not require grad.
  Var leaf(Tensor<Scalar>& p) {
    const bool track = p.trainable();
    Tensor<Scalar>* ptr = &p;
    Var v = push(p.value, track, nullptr);
    if (track) {
      nodes_[v].backprop = [this, v, ptr]() {
        ptr->ensure_grad();
        ptr->grad += nodes_[v].grad;
      };
    }
    return v;
  }

  Var push(Mat<Scalar> value, bool requires_grad, std::function<void()> backprop) {
    nodes_.push_back(Node{std::move(value), Mat<Scalar>(), std::move(backprop), requires_grad});
    return nodes_.size() - 1;
  }

  void set_backprop(Var v, std::function<void()> fn) { nodes_[v].backprop = std::move(fn); }

  const Mat<Scalar>& value(Var v) const { return nodes_[v].value; }
  Mat<Scalar>& grad(Var v) {
    Node& n = nodes_[v];
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
      n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool requires_grad(Var v) const { return nodes_[v].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seed d(loss)/d(loss) = 1 and sweep the tape in reverse.
  void backward(Var loss) {
    if (value(loss).rows() != 1 || value(loss).cols() != 1)
      throw std::invalid_argument("backward: loss must be a scalar");
    grad(loss)(0, 0) = Scalar(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backprop && n.grad.size() > 0) n.backprop();
    }
  }

 private:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    std::function<void()> backprop;
    bool requires_grad;
  };
  std::vector<Node> nodes_;
};

}  // namespace e2llm
