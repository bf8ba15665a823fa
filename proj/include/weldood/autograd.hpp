#pragma once

// Minimal define-by-run reverse-mode differentiation over dense matrices.
//
// A Graph records every operation applied during one forward pass. Values are
// immutable once recorded; Graph::backward() walks the records in reverse and
// accumulates gradients into the inputs. Leaves created with Graph::param()
// forward their gradient into the owning Param after backward().
//
// Row-major semantics are used for reshape/unfold regardless of Eigen's
// column-major storage.

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace weldood::ad {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

/// Trainable tensor and its accumulated gradient.
struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param() = default;
  Param(std::string n, Matrix v);

  void zero_grad();
  Eigen::Index size() const { return value.size(); }
};

class Graph;

/// Handle to a recorded node. Cheap to copy; only valid while its Graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Graph {
 public:
  using Backward = std::function<void(Graph&, const Matrix& out_grad)>;

  Graph() { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var param(Param& p);

  /// Records a derived node. `backward` receives the gradient w.r.t. this
  /// node's value and must call accumulate() for each input.
  Var record(Matrix value, Backward backward);

  const Matrix& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Matrix& grad(int id) const;
  void accumulate(int id, const Matrix& g);

  /// Seeds d(loss)/d(loss) = 1 for a 1x1 node and propagates. Gradients of
  /// Param leaves are added into Param::grad.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
    Param* param = nullptr;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise / linear algebra ----
Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, double s);
Var hadamard(Var a, Var b);
/// a (r x c) + bias (1 x c) broadcast over rows.
Var add_row(Var a, Var bias);
/// Convenience: x * w + b.
Var linear(Var x, Var w, Var b);
Var gelu(Var a);
Var tanh(Var a);
Var stop_gradient(Var a);

// ---- normalisation / attention ----
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);
/// Row softmax. With `causal`, entries with column > row are masked out.
Var softmax_rows(Var a, bool causal = false);

// ---- shape ----
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(const std::vector<Var>& parts);
Var transpose(Var a);
/// Row-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// im2col for 1-D convolution over rows: input L x C, output
/// L_out x (kernel*C) where row i holds input rows [i*stride - pad, ...) with
/// zero padding outside. L_out = floor((L + pad_left + pad_right - kernel)/stride) + 1.
Var unfold(Var a, int kernel, int stride, int pad_left, int pad_right);
/// Rows of `table` selected by `indices`.
Var gather_rows(Var table, std::span<const int> indices);
Var mean_rows(Var a);

// ---- losses (all return 1x1) ----
/// Mean over rows of the row-wise softmax cross-entropy against `targets`.
Var cross_entropy(Var logits, std::span<const int> targets);
/// (1/rows) * sum of squared entries: mean squared row L2 norm of (a - b).
Var mean_row_sq_dist(Var a, Var b);

// ---- utilities ----
/// Numerically stable softmax of one row.
RowVector softmax(const RowVector& logits);
Matrix xavier(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  ///< global gradient-norm clip; <= 0 disables
};

/// Adam with bias correction. Owns the moment estimates for the parameters it
/// was constructed with.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamOptions options);

  void zero_grad();
  /// Applies one update with `grad_scale` multiplied into every gradient
  /// (used to average accumulated minibatch gradients).
  void step(double grad_scale = 1.0);

 private:
  std::vector<Param*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  AdamOptions options_;
  long steps_ = 0;
};

void zero_grad(std::span<Param* const> params);

}  // namespace weldood::ad
