#pragma once

// Reverse-mode differentiation over fixed-shape real matrices.
//
// A Tape records every operation applied to its Vars. Calling backward() on a
// 1x1 output fills the gradient slot of every node that depends on a leaf.
// Scalars are 1x1 matrices; there is no implicit broadcasting.

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tlane::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Gradient of the last backward() output with respect to this node.
  /// Zero-shaped until backward() has run.
  const Matrix& grad() const;

  double scalar() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Matrix value);
  Var constant(Matrix value);
  Var scalar(double value, bool differentiable = false);

  /// Records an op. `backprop` receives d(output)/d(this node) and must
  /// accumulate into parents via accumulate().
  Var record(Matrix value, std::span<const Var> parents, Backprop backprop);

  void backward(const Var& output);

  void accumulate(const Var& target, const Matrix& delta);
  bool needs_grad(const Var& v) const { return nodes_[v.id()].needs_grad; }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

/// Raised when log/divide/pow receive arguments outside their domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Elementwise arithmetic on equal shapes.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var operator+(const Var& a, double c);
Var operator+(double c, const Var& a);
Var operator-(const Var& a, double c);
Var operator-(double c, const Var& a);
Var operator*(const Var& a, double c);
Var operator*(double c, const Var& a);

/// a (n x m) plus row vector r (1 x m) added to every row.
Var add_row(const Var& a, const Var& r);
/// Multiplies each row i of a (n x m) by column entry c(i) of c (n x 1).
Var scale_rows(const Var& a, const Var& c);
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var log(const Var& a);
Var exp(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
/// Subgradient 0 at the kink.
Var relu(const Var& a);
/// Subgradient 0 at the kink.
Var abs(const Var& a);
Var square(const Var& a);
/// a^p for a >= 0 (a > 0 when p < 1).
Var pow(const Var& a, double p);

Var sum(const Var& a);
Var mean(const Var& a);
/// n x m -> n x 1.
Var row_sum(const Var& a);
/// n x m -> n x 1 minimum per row; gradient flows only into the argmin,
/// ties resolved to the lowest column index.
Var row_min(const Var& a);
/// n x m -> 1 x m minimum per column, same tie rule (lowest row index).
Var col_min(const Var& a);

Var slice_cols(const Var& a, Index start, Index count);
Var slice_rows(const Var& a, Index start, Index count);
Var select_rows(const Var& a, std::span<const Index> rows);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);

/// Row-wise log-softmax.
Var log_softmax_rows(const Var& a);
/// out(i) = a(i, columns[i]); n x 1.
Var pick(const Var& a, std::span<const Index> columns);
/// Squared Euclidean distance between every row of p (n x d) and q (m x d).
Var pairwise_sq_dist(const Var& p, const Var& q);

/// Elementwise map with a caller-supplied derivative.
Var map(const Var& a, const std::function<double(double)>& f,
        const std::function<double(double)>& df);

/// Forward evaluation result plus d(output)/d(input) per input.
struct Evaluation {
  double output = 0.0;
  std::vector<Matrix> gradients;
};

using Program = std::function<Var(Tape&, std::span<const Var>)>;

/// Runs `program` on leaves holding `inputs`, then one backward pass.
Evaluation evaluate_with_gradients(const Program& program, std::span<const Matrix> inputs);
/// Flat-vector convenience: every input is a 1x1 leaf.
Evaluation evaluate_with_gradients(const Program& program, std::span<const double> inputs);
/// Forward only; inputs enter as constants.
double evaluate(const Program& program, std::span<const Matrix> inputs);

}  // namespace tlane::ad
