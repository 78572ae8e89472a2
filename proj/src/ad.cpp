#include "tlane/ad.hpp"

#include <algorithm>
#include <cmath>

namespace tlane::ad {

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
}

void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("vars belong to different tapes");
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw std::invalid_argument("scalar() on non-1x1 var");
  return v(0, 0);
}

Var Tape::leaf(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::scalar(double value, bool differentiable) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return differentiable ? leaf(std::move(m)) : constant(std::move(m));
}

Var Tape::record(Matrix value, std::span<const Var> parents, Backprop backprop) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw std::invalid_argument("parent var belongs to another tape");
    needs = needs || nodes_[p.id()].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), Matrix(), needs ? std::move(backprop) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& output) {
  if (&output.tape() != this) throw std::invalid_argument("backward: var from another tape");
  if (output.value().size() != 1) throw std::invalid_argument("backward: output must be 1x1");
  for (Node& n : nodes_) {
    if (n.needs_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    } else {
      n.grad.resize(0, 0);
    }
  }
  if (!nodes_[output.id()].needs_grad) return;
  nodes_[output.id()].grad(0, 0) = 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backprop) continue;
    // A node never accumulates into itself, so its slot can be lent out.
    Matrix g = std::move(n.grad);
    n.backprop(*this, g);
    n.grad = std::move(g);
  }
}

void Tape::accumulate(const Var& target, const Matrix& delta) {
  Node& n = nodes_[target.id()];
  if (!n.needs_grad) return;
  n.grad += delta;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic

Var operator+(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() + b.value(), parents, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  const Var parents[] = {a, b};
  return a.tape().record(a.value() - b.value(), parents, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var operator*(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  const Var parents[] = {a, b};
  return a.tape().record(a.value().cwiseProduct(b.value()), parents,
                         [a, b](Tape& t, const Matrix& g) {
                           if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                           if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                         });
}

Var operator/(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "div");
  if ((b.value().array() == 0.0).any()) throw DomainError("div: zero divisor");
  const Var parents[] = {a, b};
  return a.tape().record(a.value().cwiseQuotient(b.value()), parents,
                         [a, b](Tape& t, const Matrix& g) {
                           const Matrix& bv = b.value();
                           if (t.needs_grad(a)) t.accumulate(a, g.cwiseQuotient(bv));
                           if (t.needs_grad(b)) {
                             Matrix d = -(g.array() * a.value().array() / bv.array().square()).matrix();
                             t.accumulate(b, d);
                           }
                         });
}

Var operator-(const Var& a) { return a * -1.0; }

Var operator+(const Var& a, double c) {
  const Var parents[] = {a};
  Matrix v = (a.value().array() + c).matrix();
  return a.tape().record(std::move(v), parents,
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var operator+(double c, const Var& a) { return a + c; }
Var operator-(const Var& a, double c) { return a + (-c); }
Var operator-(double c, const Var& a) { return (a * -1.0) + c; }

Var operator*(const Var& a, double c) {
  const Var parents[] = {a};
  return a.tape().record(a.value() * c, parents,
                         [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); });
}

Var operator*(double c, const Var& a) { return a * c; }

Var add_row(const Var& a, const Var& r) {
  require_same_tape(a, r);
  if (r.rows() != 1 || r.cols() != a.cols()) throw std::invalid_argument("add_row: shape mismatch");
  const Var parents[] = {a, r};
  Matrix v = a.value();
  v.rowwise() += r.value().row(0);
  return a.tape().record(std::move(v), parents, [a, r](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(r)) t.accumulate(r, g.colwise().sum());
  });
}

Var scale_rows(const Var& a, const Var& c) {
  require_same_tape(a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) throw std::invalid_argument("scale_rows: shape mismatch");
  const Var parents[] = {a, c};
  Matrix v = a.value();
  for (Index i = 0; i < v.rows(); ++i) v.row(i) *= c.value()(i, 0);
  return a.tape().record(std::move(v), parents, [a, c](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) {
      Matrix d = g;
      for (Index i = 0; i < d.rows(); ++i) d.row(i) *= c.value()(i, 0);
      t.accumulate(a, d);
    }
    if (t.needs_grad(c)) {
      Matrix d = g.cwiseProduct(a.value()).rowwise().sum();
      t.accumulate(c, d);
    }
  });
}

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const Var parents[] = {a, b};
  Matrix v = a.value() * b.value();
  return a.tape().record(std::move(v), parents, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var transpose(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().transpose();
  return a.tape().record(std::move(v), parents,
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

// ---------------------------------------------------------------------------
// Unary functions

Var map(const Var& a, const std::function<double(double)>& f,
        const std::function<double(double)>& df) {
  const Var parents[] = {a};
  Matrix v = a.value().unaryExpr(f);
  return a.tape().record(std::move(v), parents, [a, df](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr(df).cwiseProduct(g);
    t.accumulate(a, d);
  });
}

Var log(const Var& a) {
  if ((a.value().array() <= 0.0).any()) throw DomainError("log: non-positive argument");
  const Var parents[] = {a};
  Matrix v = a.value().array().log().matrix();
  return a.tape().record(std::move(v), parents, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

Var exp(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().array().exp().matrix();
  Matrix y = v;
  return a.tape().record(std::move(v), parents, [a, y = std::move(y)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(y));
  });
}

Var tanh(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().array().tanh().matrix();
  Matrix y = v;
  return a.tape().record(std::move(v), parents, [a, y = std::move(y)](Tape& t, const Matrix& g) {
    Matrix d = (g.array() * (1.0 - y.array().square())).matrix();
    t.accumulate(a, d);
  });
}

Var sigmoid(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  Matrix y = v;
  return a.tape().record(std::move(v), parents, [a, y = std::move(y)](Tape& t, const Matrix& g) {
    Matrix d = (g.array() * y.array() * (1.0 - y.array())).matrix();
    t.accumulate(a, d);
  });
}

Var relu(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().cwiseMax(0.0);
  return a.tape().record(std::move(v), parents, [a](Tape& t, const Matrix& g) {
    Matrix d = (a.value().array() > 0.0).select(g, 0.0);
    t.accumulate(a, d);
  });
}

Var abs(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().cwiseAbs();
  return a.tape().record(std::move(v), parents, [a](Tape& t, const Matrix& g) {
    const auto& x = a.value().array();
    Matrix d = (x > 0.0).select(g, (x < 0.0).select(-g, 0.0));
    t.accumulate(a, d);
  });
}

Var square(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().array().square().matrix();
  return a.tape().record(std::move(v), parents, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (2.0 * g.array() * a.value().array()).matrix());
  });
}

Var pow(const Var& a, double p) {
  const auto& x = a.value().array();
  if ((x < 0.0).any()) throw DomainError("pow: negative base");
  if (p < 1.0 && (x == 0.0).any()) throw DomainError("pow: zero base with exponent < 1");
  const Var parents[] = {a};
  Matrix v = x.pow(p).matrix();
  return a.tape().record(std::move(v), parents, [a, p](Tape& t, const Matrix& g) {
    Matrix d = (g.array() * p * a.value().array().pow(p - 1.0)).matrix();
    t.accumulate(a, d);
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var sum(const Var& a) {
  const Var parents[] = {a};
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape().record(std::move(v), parents, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw std::invalid_argument("mean: empty var");
  return sum(a) * (1.0 / static_cast<double>(a.value().size()));
}

Var row_sum(const Var& a) {
  const Var parents[] = {a};
  Matrix v = a.value().rowwise().sum();
  return a.tape().record(std::move(v), parents, [a](Tape& t, const Matrix& g) {
    Matrix d(a.rows(), a.cols());
    for (Index i = 0; i < d.rows(); ++i) d.row(i).setConstant(g(i, 0));
    t.accumulate(a, d);
  });
}

Var row_min(const Var& a) {
  if (a.cols() == 0) throw std::invalid_argument("row_min: no columns");
  const Matrix& x = a.value();
  std::vector<Index> argmin(static_cast<std::size_t>(x.rows()));
  Matrix v(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < x.cols(); ++j) {
      if (x(i, j) < x(i, best)) best = j;
    }
    argmin[static_cast<std::size_t>(i)] = best;
    v(i, 0) = x(i, best);
  }
  const Var parents[] = {a};
  return a.tape().record(std::move(v), parents,
                         [a, argmin = std::move(argmin)](Tape& t, const Matrix& g) {
                           Matrix d = Matrix::Zero(a.rows(), a.cols());
                           for (Index i = 0; i < d.rows(); ++i) {
                             d(i, argmin[static_cast<std::size_t>(i)]) = g(i, 0);
                           }
                           t.accumulate(a, d);
                         });
}

Var col_min(const Var& a) { return transpose(row_min(transpose(a))); }

// ---------------------------------------------------------------------------
// Shape manipulation

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols");
  const Var parents[] = {a};
  Matrix v = a.value().middleCols(start, count);
  return a.tape().record(std::move(v), parents, [a, start, count](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    d.middleCols(start, count) = g;
    t.accumulate(a, d);
  });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("slice_rows");
  const Var parents[] = {a};
  Matrix v = a.value().middleRows(start, count);
  return a.tape().record(std::move(v), parents, [a, start, count](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    d.middleRows(start, count) = g;
    t.accumulate(a, d);
  });
}

Var select_rows(const Var& a, std::span<const Index> rows) {
  std::vector<Index> idx(rows.begin(), rows.end());
  Matrix v(static_cast<Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows()) throw std::out_of_range("select_rows");
    v.row(static_cast<Index>(i)) = a.value().row(idx[i]);
  }
  const Var parents[] = {a};
  return a.tape().record(std::move(v), parents, [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Index>(i));
    t.accumulate(a, d);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  Matrix v(rows, cols);
  Index offset = 0;
  for (const Var& p : kept) {
    v.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  Tape& tape = kept.front().tape();
  return tape.record(std::move(v), kept, [kept](Tape& t, const Matrix& g) {
    Index off = 0;
    for (const Var& p : kept) {
      if (t.needs_grad(p)) t.accumulate(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
  }
  std::vector<Var> kept(parts.begin(), parts.end());
  Matrix v(rows, cols);
  Index offset = 0;
  for (const Var& p : kept) {
    v.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  Tape& tape = kept.front().tape();
  return tape.record(std::move(v), kept, [kept](Tape& t, const Matrix& g) {
    Index off = 0;
    for (const Var& p : kept) {
      if (t.needs_grad(p)) t.accumulate(p, g.middleRows(off, p.rows()));
      off += p.rows();
    }
  });
}

// ---------------------------------------------------------------------------
// Composite primitives

Var log_softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix v(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const double lse = m + std::log((x.row(i).array() - m).exp().sum());
    v.row(i) = (x.row(i).array() - lse).matrix();
  }
  Matrix probs = v.array().exp().matrix();
  const Var parents[] = {a};
  return a.tape().record(std::move(v), parents,
                         [a, probs = std::move(probs)](Tape& t, const Matrix& g) {
                           Matrix d = g;
                           for (Index i = 0; i < d.rows(); ++i) {
                             d.row(i) -= probs.row(i) * g.row(i).sum();
                           }
                           t.accumulate(a, d);
                         });
}

Var pick(const Var& a, std::span<const Index> columns) {
  if (static_cast<Index>(columns.size()) != a.rows()) throw std::invalid_argument("pick: one column per row");
  std::vector<Index> cols(columns.begin(), columns.end());
  Matrix v(a.rows(), 1);
  for (Index i = 0; i < a.rows(); ++i) {
    const Index c = cols[static_cast<std::size_t>(i)];
    if (c < 0 || c >= a.cols()) throw std::out_of_range("pick: column index out of range");
    v(i, 0) = a.value()(i, c);
  }
  const Var parents[] = {a};
  return a.tape().record(std::move(v), parents, [a, cols = std::move(cols)](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (Index i = 0; i < d.rows(); ++i) d(i, cols[static_cast<std::size_t>(i)]) = g(i, 0);
    t.accumulate(a, d);
  });
}

Var pairwise_sq_dist(const Var& p, const Var& q) {
  require_same_tape(p, q);
  if (p.cols() != q.cols()) throw std::invalid_argument("pairwise_sq_dist: dimension mismatch");
  const Matrix& pv = p.value();
  const Matrix& qv = q.value();
  Matrix v(pv.rows(), qv.rows());
  for (Index i = 0; i < pv.rows(); ++i) {
    for (Index j = 0; j < qv.rows(); ++j) v(i, j) = (pv.row(i) - qv.row(j)).squaredNorm();
  }
  const Var parents[] = {p, q};
  return p.tape().record(std::move(v), parents, [p, q](Tape& t, const Matrix& g) {
    const Matrix& pv = p.value();
    const Matrix& qv = q.value();
    Matrix dp = Matrix::Zero(pv.rows(), pv.cols());
    Matrix dq = Matrix::Zero(qv.rows(), qv.cols());
    for (Index i = 0; i < pv.rows(); ++i) {
      for (Index j = 0; j < qv.rows(); ++j) {
        const double w = g(i, j);
        if (w == 0.0) continue;
        const auto diff = (pv.row(i) - qv.row(j)) * (2.0 * w);
        dp.row(i) += diff;
        dq.row(j) -= diff;
      }
    }
    t.accumulate(p, dp);
    t.accumulate(q, dq);
  });
}

// ---------------------------------------------------------------------------

Evaluation evaluate_with_gradients(const Program& program, std::span<const Matrix> inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(tape.leaf(m));
  const Var out = program(tape, leaves);
  if (out.value().size() != 1) throw std::invalid_argument("program output must be 1x1");
  tape.backward(out);
  Evaluation e;
  e.output = out.scalar();
  for (const Var& leaf : leaves) e.gradients.push_back(leaf.grad());
  return e;
}

Evaluation evaluate_with_gradients(const Program& program, std::span<const double> inputs) {
  std::vector<Matrix> ms;
  ms.reserve(inputs.size());
  for (double x : inputs) ms.push_back(Matrix::Constant(1, 1, x));
  return evaluate_with_gradients(program, std::span<const Matrix>(ms));
}

double evaluate(const Program& program, std::span<const Matrix> inputs) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Matrix& m : inputs) vars.push_back(tape.constant(m));
  const Var out = program(tape, vars);
  if (out.value().size() != 1) throw std::invalid_argument("program output must be 1x1");
  return out.scalar();
}

}  // namespace tlane::ad
