#include "shapecomp/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "shapecomp/errors.hpp"

namespace shapecomp {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

MatMap map(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

ConstMatMap map(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw DataError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a) {
  throw DataError(std::string(op) + ": bad shape " + a.shape_str());
}

}  // namespace

Tape::Id Tape::emit(Tensor value, std::vector<Id> parents,
                    std::function<void(Tape&, Node&)> fn, const char* op) {
  if (check_finite_ && !value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite output");
  }
  Node n;
  n.grad = Tensor(value.rows(), value.cols());
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.backward = std::move(fn);
  for (Id p : n.parents) {
    if (node(p).needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::constant(Tensor value) {
  return emit(std::move(value), {}, nullptr, "constant");
}

Tape::Id Tape::leaf(Tensor value) {
  const Id id = emit(std::move(value), {}, nullptr, "leaf");
  node(id).needs_grad = true;
  return id;
}

Tape::Id Tape::param(Parameter& p) {
  const Id id = emit(p.value, {}, nullptr, "param");
  node(id).needs_grad = true;
  node(id).bound = &p;
  return id;
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.rows()) shape_fail("matmul", A, B);
  Tensor out(A.rows(), B.cols());
  map(out).noalias() = map(A) * map(B);
  return emit(std::move(out), {a, b},
              [a, b](Tape& t, Node& self) {
                auto dY = map(self.grad);
                if (t.node(a).needs_grad) map(t.node(a).grad).noalias() += dY * map(t.value(b)).transpose();
                if (t.node(b).needs_grad) map(t.node(b).grad).noalias() += map(t.value(a)).transpose() * dY;
              },
              "matmul");
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.cols() != B.cols()) shape_fail("matmul_nt", A, B);
  Tensor out(A.rows(), B.rows());
  map(out).noalias() = map(A) * map(B).transpose();
  return emit(std::move(out), {a, b},
              [a, b](Tape& t, Node& self) {
                auto dY = map(self.grad);
                if (t.node(a).needs_grad) map(t.node(a).grad).noalias() += dY * map(t.value(b));
                if (t.node(b).needs_grad) map(t.node(b).grad).noalias() += dY.transpose() * map(t.value(a));
              },
              "matmul_nt");
}

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) shape_fail("add", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return emit(std::move(out), {a, b},
              [a, b](Tape& t, Node& self) {
                for (Id p : {a, b}) {
                  if (!t.node(p).needs_grad) continue;
                  Tensor& g = t.node(p).grad;
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                }
              },
              "add");
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) shape_fail("sub", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return emit(std::move(out), {a, b},
              [a, b](Tape& t, Node& self) {
                if (t.node(a).needs_grad) {
                  Tensor& g = t.node(a).grad;
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                }
                if (t.node(b).needs_grad) {
                  Tensor& g = t.node(b).grad;
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                }
              },
              "sub");
}

Tape::Id Tape::add_rowvec(Id a, Id v) {
  const Tensor& A = value(a);
  const Tensor& V = value(v);
  if (V.rows() != 1 || V.cols() != A.cols()) shape_fail("add_rowvec", A, V);
  Tensor out = A;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += V[c];
  }
  return emit(std::move(out), {a, v},
              [a, v](Tape& t, Node& self) {
                if (t.node(a).needs_grad) {
                  Tensor& g = t.node(a).grad;
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                }
                if (t.node(v).needs_grad) {
                  Tensor& g = t.node(v).grad;
                  for (std::size_t r = 0; r < self.grad.rows(); ++r) {
                    for (std::size_t c = 0; c < self.grad.cols(); ++c) g[c] += self.grad(r, c);
                  }
                }
              },
              "add_rowvec");
}

Tape::Id Tape::add_scalar(Id a, double s) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
              },
              "add_scalar");
}

Tape::Id Tape::scale(Id a, double s) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return emit(std::move(out), {a},
              [a, s](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
              },
              "scale");
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!A.same_shape(B)) shape_fail("mul", A, B);
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return emit(std::move(out), {a, b},
              [a, b](Tape& t, Node& self) {
                if (t.node(a).needs_grad) {
                  Tensor& g = t.node(a).grad;
                  const Tensor& B = t.value(b);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * B[i];
                }
                if (t.node(b).needs_grad) {
                  Tensor& g = t.node(b).grad;
                  const Tensor& A = t.value(a);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * A[i];
                }
              },
              "mul");
}

Tape::Id Tape::mul_col(Id a, Id v) {
  const Tensor& A = value(a);
  const Tensor& V = value(v);
  if (V.cols() != 1 || V.rows() != A.rows()) shape_fail("mul_col", A, V);
  Tensor out = A;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) *= V[r];
  }
  return emit(std::move(out), {a, v},
              [a, v](Tape& t, Node& self) {
                const Tensor& A = t.value(a);
                const Tensor& V = t.value(v);
                if (t.node(a).needs_grad) {
                  Tensor& g = t.node(a).grad;
                  for (std::size_t r = 0; r < g.rows(); ++r) {
                    for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(r, c) * V[r];
                  }
                }
                if (t.node(v).needs_grad) {
                  Tensor& g = t.node(v).grad;
                  for (std::size_t r = 0; r < A.rows(); ++r) {
                    double acc = 0.0;
                    for (std::size_t c = 0; c < A.cols(); ++c) acc += self.grad(r, c) * A(r, c);
                    g[r] += acc;
                  }
                }
              },
              "mul_col");
}

Tape::Id Tape::col(Id a, std::size_t j) {
  const Tensor& A = value(a);
  if (j >= A.cols()) shape_fail("col", A);
  Tensor out(A.rows(), 1);
  for (std::size_t r = 0; r < A.rows(); ++r) out[r] = A(r, j);
  return emit(std::move(out), {a},
              [a, j](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t r = 0; r < self.grad.rows(); ++r) g(r, j) += self.grad[r];
              },
              "col");
}

Tape::Id Tape::softmax_rows(Id a) {
  const Tensor& A = value(a);
  Tensor out(A.rows(), A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    double m = A(r, 0);
    for (std::size_t c = 1; c < A.cols(); ++c) m = std::max(m, A(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < A.cols(); ++c) {
      out(r, c) = std::exp(A(r, c) - m);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) /= z;
  }
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                const Tensor& Q = self.value;
                for (std::size_t r = 0; r < Q.rows(); ++r) {
                  double dot = 0.0;
                  for (std::size_t c = 0; c < Q.cols(); ++c) dot += self.grad(r, c) * Q(r, c);
                  for (std::size_t c = 0; c < Q.cols(); ++c) {
                    g(r, c) += Q(r, c) * (self.grad(r, c) - dot);
                  }
                }
              },
              "softmax_rows");
}

Tape::Id Tape::exp(Id a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.value[i];
              },
              "exp");
}

Tape::Id Tape::log(Id a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                const Tensor& A = t.value(a);
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / A[i];
              },
              "log");
}

Tape::Id Tape::sum(Id a) {
  const Tensor& A = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i];
  return emit(Tensor::scalar(acc), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                const double d = self.grad[0];
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
              },
              "sum");
}

Tape::Id Tape::mean(Id a) {
  const Tensor& A = value(a);
  if (A.size() == 0) shape_fail("mean", A);
  double acc = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i];
  return emit(Tensor::scalar(acc / static_cast<double>(A.size())), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                const double d = self.grad[0] / static_cast<double>(g.size());
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
              },
              "mean");
}

Tape::Id Tape::mean_rows(Id a) {
  const Tensor& A = value(a);
  if (A.rows() == 0) shape_fail("mean_rows", A);
  Tensor out(1, A.cols());
  for (std::size_t r = 0; r < A.rows(); ++r) {
    for (std::size_t c = 0; c < A.cols(); ++c) out[c] += A(r, c);
  }
  for (std::size_t c = 0; c < A.cols(); ++c) out[c] /= static_cast<double>(A.rows());
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                const double inv = 1.0 / static_cast<double>(g.rows());
                for (std::size_t r = 0; r < g.rows(); ++r) {
                  for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad[c] * inv;
                }
              },
              "mean_rows");
}

Tape::Id Tape::l2_norm(Id a) {
  const Tensor& A = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i] * A[i];
  const double norm = std::sqrt(acc);
  return emit(Tensor::scalar(norm), {a},
              [a, norm](Tape& t, Node& self) {
                if (!t.node(a).needs_grad || norm == 0.0) return;
                Tensor& g = t.node(a).grad;
                const Tensor& A = t.value(a);
                const double d = self.grad[0] / norm;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += d * A[i];
              },
              "l2_norm");
}

Tape::Id Tape::gather_rows(Id a, std::vector<int> idx) {
  const Tensor& A = value(a);
  Tensor out(idx.size(), A.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int src = idx[r];
    if (src < 0 || static_cast<std::size_t>(src) >= A.rows()) shape_fail("gather_rows", A);
    for (std::size_t c = 0; c < A.cols(); ++c) out(r, c) = A(static_cast<std::size_t>(src), c);
  }
  return emit(std::move(out), {a},
              [a, idx = std::move(idx)](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t r = 0; r < idx.size(); ++r) {
                  const auto src = static_cast<std::size_t>(idx[r]);
                  for (std::size_t c = 0; c < g.cols(); ++c) g(src, c) += self.grad(r, c);
                }
              },
              "gather_rows");
}

Tape::Id Tape::scatter_add_rows(Id a, std::vector<int> idx, std::size_t out_rows) {
  const Tensor& A = value(a);
  if (idx.size() != A.rows()) shape_fail("scatter_add_rows", A);
  Tensor out(out_rows, A.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int dst = idx[r];
    if (dst < 0 || static_cast<std::size_t>(dst) >= out_rows) shape_fail("scatter_add_rows", A);
    for (std::size_t c = 0; c < A.cols(); ++c) out(static_cast<std::size_t>(dst), c) += A(r, c);
  }
  return emit(std::move(out), {a},
              [a, idx = std::move(idx)](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t r = 0; r < idx.size(); ++r) {
                  const auto dst = static_cast<std::size_t>(idx[r]);
                  for (std::size_t c = 0; c < g.cols(); ++c) g(r, c) += self.grad(dst, c);
                }
              },
              "scatter_add_rows");
}

Tape::Id Tape::reshape(Id a, std::size_t rows, std::size_t cols) {
  const Tensor& A = value(a);
  if (rows * cols != A.size()) shape_fail("reshape", A);
  Tensor out(rows, cols);
  out.buffer() = A.buffer();
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
              },
              "reshape");
}

Tape::Id Tape::elu(Id a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] <= 0.0) out[i] = std::expm1(out[i]);
  }
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                const Tensor& A = t.value(a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  g[i] += self.grad[i] * (A[i] > 0.0 ? 1.0 : self.value[i] + 1.0);
                }
              },
              "elu");
}

Tape::Id Tape::relu(Id a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                const Tensor& A = t.value(a);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  if (A[i] > 0.0) g[i] += self.grad[i];
                }
              },
              "relu");
}

Tape::Id Tape::tanh(Id a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return emit(std::move(out), {a},
              [a](Tape& t, Node& self) {
                if (!t.node(a).needs_grad) return;
                Tensor& g = t.node(a).grad;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  g[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
                }
              },
              "tanh");
}

void Tape::backward(Id loss) {
  if (backward_done_) throw NumericError("tape: backward called twice without reset");
  backward_done_ = true;
  Node& top = node(loss);
  if (top.value.size() != 1) {
    throw DataError("tape: backward needs a scalar loss, got " + top.value.shape_str());
  }
  top.grad[0] = 1.0;

  // Mark nodes reachable from the loss so unreachable gradients stay zero
  // and dead branches cost nothing.
  std::vector<char> reached(nodes_.size(), 0);
  reached[static_cast<std::size_t>(loss)] = 1;
  for (Id id = loss; id >= 0; --id) {
    if (!reached[static_cast<std::size_t>(id)]) continue;
    Node& n = node(id);
    if (!n.needs_grad) continue;
    for (Id p : n.parents) {
      if (node(p).needs_grad) reached[static_cast<std::size_t>(p)] = 1;
    }
    if (n.backward) n.backward(*this, n);
  }

  for (Node& n : nodes_) {
    if (n.bound && n.needs_grad) {
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->grad[i] += n.grad[i];
    }
  }
}

}  // namespace shapecomp
