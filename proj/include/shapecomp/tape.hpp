#pragma once

#include <functional>
#include <vector>

#include "shapecomp/optim.hpp"
#include "shapecomp/tensor.hpp"

namespace shapecomp {

// Reverse-mode differentiation tape. Kernels record their inputs and a
// backward rule; backward() accumulates exact gradients into every reachable
// Parameter. A tape is built per forward pass and is single-use.
class Tape {
 public:
  using Id = int;

  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

  // Leaves. constant() never receives gradient; leaf() tracks one (read it
  // back with grad()); param() accumulates into the bound Parameter.
  Id constant(Tensor value);
  Id leaf(Tensor value);
  Id param(Parameter& p);

  // Kernels.
  Id matmul(Id a, Id b);     // A * B
  Id matmul_nt(Id a, Id b);  // A * B^T
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id add_rowvec(Id a, Id v);  // v is 1 x C, broadcast over rows
  Id add_scalar(Id a, double s);
  Id scale(Id a, double s);
  Id mul(Id a, Id b);      // elementwise
  Id mul_col(Id a, Id v);  // v is R x 1, scales row r by v(r)
  Id col(Id a, std::size_t j);
  Id softmax_rows(Id a);  // max-subtracted, rows sum to one
  Id exp(Id a);
  Id log(Id a);
  Id sum(Id a);        // 1x1
  Id mean(Id a);       // 1x1
  Id mean_rows(Id a);  // 1 x C, mean over rows
  Id l2_norm(Id a);    // 1x1 Frobenius norm
  Id gather_rows(Id a, std::vector<int> idx);
  Id scatter_add_rows(Id a, std::vector<int> idx, std::size_t out_rows);
  Id reshape(Id a, std::size_t rows, std::size_t cols);
  Id elu(Id a);
  Id relu(Id a);
  Id tanh(Id a);

  // Reverse pass from a scalar loss. Unreachable gradients stay zero.
  // Calling twice on the same tape is an error.
  void backward(Id loss);

  const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Id> parents;
    std::function<void(Tape&, Node&)> backward;
    Parameter* bound = nullptr;
    bool needs_grad = false;
  };

  Id emit(Tensor value, std::vector<Id> parents, std::function<void(Tape&, Node&)> fn,
          const char* op);
  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
  bool check_finite_;
  bool backward_done_ = false;
};

}  // namespace shapecomp
