#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "shapecomp/tensor.hpp"

namespace shapecomp {

// Named trainable tensor. The gradient buffer always matches the value
// shape and is zeroed by the optimizer at each step boundary.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  // Applies one update from the accumulated gradients, then zeroes them.
  virtual void step(const std::vector<Parameter*>& params) = 0;
  virtual long step_count() const = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double learning_rate) : lr_(learning_rate) {}
  void step(const std::vector<Parameter*>& params) override;
  long step_count() const override { return steps_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_;
  long steps_ = 0;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}
  void step(const std::vector<Parameter*>& params) override;
  long step_count() const override { return steps_; }
  double learning_rate() const { return lr_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  double lr_, beta1_, beta2_, eps_;
  long steps_ = 0;
  std::unordered_map<const Parameter*, Moments> state_;
};

}  // namespace shapecomp
