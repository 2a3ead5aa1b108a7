#include "shapecomp/layers.hpp"

#include <cmath>

#include "shapecomp/errors.hpp"

namespace shapecomp {

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::Elu;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "none") return Activation::None;
  throw DataError("unknown activation '" + name + "'");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Elu: return "elu";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::None: return "none";
  }
  return "none";
}

Tape::Id apply_activation(Tape& t, Tape::Id x, Activation act) {
  switch (act) {
    case Activation::Elu: return t.elu(x);
    case Activation::Relu: return t.relu(x);
    case Activation::Tanh: return t.tanh(x);
    case Activation::None: return x;
  }
  return x;
}

ConvContext make_conv_context(const NeighborhoodGraph& graph, bool include_self) {
  ConvContext ctx;
  ctx.vertex_count = graph.vertex_count();
  ctx.inv_counts = Tensor(static_cast<std::size_t>(ctx.vertex_count), 1);
  for (int i = 0; i < ctx.vertex_count; ++i) {
    const auto& list = graph.neighbors[static_cast<std::size_t>(i)];
    std::size_t count = list.size();
    bool self_present = graph.includes_self;
    for (int j : list) {
      ctx.src.push_back(j);
      ctx.dst.push_back(i);
      if (j == i) self_present = true;
    }
    if (include_self && !self_present) {
      ctx.src.push_back(i);
      ctx.dst.push_back(i);
      ++count;
    }
    if (count == 0) {
      throw DataError("isolated vertex " + std::to_string(i) + " with self-inclusion off");
    }
    ctx.inv_counts[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(count);
  }
  return ctx;
}

Tensor xavier_init(std::size_t rows, std::size_t cols, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

FeastConv::FeastConv(const std::string& name, int in, int out, int m, Rng& rng, bool self)
    : in_dim(in), out_dim(out), filters(m), include_self(self) {
  if (m < 1) throw DataError("conv '" + name + "': filter count must be >= 1");
  weight.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    weight.emplace_back(name + ".W" + std::to_string(k),
                        xavier_init(static_cast<std::size_t>(out), static_cast<std::size_t>(in),
                                    in, out, rng));
  }
  direction = Parameter(name + ".u", xavier_init(static_cast<std::size_t>(in),
                                                 static_cast<std::size_t>(m), in, 1, rng));
  offset = Parameter(name + ".c", Tensor(1, static_cast<std::size_t>(m)));
  bias = Parameter(name + ".b", Tensor(1, static_cast<std::size_t>(out)));
}

Eigen::VectorXd FeastConv::assignment_weights(const Eigen::VectorXd& x_i,
                                              const Eigen::VectorXd& x_j) const {
  if (x_i.size() != in_dim || x_j.size() != in_dim) {
    throw DataError("assignment_weights: feature dimension mismatch");
  }
  Eigen::VectorXd logits(filters);
  for (int m = 0; m < filters; ++m) {
    double dot = offset.value(0, static_cast<std::size_t>(m));
    for (int k = 0; k < in_dim; ++k) {
      dot += direction.value(static_cast<std::size_t>(k), static_cast<std::size_t>(m)) *
             (x_i[k] - x_j[k]);
    }
    logits[m] = dot;
  }
  const double peak = logits.maxCoeff();
  Eigen::VectorXd q = (logits.array() - peak).exp();
  return q / q.sum();
}

Tape::Id FeastConv::forward(Tape& t, Tape::Id features, const ConvContext& ctx) {
  const Tensor& x = t.value(features);
  if (x.cols() != static_cast<std::size_t>(in_dim)) {
    throw DataError("conv forward: expected " + std::to_string(in_dim) + " channels, got " +
                    x.shape_str());
  }
  if (x.rows() != static_cast<std::size_t>(ctx.vertex_count)) {
    throw DataError("conv forward: feature rows do not match graph vertices");
  }

  const auto x_center = t.gather_rows(features, ctx.dst);
  const auto x_neighbor = t.gather_rows(features, ctx.src);
  const auto diff = t.sub(x_center, x_neighbor);

  // q over filters per edge, from differences only.
  const auto u_id = t.param(direction);
  const auto c_id = t.param(offset);
  const auto logits = t.add_rowvec(t.matmul(diff, u_id), c_id);
  const auto q = t.softmax_rows(logits);

  // sum_m q_m * (x_j W_m^T), accumulated per edge.
  Tape::Id acc = -1;
  for (int m = 0; m < filters; ++m) {
    const auto w_id = t.param(weight[static_cast<std::size_t>(m)]);
    const auto projected = t.matmul_nt(x_neighbor, w_id);
    const auto weighted = t.mul_col(projected, t.col(q, static_cast<std::size_t>(m)));
    acc = (m == 0) ? weighted : t.add(acc, weighted);
  }

  const auto pooled = t.scatter_add_rows(acc, ctx.dst, static_cast<std::size_t>(ctx.vertex_count));
  const auto averaged = t.mul_col(pooled, t.constant(ctx.inv_counts));
  return t.add_rowvec(averaged, t.param(bias));
}

std::vector<Parameter*> FeastConv::parameters() {
  std::vector<Parameter*> out;
  for (auto& w : weight) out.push_back(&w);
  out.push_back(&direction);
  out.push_back(&offset);
  out.push_back(&bias);
  return out;
}

Dense::Dense(const std::string& name, int in_dim, int out_dim, Rng& rng) {
  weight = Parameter(name + ".W", xavier_init(static_cast<std::size_t>(out_dim),
                                              static_cast<std::size_t>(in_dim), in_dim, out_dim,
                                              rng));
  bias = Parameter(name + ".b", Tensor(1, static_cast<std::size_t>(out_dim)));
}

Tape::Id Dense::forward(Tape& t, Tape::Id x) {
  return t.add_rowvec(t.matmul_nt(x, t.param(weight)), t.param(bias));
}

std::vector<Parameter*> Dense::parameters() { return {&weight, &bias}; }

Tensor conv_forward(const Tensor& features, const NeighborhoodGraph& graph, FeastConv& layer) {
  const ConvContext ctx = make_conv_context(graph, layer.include_self);
  Tape t(false);
  const auto x = t.constant(features);
  const auto y = layer.forward(t, x, ctx);
  return t.value(y);
}

}  // namespace shapecomp
