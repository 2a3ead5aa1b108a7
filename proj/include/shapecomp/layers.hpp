#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "shapecomp/mesh.hpp"
#include "shapecomp/rng.hpp"
#include "shapecomp/tape.hpp"

namespace shapecomp {

enum class Activation { None, Elu, Relu, Tanh };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);
Tape::Id apply_activation(Tape& t, Tape::Id x, Activation act);

// Flattened edge list of a neighborhood graph, the layout every conv layer
// shares: one entry per (center, neighbor) pair, plus 1/|N_i| factors.
struct ConvContext {
  std::vector<int> src;  // neighbor j
  std::vector<int> dst;  // center i
  Tensor inv_counts;     // N x 1
  int vertex_count = 0;

  std::size_t edge_count() const { return src.size(); }
};

// Throws DataError("isolated vertex ...") when a vertex ends up with an
// empty patch and self-inclusion is off.
ConvContext make_conv_context(const NeighborhoodGraph& graph, bool include_self);

// Dynamic-filter graph convolution. Per vertex the output is
//   y_i = b + sum_m (1/|N_i|) sum_{j in N_i} q_m(x_i, x_j) W_m x_j
// with soft filter assignments q_m proportional to exp(u_m^T(x_i - x_j) + c_m)
// normalized to sum to one over the M filters.
struct FeastConv {
  int in_dim = 0;
  int out_dim = 0;
  int filters = 0;  // M
  bool include_self = true;

  std::vector<Parameter> weight;  // M matrices, out_dim x in_dim
  Parameter direction;            // u, in_dim x M
  Parameter offset;               // c, 1 x M
  Parameter bias;                 // b, 1 x out_dim

  FeastConv() = default;
  FeastConv(const std::string& name, int in_dim, int out_dim, int filters, Rng& rng,
            bool include_self = true);

  // Filter assignment weights for one vertex pair; positive, sums to one.
  Eigen::VectorXd assignment_weights(const Eigen::VectorXd& x_i, const Eigen::VectorXd& x_j) const;

  Tape::Id forward(Tape& t, Tape::Id features, const ConvContext& ctx);

  std::vector<Parameter*> parameters();
};

// Fully connected layer, y = x W^T + b.
struct Dense {
  Parameter weight;  // out_dim x in_dim
  Parameter bias;    // 1 x out_dim

  Dense() = default;
  Dense(const std::string& name, int in_dim, int out_dim, Rng& rng);

  Tape::Id forward(Tape& t, Tape::Id x);

  std::vector<Parameter*> parameters();
};

// Convenience evaluation without gradient tracking.
Tensor conv_forward(const Tensor& features, const NeighborhoodGraph& graph, FeastConv& layer);

// Glorot uniform draw over [-limit, limit], limit = sqrt(6/(fan_in+fan_out)).
Tensor xavier_init(std::size_t rows, std::size_t cols, int fan_in, int fan_out, Rng& rng);

}  // namespace shapecomp
