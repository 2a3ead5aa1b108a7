#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "shapecomp/layers.hpp"
#include "shapecomp/mesh.hpp"
#include "shapecomp/rng.hpp"

namespace shapecomp {

struct VaeConfig {
  int filters = 8;              // M weight matrices per conv layer
  int latent_dim = 128;         // d
  double prior_weight = 1e-8;   // lambda on the KL term
  std::vector<int> encoder_widths = {16, 32, 64};
  int decoder_seed_width = 16;  // channels of the dense d -> N x seed expansion
  std::vector<int> decoder_widths = {32, 16, 3};
  int ring = 2;
  bool include_self = true;
  std::string activation = "elu";
  std::string recon_loss = "frobenius";  // "frobenius" | "per_vertex_rms"

  double learning_rate = 1e-4;
  int batch_size = 2;
  long iterations = 300000;
  long snapshot_every = 100;  // divergence fallback granularity

  // Augmentation, as fractions of the per-shape radius; scaling is a
  // uniform factor about the centroid, translation stays in the x-y plane.
  double aug_noise = 0.005;
  double aug_translation = 0.10;
  double aug_scale_min = 0.9;
  double aug_scale_max = 1.1;

  std::uint64_t seed = 0;

  // Small model for fast synthetic-family experiments.
  static VaeConfig desk_preset();
  // Two conv layers and latent dimension 32, for low-variability families.
  static VaeConfig face_preset();

  nlohmann::json to_json() const;
  static VaeConfig from_json(const nlohmann::json& j);
};

struct EncoderOutput {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_var;
};

struct LossValues {
  double total = 0.0;
  double recon = 0.0;
  double prior = 0.0;
};

struct TrainRecord {
  long iteration = 0;
  double total = 0.0;
  double recon = 0.0;
  double prior = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> curve;
  bool diverged = false;
  long last_good_iteration = -1;
};

// Graph-convolutional VAE over a fixed reference topology. The encoder maps
// a shape to a diagonal Gaussian posterior in latent space; the decoder maps
// latent vectors back to vertex embeddings of the reference topology.
class VaeModel {
 public:
  VaeModel(const Mesh& reference, const VaeConfig& config);

  const VaeConfig& config() const { return config_; }
  const Mesh& reference() const { return reference_; }
  const NeighborhoodGraph& graph() const { return graph_; }
  std::uint64_t reference_topology_hash() const { return topo_hash_; }
  int latent_dim() const { return config_.latent_dim; }

  // Throws DataError when the mesh topology differs from the reference.
  void check_topology(const Mesh& mesh) const;

  EncoderOutput encode(const Mesh& mesh);
  Mesh decode(const Eigen::VectorXd& z);

  // Deterministic per-shape loss, decoding from the posterior mean.
  LossValues loss(const Mesh& mesh);
  LossValues loss(const Mesh& mesh, double prior_weight);

  // Tape-building blocks shared by training and completion.
  std::pair<Tape::Id, Tape::Id> encode_nodes(Tape& t, Tape::Id features);
  Tape::Id decode_nodes(Tape& t, Tape::Id z);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  void save(const std::string& path) const;
  static VaeModel load(const std::string& path);

 private:
  VaeConfig config_;
  Mesh reference_;
  NeighborhoodGraph graph_;
  ConvContext ctx_;
  std::uint64_t topo_hash_ = 0;
  Activation act_ = Activation::Elu;

  std::vector<FeastConv> enc_convs_;
  Dense enc_mu_;
  Dense enc_logvar_;
  Dense dec_expand_;
  std::vector<FeastConv> dec_convs_;
};

// Row-per-vertex feature matrix (N x 3) for a mesh and back.
Tensor features_from_vertices(const Eigen::Matrix3Xd& vertices);
Eigen::Matrix3Xd vertices_from_features(const Tensor& features);

// Closed-form KL divergence of N(mu, diag(exp(log_var))) from N(0, I).
double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var);

// Training with reparameterized sampling, Adam, and on-the-fly augmentation.
// All dataset meshes must share the reference topology (the first entry
// seeds it). On divergence the model rolls back to the last snapshot.
VaeModel train_vae(const std::vector<Mesh>& dataset, const VaeConfig& config,
                   TrainLog* log = nullptr);

// Latent-space utilities.
Mesh interpolate(const Eigen::VectorXd& z_a, const Eigen::VectorXd& z_b, double alpha,
                 VaeModel& model);
Mesh latent_arithmetic(const Eigen::VectorXd& z_base, const Eigen::VectorXd& z_plus,
                       const Eigen::VectorXd& z_minus, double alpha, VaeModel& model);
Eigen::VectorXd sample_latent(int dim, Rng& rng);

// Augmentation applied during training; exposed for tests.
Eigen::Matrix3Xd augment_vertices(const Eigen::Matrix3Xd& vertices, const VaeConfig& config,
                                  double radius, Rng& rng);

void write_loss_curve_csv(const std::string& path, const std::vector<TrainRecord>& curve);

}  // namespace shapecomp
