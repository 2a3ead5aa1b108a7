#include "shapecomp/vae.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "shapecomp/checkpoint.hpp"
#include "shapecomp/errors.hpp"

namespace shapecomp {

VaeConfig VaeConfig::desk_preset() {
  VaeConfig cfg;
  cfg.filters = 4;
  cfg.latent_dim = 8;
  cfg.encoder_widths = {8, 16, 32};
  cfg.decoder_seed_width = 8;
  cfg.decoder_widths = {16, 8, 3};
  cfg.ring = 2;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 2;
  cfg.iterations = 4000;
  return cfg;
}

VaeConfig VaeConfig::face_preset() {
  VaeConfig cfg;
  cfg.filters = 8;
  cfg.latent_dim = 32;
  cfg.encoder_widths = {16, 32};
  cfg.decoder_seed_width = 16;
  cfg.decoder_widths = {16, 3};
  return cfg;
}

nlohmann::json VaeConfig::to_json() const {
  return nlohmann::json{{"filters", filters},
                        {"latent_dim", latent_dim},
                        {"prior_weight", prior_weight},
                        {"encoder_widths", encoder_widths},
                        {"decoder_seed_width", decoder_seed_width},
                        {"decoder_widths", decoder_widths},
                        {"ring", ring},
                        {"include_self", include_self},
                        {"activation", activation},
                        {"recon_loss", recon_loss},
                        {"learning_rate", learning_rate},
                        {"batch_size", batch_size},
                        {"iterations", iterations},
                        {"snapshot_every", snapshot_every},
                        {"aug_noise", aug_noise},
                        {"aug_translation", aug_translation},
                        {"aug_scale_min", aug_scale_min},
                        {"aug_scale_max", aug_scale_max},
                        {"seed", seed}};
}

VaeConfig VaeConfig::from_json(const nlohmann::json& j) {
  VaeConfig cfg;
  cfg.filters = j.value("filters", cfg.filters);
  cfg.latent_dim = j.value("latent_dim", cfg.latent_dim);
  cfg.prior_weight = j.value("prior_weight", cfg.prior_weight);
  cfg.encoder_widths = j.value("encoder_widths", cfg.encoder_widths);
  cfg.decoder_seed_width = j.value("decoder_seed_width", cfg.decoder_seed_width);
  cfg.decoder_widths = j.value("decoder_widths", cfg.decoder_widths);
  cfg.ring = j.value("ring", cfg.ring);
  cfg.include_self = j.value("include_self", cfg.include_self);
  cfg.activation = j.value("activation", cfg.activation);
  cfg.recon_loss = j.value("recon_loss", cfg.recon_loss);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.snapshot_every = j.value("snapshot_every", cfg.snapshot_every);
  cfg.aug_noise = j.value("aug_noise", cfg.aug_noise);
  cfg.aug_translation = j.value("aug_translation", cfg.aug_translation);
  cfg.aug_scale_min = j.value("aug_scale_min", cfg.aug_scale_min);
  cfg.aug_scale_max = j.value("aug_scale_max", cfg.aug_scale_max);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

namespace {

void validate_config(const VaeConfig& cfg, int vertex_count) {
  if (cfg.filters < 1) throw DataError("vae config: filters must be >= 1");
  if (cfg.latent_dim < 1) throw DataError("vae config: latent_dim must be >= 1");
  if (!(cfg.prior_weight >= 0.0)) throw DataError("vae config: prior weight must be >= 0");
  if (cfg.encoder_widths.empty() || cfg.decoder_widths.empty()) {
    throw DataError("vae config: encoder/decoder widths must be non-empty");
  }
  if (cfg.decoder_widths.back() != 3) {
    throw DataError("vae config: final decoder width must be 3");
  }
  for (int w : cfg.encoder_widths) {
    if (w < 1) throw DataError("vae config: encoder width must be positive");
  }
  for (int w : cfg.decoder_widths) {
    if (w < 1) throw DataError("vae config: decoder width must be positive");
  }
  if (cfg.decoder_seed_width < 1) throw DataError("vae config: decoder_seed_width must be positive");
  if (vertex_count < 1) throw DataError("vae model: reference mesh is empty");
  if (cfg.recon_loss != "frobenius" && cfg.recon_loss != "per_vertex_rms") {
    throw DataError("vae config: unknown recon_loss '" + cfg.recon_loss + "'");
  }
}

}  // namespace

VaeModel::VaeModel(const Mesh& reference, const VaeConfig& config)
    : config_(config), reference_(reference) {
  reference_.validate();
  validate_config(config_, reference_.vertex_count());
  act_ = activation_from_string(config_.activation);
  graph_ = build_neighborhoods(reference_, config_.ring);
  ctx_ = make_conv_context(graph_, config_.include_self);
  topo_hash_ = topology_hash(reference_);

  Rng rng(config_.seed);
  Rng init_rng = rng.fork(0xA11);

  int in = 3;
  for (std::size_t l = 0; l < config_.encoder_widths.size(); ++l) {
    const int out = config_.encoder_widths[l];
    enc_convs_.emplace_back("enc.conv" + std::to_string(l), in, out, config_.filters, init_rng,
                            config_.include_self);
    in = out;
  }
  enc_mu_ = Dense("enc.mu", in, config_.latent_dim, init_rng);
  enc_logvar_ = Dense("enc.logvar", in, config_.latent_dim, init_rng);

  const int n = reference_.vertex_count();
  dec_expand_ = Dense("dec.expand", config_.latent_dim, n * config_.decoder_seed_width, init_rng);
  in = config_.decoder_seed_width;
  for (std::size_t l = 0; l < config_.decoder_widths.size(); ++l) {
    const int out = config_.decoder_widths[l];
    dec_convs_.emplace_back("dec.conv" + std::to_string(l), in, out, config_.filters, init_rng,
                            config_.include_self);
    in = out;
  }
}

void VaeModel::check_topology(const Mesh& mesh) const {
  if (mesh.vertex_count() != reference_.vertex_count() || topology_hash(mesh) != topo_hash_) {
    throw DataError("vae: mesh topology does not match the trained reference");
  }
}

std::pair<Tape::Id, Tape::Id> VaeModel::encode_nodes(Tape& t, Tape::Id features) {
  Tape::Id x = features;
  for (std::size_t l = 0; l < enc_convs_.size(); ++l) {
    if (l > 0) x = apply_activation(t, x, act_);
    x = enc_convs_[l].forward(t, x, ctx_);
  }
  const auto pooled = t.mean_rows(x);
  return {enc_mu_.forward(t, pooled), enc_logvar_.forward(t, pooled)};
}

Tape::Id VaeModel::decode_nodes(Tape& t, Tape::Id z) {
  const int n = reference_.vertex_count();
  Tape::Id x = dec_expand_.forward(t, z);
  x = t.reshape(x, static_cast<std::size_t>(n),
                static_cast<std::size_t>(config_.decoder_seed_width));
  for (std::size_t l = 0; l < dec_convs_.size(); ++l) {
    x = apply_activation(t, x, act_);
    x = dec_convs_[l].forward(t, x, ctx_);
  }
  return x;
}

EncoderOutput VaeModel::encode(const Mesh& mesh) {
  check_topology(mesh);
  Tape t;
  const auto features = t.constant(features_from_vertices(mesh.vertices));
  const auto [mu_id, lv_id] = encode_nodes(t, features);
  const Tensor& mu = t.value(mu_id);
  const Tensor& lv = t.value(lv_id);
  EncoderOutput out;
  out.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
  out.log_var = Eigen::Map<const Eigen::VectorXd>(lv.data(), static_cast<Eigen::Index>(lv.size()));
  return out;
}

Mesh VaeModel::decode(const Eigen::VectorXd& z) {
  if (z.size() != config_.latent_dim) {
    throw DataError("decode: latent dimension mismatch, expected " +
                    std::to_string(config_.latent_dim) + ", got " + std::to_string(z.size()));
  }
  Tape t;
  Tensor zt(1, static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) zt[static_cast<std::size_t>(i)] = z[i];
  const auto out = decode_nodes(t, t.constant(std::move(zt)));
  Mesh mesh;
  mesh.vertices = vertices_from_features(t.value(out));
  mesh.faces = reference_.faces;
  return mesh;
}

namespace {

Tape::Id recon_loss_node(Tape& t, Tape::Id decoded, Tape::Id target, const VaeConfig& cfg,
                         int vertex_count) {
  Tape::Id norm = t.l2_norm(t.sub(decoded, target));
  if (cfg.recon_loss == "per_vertex_rms") {
    norm = t.scale(norm, 1.0 / std::sqrt(static_cast<double>(vertex_count)));
  }
  return norm;
}

Tape::Id kl_node(Tape& t, Tape::Id mu, Tape::Id log_var, int dim) {
  const auto sq = t.sum(t.mul(mu, mu));
  const auto var = t.sum(t.exp(log_var));
  const auto lv = t.sum(log_var);
  const auto combined = t.add(sq, t.add(var, t.scale(lv, -1.0)));
  return t.add_scalar(t.scale(combined, 0.5), -0.5 * static_cast<double>(dim));
}

}  // namespace

LossValues VaeModel::loss(const Mesh& mesh) { return loss(mesh, config_.prior_weight); }

LossValues VaeModel::loss(const Mesh& mesh, double prior_weight) {
  check_topology(mesh);
  Tape t;
  const auto features = t.constant(features_from_vertices(mesh.vertices));
  const auto [mu_id, lv_id] = encode_nodes(t, features);
  const auto decoded = decode_nodes(t, mu_id);
  const auto recon = recon_loss_node(t, decoded, features, config_, mesh.vertex_count());
  const auto prior = kl_node(t, mu_id, lv_id, config_.latent_dim);
  LossValues values;
  values.recon = t.value(recon).scalar_value();
  values.prior = t.value(prior).scalar_value();
  values.total = values.recon + prior_weight * values.prior;
  return values;
}

std::vector<Parameter*> VaeModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& c : enc_convs_) {
    for (auto* p : c.parameters()) out.push_back(p);
  }
  for (auto* p : enc_mu_.parameters()) out.push_back(p);
  for (auto* p : enc_logvar_.parameters()) out.push_back(p);
  for (auto* p : dec_expand_.parameters()) out.push_back(p);
  for (auto& c : dec_convs_) {
    for (auto* p : c.parameters()) out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> VaeModel::parameters() const {
  std::vector<const Parameter*> out;
  auto& self = const_cast<VaeModel&>(*this);
  for (auto* p : self.parameters()) out.push_back(p);
  return out;
}

void VaeModel::save(const std::string& path) const {
  nlohmann::json meta;
  meta["config"] = config_.to_json();
  meta["topology_hash"] = topo_hash_;
  nlohmann::json ref;
  ref["vertices"] = std::vector<double>(reference_.vertices.data(),
                                        reference_.vertices.data() + reference_.vertices.size());
  nlohmann::json faces = nlohmann::json::array();
  for (const auto& f : reference_.faces) faces.push_back({f[0], f[1], f[2]});
  ref["faces"] = std::move(faces);
  meta["reference"] = std::move(ref);
  save_checkpoint(path, parameters(), meta);
}

VaeModel VaeModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model parse error in '" + path + "': " + e.what());
  }
  const auto& meta = j.at("meta");
  const VaeConfig cfg = VaeConfig::from_json(meta.at("config"));

  Mesh reference;
  const auto verts = meta.at("reference").at("vertices").get<std::vector<double>>();
  if (verts.size() % 3 != 0) throw DataError("model: malformed reference vertices");
  reference.vertices =
      Eigen::Map<const Eigen::Matrix3Xd>(verts.data(), 3, static_cast<Eigen::Index>(verts.size() / 3));
  for (const auto& f : meta.at("reference").at("faces")) {
    reference.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
  }

  VaeModel model(reference, cfg);
  checkpoint_from_json(j, model.parameters());
  if (meta.contains("topology_hash") &&
      meta["topology_hash"].get<std::uint64_t>() != model.topo_hash_) {
    throw DataError("model: topology hash mismatch");
  }
  return model;
}

Tensor features_from_vertices(const Eigen::Matrix3Xd& vertices) {
  Tensor f(static_cast<std::size_t>(vertices.cols()), 3);
  for (Eigen::Index i = 0; i < vertices.cols(); ++i) {
    for (int k = 0; k < 3; ++k) f(static_cast<std::size_t>(i), static_cast<std::size_t>(k)) = vertices(k, i);
  }
  return f;
}

Eigen::Matrix3Xd vertices_from_features(const Tensor& features) {
  if (features.cols() != 3) throw DataError("features must be N x 3");
  Eigen::Matrix3Xd v(3, static_cast<Eigen::Index>(features.rows()));
  for (std::size_t i = 0; i < features.rows(); ++i) {
    for (std::size_t k = 0; k < 3; ++k) v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = features(i, k);
  }
  return v;
}

double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) {
  double acc = 0.0;
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    acc += mu[k] * mu[k] + std::exp(log_var[k]) - log_var[k] - 1.0;
  }
  return 0.5 * acc;
}

Eigen::Matrix3Xd augment_vertices(const Eigen::Matrix3Xd& vertices, const VaeConfig& cfg,
                                  double radius, Rng& rng) {
  Eigen::Matrix3Xd out = vertices;
  const Eigen::Vector3d centroid = out.rowwise().mean();

  const double s = rng.uniform(cfg.aug_scale_min, cfg.aug_scale_max);
  out = ((out.colwise() - centroid) * s).colwise() + centroid;

  Eigen::Vector3d shift(rng.uniform(-1.0, 1.0) * cfg.aug_translation * radius,
                        rng.uniform(-1.0, 1.0) * cfg.aug_translation * radius, 0.0);
  out.colwise() += shift;

  const double sigma = cfg.aug_noise * radius;
  if (sigma > 0.0) {
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
      for (int k = 0; k < 3; ++k) out(k, i) += rng.normal(0.0, sigma);
    }
  }
  return out;
}

VaeModel train_vae(const std::vector<Mesh>& dataset, const VaeConfig& config, TrainLog* log) {
  if (dataset.empty()) throw DataError("train: empty dataset");
  VaeModel model(dataset[0], config);
  for (const auto& mesh : dataset) model.check_topology(mesh);

  std::vector<double> radii;
  radii.reserve(dataset.size());
  for (const auto& mesh : dataset) radii.push_back(shape_radius(mesh));

  Rng rng(config.seed);
  Rng batch_rng = rng.fork(0xBA7);
  Rng aug_rng = rng.fork(0xA06);
  Rng eps_rng = rng.fork(0xE95);

  Adam opt(config.learning_rate);
  auto params = model.parameters();

  TrainLog local_log;
  TrainLog& out_log = log ? *log : local_log;
  out_log.curve.clear();
  out_log.curve.reserve(static_cast<std::size_t>(config.iterations));

  // Divergence fallback: parameter values as of the last finite snapshot.
  std::vector<Tensor> snapshot;
  auto take_snapshot = [&]() {
    snapshot.clear();
    for (const Parameter* p : params) snapshot.push_back(p->value);
  };
  auto restore_snapshot = [&]() {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
  };
  take_snapshot();
  out_log.last_good_iteration = -1;

  const int n = model.reference().vertex_count();
  const double inv_batch = 1.0 / static_cast<double>(config.batch_size);

  for (long iter = 0; iter < config.iterations; ++iter) {
    try {
      Tape t;
      Tape::Id total = -1, recon_acc = -1, prior_acc = -1;
      for (int b = 0; b < config.batch_size; ++b) {
        const int pick = batch_rng.uniform_int(0, static_cast<int>(dataset.size()) - 1);
        const Eigen::Matrix3Xd augmented =
            augment_vertices(dataset[static_cast<std::size_t>(pick)].vertices, config,
                             radii[static_cast<std::size_t>(pick)], aug_rng);
        const auto features = t.constant(features_from_vertices(augmented));
        const auto [mu_id, lv_id] = model.encode_nodes(t, features);

        // Reparameterized sample z = mu + exp(log_var / 2) * eps.
        Tensor eps(1, static_cast<std::size_t>(config.latent_dim));
        for (std::size_t k = 0; k < eps.size(); ++k) eps[k] = eps_rng.normal();
        const auto sigma = t.exp(t.scale(lv_id, 0.5));
        const auto z = t.add(mu_id, t.mul(sigma, t.constant(std::move(eps))));

        const auto decoded = model.decode_nodes(t, z);
        const auto recon = recon_loss_node(t, decoded, features, config, n);
        const auto prior = kl_node(t, mu_id, lv_id, config.latent_dim);
        const auto sample_loss = t.add(recon, t.scale(prior, config.prior_weight));

        total = (b == 0) ? sample_loss : t.add(total, sample_loss);
        recon_acc = (b == 0) ? recon : t.add(recon_acc, recon);
        prior_acc = (b == 0) ? prior : t.add(prior_acc, prior);
      }
      total = t.scale(total, inv_batch);

      TrainRecord record;
      record.iteration = iter;
      record.total = t.value(total).scalar_value();
      record.recon = t.value(recon_acc).scalar_value() * inv_batch;
      record.prior = t.value(prior_acc).scalar_value() * inv_batch;

      t.backward(total);
      opt.step(params);
      out_log.curve.push_back(record);

      if (config.snapshot_every > 0 && (iter + 1) % config.snapshot_every == 0) {
        take_snapshot();
        out_log.last_good_iteration = iter;
      }
    } catch (const NumericError&) {
      restore_snapshot();
      out_log.diverged = true;
      std::cerr << "train: non-finite loss at iteration " << iter
                << ", rolled back to iteration " << out_log.last_good_iteration << "\n";
      break;
    }
  }
  return model;
}

Mesh interpolate(const Eigen::VectorXd& z_a, const Eigen::VectorXd& z_b, double alpha,
                 VaeModel& model) {
  if (z_a.size() != z_b.size()) throw DataError("interpolate: latent dimension mismatch");
  return model.decode((1.0 - alpha) * z_a + alpha * z_b);
}

Mesh latent_arithmetic(const Eigen::VectorXd& z_base, const Eigen::VectorXd& z_plus,
                       const Eigen::VectorXd& z_minus, double alpha, VaeModel& model) {
  if (z_base.size() != z_plus.size() || z_base.size() != z_minus.size()) {
    throw DataError("latent_arithmetic: latent dimension mismatch");
  }
  return model.decode(z_base + alpha * (z_plus - z_minus));
}

Eigen::VectorXd sample_latent(int dim, Rng& rng) {
  Eigen::VectorXd z(dim);
  for (int k = 0; k < dim; ++k) z[k] = rng.normal();
  return z;
}

void write_loss_curve_csv(const std::string& path, const std::vector<TrainRecord>& curve) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << std::setprecision(17);
  out << "iteration,total,recon,prior\n";
  for (const auto& r : curve) {
    out << r.iteration << ',' << r.total << ',' << r.recon << ',' << r.prior << '\n';
  }
}

}  // namespace shapecomp
