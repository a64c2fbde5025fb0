#include "mvpose/regressor.hpp"

#include <cmath>
#include <string>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

Eigen::MatrixXd standardize(const RegressorParams& p, const Eigen::MatrixXd& x) {
  return (x.colwise() - p.input_mean).array().colwise() * p.input_scale.array();
}

void check_input(const RegressorParams& p, Eigen::Index rows) {
  if (rows != p.input_dim()) {
    throw ShapeError("regressor: feature length " + std::to_string(rows) + " does not match input dimension " +
                     std::to_string(p.input_dim()));
  }
}

}  // namespace

std::vector<int> RegressorParams::layer_dims() const {
  std::vector<int> dims;
  if (layers.empty()) return dims;
  dims.push_back(static_cast<int>(layers.front().weights.cols()));
  for (const auto& l : layers) dims.push_back(static_cast<int>(l.weights.rows()));
  return dims;
}

int RegressorParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<int>(layers.front().weights.cols());
}

int RegressorParams::n_joints() const {
  return layers.empty() ? 0 : static_cast<int>(layers.back().weights.rows() / 3);
}

Eigen::Index RegressorParams::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

RegressorParams init_params(std::span<const int> dims, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("init_params: need at least input and output dimensions");
  for (int d : dims) {
    if (d < 1) throw ConfigError("init_params: dimensions must be positive");
  }
  if (dims.back() % 3 != 0) throw ConfigError("init_params: output dimension must be 3 * N_J");
  RegressorParams p;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    DenseLayer layer;
    layer.weights.resize(dims[l], dims[l - 1]);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dims[l - 1])));
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = normal(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(dims[l]);
    p.layers.push_back(std::move(layer));
  }
  p.input_mean = Eigen::VectorXd::Zero(dims.front());
  p.input_scale = Eigen::VectorXd::Ones(dims.front());
  return p;
}

ForwardCache forward_batch(const RegressorParams& params, const Eigen::MatrixXd& features) {
  check_input(params, features.rows());
  ForwardCache cache;
  cache.activations.reserve(params.layers.size());
  cache.activations.push_back(standardize(params, features));
  for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Eigen::MatrixXd z = layer.weights * cache.activations.back();
    z.colwise() += layer.bias;
    cache.activations.push_back(z.array().tanh().matrix());
  }
  const auto& last = params.layers.back();
  Eigen::MatrixXd out = last.weights * cache.activations.back();
  out.colwise() += last.bias;
  out *= params.output_scale_mm;

  const int n_joints = params.n_joints();
  cache.outputs.reserve(features.cols());
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    const Joints raw = Eigen::Map<const Joints>(out.col(i).data(), 3, n_joints);
    if (!raw.allFinite()) throw DegenerateError("regressor: non-finite output");
    cache.outputs.push_back(center_at_pelvis(raw));
  }
  return cache;
}

Pose forward(const RegressorParams& params, const Eigen::VectorXd& features) {
  return std::move(forward_batch(params, features).outputs.front());
}

RegressorGradients zero_gradients(const RegressorParams& params) {
  RegressorGradients g;
  g.reserve(params.layers.size());
  for (const auto& l : params.layers) {
    g.push_back({Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

RegressorGradients backward_batch(const RegressorParams& params, const ForwardCache& cache,
                                  std::span<const Joints> output_gradients) {
  const Eigen::Index batch = cache.activations.front().cols();
  if (static_cast<Eigen::Index>(output_gradients.size()) != batch) {
    throw ShapeError("regressor backward: one output gradient per sample required");
  }
  const int n_joints = params.n_joints();
  Eigen::MatrixXd delta(3 * n_joints, batch);
  for (Eigen::Index i = 0; i < batch; ++i) {
    const Joints& g = output_gradients[i];
    if (g.cols() != n_joints) throw ShapeError("regressor backward: output gradient has wrong joint count");
    Eigen::Map<Joints> d(delta.col(i).data(), 3, n_joints);
    d = g;
    // Re-centering subtracts the raw pelvis output from every joint.
    d.col(0) = -(g.rightCols(n_joints - 1).rowwise().sum());
  }
  delta *= params.output_scale_mm;

  RegressorGradients grads(params.layers.size());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = cache.activations[l];
    grads[l].weights = delta * input.transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = params.layers[l].weights.transpose() * delta;
    delta = back.array() * (1.0 - input.array().square());
  }
  return grads;
}

RegressorGradients backward(const RegressorParams& params, const Eigen::VectorXd& features,
                            const Joints& output_gradient) {
  const ForwardCache cache = forward_batch(params, features);
  return backward_batch(params, cache, std::span<const Joints>(&output_gradient, 1));
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json checkpoint_to_json(const RegressorParams& params, const CheckpointInfo& info) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["layer_dims"] = params.layer_dims();
  j["activation"] = "tanh";
  auto layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    std::vector<double> w;
    w.reserve(l.weights.size());
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    layers.push_back({{"weights", std::move(w)},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  j["layers"] = std::move(layers);
  j["input_mean"] = std::vector<double>(params.input_mean.data(), params.input_mean.data() + params.input_mean.size());
  j["input_scale"] =
      std::vector<double>(params.input_scale.data(), params.input_scale.data() + params.input_scale.size());
  j["output_scale_mm"] = params.output_scale_mm;
  j["seed"] = info.seed;
  j["iteration"] = info.iteration;
  j["joint_names"] = info.joint_names;
  return j;
}

RegressorParams checkpoint_from_json(const nlohmann::json& j, CheckpointInfo* info) {
  try {
    if (j.value("format_version", 0) != kCheckpointFormatVersion) {
      throw ConfigError("checkpoint: unsupported or missing format_version");
    }
    if (j.value("activation", std::string("tanh")) != "tanh") {
      throw ConfigError("checkpoint: only tanh activations are supported");
    }
    const auto dims = j.at("layer_dims").get<std::vector<int>>();
    const auto& layers = j.at("layers");
    if (dims.size() < 2 || layers.size() != dims.size() - 1) {
      throw ConfigError("checkpoint: layer_dims and layers disagree");
    }
    RegressorParams p;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("bias").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(dims[l]) * dims[l + 1] || b.size() != static_cast<std::size_t>(dims[l + 1])) {
        throw ConfigError("checkpoint: parameter array size mismatch in layer " + std::to_string(l));
      }
      DenseLayer layer;
      layer.weights = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          w.data(), dims[l + 1], dims[l]);
      layer.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), dims[l + 1]);
      p.layers.push_back(std::move(layer));
    }
    const auto mean = j.at("input_mean").get<std::vector<double>>();
    const auto scale = j.at("input_scale").get<std::vector<double>>();
    if (mean.size() != static_cast<std::size_t>(dims.front()) || scale.size() != mean.size()) {
      throw ConfigError("checkpoint: input normalization size mismatch");
    }
    p.input_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), dims.front());
    p.input_scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), dims.front());
    p.output_scale_mm = j.at("output_scale_mm").get<double>();
    if (info) {
      info->seed = j.value("seed", std::uint64_t{0});
      info->iteration = j.value("iteration", 0L);
      info->joint_names = j.value("joint_names", std::vector<std::string>{});
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
}

void save_checkpoint(const RegressorParams& params, const CheckpointInfo& info,
                     const std::filesystem::path& path) {
  write_text_file(path, checkpoint_to_json(params, info).dump());
}

RegressorParams load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info) {
  return checkpoint_from_json(read_json_file(path), info);
}

}  // namespace mvpose
