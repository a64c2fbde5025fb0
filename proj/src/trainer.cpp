#include "mvpose/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mvpose/error.hpp"

namespace mvpose {

namespace {

constexpr std::uint64_t kWeakPhaseSeedOffset = 0x9e3779b97f4a7c15ULL;

void validate(const TrainConfig& c) {
  if (c.batch_labeled < 1 || c.batch_unlabeled_groups < 1 || c.views_per_group < 2) {
    throw ConfigError("train config: batch counts must be positive (at least 2 views per group)");
  }
  if (c.consensus_size < 2 || c.consensus_size > c.views_per_group) {
    throw ConfigError("train config: consensus_size must be in [2, views_per_group]");
  }
  if (!(c.learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (c.iterations < 0 || c.pretrain_iterations < 0 || c.eval_every < 1) {
    throw ConfigError("train config: iteration counts must be non-negative and eval_every positive");
  }
  if (c.weights.supervised < 0.0 || c.weights.multiview < 0.0 || c.weights.regularizer < 0.0) {
    throw ConfigError("train config: loss weights must be non-negative");
  }
}

Eigen::MatrixXd stack_features(const std::vector<const Eigen::VectorXd*>& cols) {
  Eigen::MatrixXd m(cols.front()->size(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = *cols[i];
  return m;
}

std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates.
  for (int i = 0; i < k; ++i) {
    const int j = std::uniform_int_distribution<int>(i, n - 1)(rng);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

struct PhaseAccumulator {
  double m = 0.0, s = 0.0, r = 0.0, total = 0.0;
  long steps = 0;

  void add(const LossBreakdown& b) {
    m += b.m_value;
    s += b.s_value;
    r += b.r_value;
    total += b.total;
    ++steps;
  }
  TrainLogEntry flush(long iteration, double val) {
    TrainLogEntry e;
    e.iteration = iteration;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inv = steps > 0 ? 1.0 / static_cast<double>(steps) : nan;
    e.m = m * inv;
    e.s = s * inv;
    e.r = r * inv;
    e.total = total * inv;
    e.val_nmpjpe = val;
    *this = {};
    return e;
  }
};

void add_scaled(std::vector<Joints>& dst, const std::vector<Joints>& src, double w, std::size_t offset = 0) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[offset + i] += w * src[i];
}

// Feature standardization and output scale fitted on the labeled set.
void fit_normalization(RegressorParams& p, const Dataset& d) {
  const Eigen::Index dim = d.labeled.front().features.size();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  for (const auto& s : d.labeled) mean += s.features;
  mean /= static_cast<double>(d.labeled.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
  double label_sq = 0.0;
  for (const auto& s : d.labeled) {
    var += (s.features - mean).array().square().matrix();
    label_sq += s.pose.joints().squaredNorm();
  }
  var /= static_cast<double>(d.labeled.size());
  p.input_mean = mean;
  p.input_scale = var.unaryExpr([](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; });
  const double rms = std::sqrt(label_sq / (3.0 * static_cast<double>(d.labeled.size()) *
                                           static_cast<double>(d.labeled.front().pose.n_joints())));
  p.output_scale_mm = rms > 0.0 ? rms : 1.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config JSON

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"batch_labeled", c.batch_labeled},
          {"batch_unlabeled_groups", c.batch_unlabeled_groups},
          {"views_per_group", c.views_per_group},
          {"consensus_size", c.consensus_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"iterations", c.iterations},
          {"pretrain_iterations", c.pretrain_iterations},
          {"eval_every", c.eval_every},
          {"distance", c.distance == Distance::se ? "se" : "nse"},
          {"rotations", c.rotations == RotationSource::known ? "known" : "estimated"},
          {"w_supervised", c.weights.supervised},
          {"w_multiview", c.weights.multiview},
          {"w_regularizer", c.weights.regularizer},
          {"augment", c.augment},
          {"reference_gradient", c.reference_gradient},
          {"rotation_norm", c.rotation_norm == NormMode::full_pose ? "full_pose" : "torso_only"},
          {"hidden_dims", c.hidden_dims},
          {"rng_seed", c.rng_seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  const nlohmann::json defaults = train_config_to_json(c);
  try {
    for (const auto& [key, value] : j.items()) {
      if (!defaults.contains(key)) throw ConfigError("train config: unknown field '" + key + "'");
    }
    c.batch_labeled = j.value("batch_labeled", c.batch_labeled);
    c.batch_unlabeled_groups = j.value("batch_unlabeled_groups", c.batch_unlabeled_groups);
    c.views_per_group = j.value("views_per_group", c.views_per_group);
    c.consensus_size = j.value("consensus_size", c.consensus_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.iterations = j.value("iterations", c.iterations);
    c.pretrain_iterations = j.value("pretrain_iterations", c.pretrain_iterations);
    c.eval_every = j.value("eval_every", c.eval_every);
    const std::string dist = j.value("distance", std::string("nse"));
    if (dist != "se" && dist != "nse") throw ConfigError("train config: distance must be 'se' or 'nse'");
    c.distance = dist == "se" ? Distance::se : Distance::nse;
    const std::string rot = j.value("rotations", std::string("known"));
    if (rot != "known" && rot != "estimated") {
      throw ConfigError("train config: rotations must be 'known' or 'estimated'");
    }
    c.rotations = rot == "known" ? RotationSource::known : RotationSource::estimated;
    c.weights.supervised = j.value("w_supervised", c.weights.supervised);
    c.weights.multiview = j.value("w_multiview", c.weights.multiview);
    c.weights.regularizer = j.value("w_regularizer", c.weights.regularizer);
    c.augment = j.value("augment", c.augment);
    c.reference_gradient = j.value("reference_gradient", c.reference_gradient);
    const std::string norm = j.value("rotation_norm", std::string("full_pose"));
    if (norm != "full_pose" && norm != "torso_only") {
      throw ConfigError("train config: rotation_norm must be 'full_pose' or 'torso_only'");
    }
    c.rotation_norm = norm == "full_pose" ? NormMode::full_pose : NormMode::torso_only;
    c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  validate(c);
  return c;
}

// ---------------------------------------------------------------------------
// Adam

AdamState make_adam_state(const RegressorParams& params) {
  AdamState s;
  s.first_moment = zero_gradients(params);
  s.second_moment = zero_gradients(params);
  return s;
}

void adam_update(RegressorParams& params, const RegressorGradients& grads, AdamState& state,
                 const TrainConfig& config) {
  if (grads.size() != params.layers.size() || state.first_moment.size() != params.layers.size()) {
    throw ShapeError("adam_update: gradient layout does not match parameters");
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double lr = config.learning_rate;
  const double eps = config.adam_eps;
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    update(params.layers[l].weights, grads[l].weights, state.first_moment[l].weights,
           state.second_moment[l].weights);
    update(params.layers[l].bias, grads[l].bias, state.first_moment[l].bias, state.second_moment[l].bias);
  }
}

// ---------------------------------------------------------------------------
// Batches and steps

TrainBatch sample_batch(const Dataset& dataset, const TrainConfig& config, Rng& rng, bool with_unlabeled) {
  const int n_labeled = static_cast<int>(dataset.labeled.size());
  if (n_labeled < config.batch_labeled) {
    throw ConfigError("dataset too small: " + std::to_string(n_labeled) + " labeled samples for a batch of " +
                      std::to_string(config.batch_labeled));
  }
  TrainBatch batch;
  const auto picks = sample_without_replacement(n_labeled, config.batch_labeled, rng);
  batch.labeled_features.resize(dataset.labeled.front().features.size(), config.batch_labeled);
  const AugmentParams aug;
  const auto& k = dataset.config.intrinsics;
  for (int i = 0; i < config.batch_labeled; ++i) {
    const LabeledSample& s = dataset.labeled[picks[i]];
    if (config.augment) {
      Augmented a = augment(s.features, s.pose, rng, aug, k.cx, k.cy);
      batch.labeled_features.col(i) = a.features;
      batch.labels.push_back(std::move(a.label));
    } else {
      batch.labeled_features.col(i) = s.features;
      batch.labels.push_back(s.pose);
    }
  }
  if (!with_unlabeled) return batch;

  const int n_unlabeled = static_cast<int>(dataset.unlabeled.size());
  if (n_unlabeled < config.batch_unlabeled_groups) {
    throw ConfigError("dataset too small: " + std::to_string(n_unlabeled) + " multi-view samples for " +
                      std::to_string(config.batch_unlabeled_groups) + " groups");
  }
  const auto groups = sample_without_replacement(n_unlabeled, config.batch_unlabeled_groups, rng);
  for (int g : groups) {
    const MultiViewSample& mv = dataset.unlabeled[g];
    const int n_views = static_cast<int>(mv.views.size());
    if (n_views < config.views_per_group) {
      throw ConfigError("dataset too small: sample with " + std::to_string(n_views) + " views for groups of " +
                        std::to_string(config.views_per_group));
    }
    std::vector<int> views;
    if (n_views > config.views_per_group) {
      views = sample_without_replacement(n_views, config.views_per_group, rng);
      std::sort(views.begin(), views.end());
    } else {
      views.resize(n_views);
      std::iota(views.begin(), views.end(), 0);
    }
    ViewGroup group;
    const auto& first = mv.views[views.front()];
    const Rotation3 first_inv = first.rotation ? first.rotation->inverse() : Rotation3::identity();
    for (int v : views) {
      group.features.push_back(mv.views[v].features);
      // Re-express in the frame of the group's first view.
      group.rotations.push_back(mv.views[v].rotation ? first_inv * *mv.views[v].rotation : Rotation3::identity());
    }
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

namespace {

struct BatchPredictions {
  ForwardCache theta;
  std::vector<Pose> anchors;
  std::size_t n_labeled = 0;
};

Eigen::MatrixXd batch_features(const TrainBatch& batch) {
  std::vector<const Eigen::VectorXd*> cols;
  std::vector<Eigen::VectorXd> labeled(batch.labeled_features.cols());
  for (Eigen::Index i = 0; i < batch.labeled_features.cols(); ++i) {
    labeled[i] = batch.labeled_features.col(i);
    cols.push_back(&labeled[i]);
  }
  for (const auto& g : batch.groups) {
    for (const auto& f : g.features) cols.push_back(&f);
  }
  return stack_features(cols);
}

Eigen::MatrixXd unlabeled_features(const TrainBatch& batch) {
  std::vector<const Eigen::VectorXd*> cols;
  for (const auto& g : batch.groups) {
    for (const auto& f : g.features) cols.push_back(&f);
  }
  return stack_features(cols);
}

struct Objective {
  StepResult result;
  std::vector<Joints> output_gradients;
};

Objective assemble(const ForwardCache& forward, const std::vector<Pose>& anchors, const TrainBatch& batch,
                   const TrainConfig& config, const Skeleton& skeleton) {
  const std::size_t n_labeled = batch.labels.size();
  const auto& preds = forward.outputs;
  const LossWeights& w = config.weights;
  Objective obj;
  obj.output_gradients.assign(preds.size(), Joints::Zero(3, preds.front().n_joints()));
  LossBreakdown& b = obj.result.loss;

  const std::span<const Pose> labeled_preds(preds.data(), n_labeled);
  const LossTerm s = supervised_loss(labeled_preds, batch.labels, config.distance);
  b.s_value = s.value;
  if (w.supervised != 0.0) add_scaled(obj.output_gradients, s.gradients, w.supervised);

  // Multi-view consistency, one group at a time; 1/N_u over usable groups.
  std::vector<std::pair<std::size_t, MultiviewTerm>> group_terms;
  std::size_t offset = n_labeled;
  for (const auto& g : batch.groups) {
    const std::span<const Pose> views(preds.data() + offset, g.features.size());
    std::vector<Rotation3> rotations;
    if (config.rotations == RotationSource::known) {
      rotations = g.rotations;
    } else {
      rotations.push_back(Rotation3::identity());
      try {
        for (std::size_t c = 1; c < views.size(); ++c) {
          rotations.push_back(
              estimate_rotation(views[c], views[0], skeleton.torso_set(), config.rotation_norm).rotation);
        }
      } catch (const DegenerateError&) {
        ++obj.result.skipped_groups;
        obj.result.rotations.push_back({});
        offset += views.size();
        continue;
      }
    }
    group_terms.emplace_back(offset, multiview_loss(views, rotations, config.consensus_size, config.distance,
                                                    config.reference_gradient));
    obj.result.rotations.push_back(std::move(rotations));
    offset += views.size();
  }
  if (!group_terms.empty()) {
    const double inv_groups = 1.0 / static_cast<double>(group_terms.size());
    for (const auto& [start, term] : group_terms) {
      b.m_value += inv_groups * term.value;
      if (w.multiview != 0.0) add_scaled(obj.output_gradients, term.gradients, w.multiview * inv_groups, start);
    }
  }

  const std::span<const Pose> unlabeled_preds(preds.data() + n_labeled, preds.size() - n_labeled);
  const LossTerm r = regularization_loss(unlabeled_preds, anchors, config.distance);
  b.r_value = r.value;
  if (w.regularizer != 0.0) add_scaled(obj.output_gradients, r.gradients, w.regularizer, n_labeled);

  b.total = total_loss(b.m_value, b.s_value, b.r_value, w);
  b.labeled_gradients.assign(obj.output_gradients.begin(), obj.output_gradients.begin() + n_labeled);
  b.unlabeled_gradients.assign(obj.output_gradients.begin() + n_labeled, obj.output_gradients.end());
  return obj;
}

}  // namespace

StepResult evaluate_objective(const RegressorParams& theta, const RegressorParams& gamma, const TrainBatch& batch,
                              const TrainConfig& config, const Skeleton& skeleton) {
  const ForwardCache forward = forward_batch(theta, batch_features(batch));
  const std::vector<Pose> anchors = forward_batch(gamma, unlabeled_features(batch)).outputs;
  return assemble(forward, anchors, batch, config, skeleton).result;
}

StepResult train_step(RegressorParams& theta, const RegressorParams& gamma, const TrainBatch& batch,
                      AdamState& adam, const TrainConfig& config, const Skeleton& skeleton) {
  if (batch.groups.empty()) throw ConfigError("train_step: batch has no multi-view groups");
  const ForwardCache forward = forward_batch(theta, batch_features(batch));
  const std::vector<Pose> anchors = forward_batch(gamma, unlabeled_features(batch)).outputs;
  Objective obj = assemble(forward, anchors, batch, config, skeleton);
  const RegressorGradients grads = backward_batch(theta, forward, obj.output_gradients);
  adam_update(theta, grads, adam, config);
  return std::move(obj.result);
}

LossBreakdown supervised_step(RegressorParams& theta, const TrainBatch& batch, AdamState& adam,
                              const TrainConfig& config) {
  const ForwardCache forward = forward_batch(theta, batch.labeled_features);
  const LossTerm s = supervised_loss(forward.outputs, batch.labels, config.distance);
  std::vector<Joints> grads(s.gradients.size());
  for (std::size_t i = 0; i < grads.size(); ++i) grads[i] = config.weights.supervised * s.gradients[i];
  adam_update(theta, backward_batch(theta, forward, grads), adam, config);
  LossBreakdown b;
  b.s_value = s.value;
  b.total = total_loss(0.0, s.value, 0.0, config.weights);
  b.labeled_gradients = std::move(grads);
  return b;
}

// ---------------------------------------------------------------------------
// Logs

std::string TrainLog::to_csv() const {
  std::string out = "iteration,m,s,r,total,val_nmpjpe\n";
  for (const auto& e : entries) {
    out += std::to_string(e.iteration);
    for (double v : {e.m, e.s, e.r, e.total, e.val_nmpjpe}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

double TrainLog::min_val_nmpjpe() const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : entries) best = std::min(best, e.val_nmpjpe);
  return best;
}

double TrainLog::final_val_nmpjpe() const {
  return entries.empty() ? std::numeric_limits<double>::quiet_NaN() : entries.back().val_nmpjpe;
}

// ---------------------------------------------------------------------------
// Training loops

std::vector<int> regressor_dims(const Dataset& dataset, const TrainConfig& config) {
  std::vector<int> dims;
  dims.push_back(2 * dataset.skeleton.n_joints());
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(3 * dataset.skeleton.n_joints());
  return dims;
}

double validation_nmpjpe(const RegressorParams& params, const std::vector<LabeledSample>& samples) {
  if (samples.empty()) throw ConfigError("validation set is empty");
  Eigen::MatrixXd x(samples.front().features.size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = samples[i].features;
  const ForwardCache f = forward_batch(params, x);
  double sum = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) sum += nmpjpe(f.outputs[i], samples[i].pose);
  return sum / static_cast<double>(samples.size());
}

PretrainResult pretrain(const Dataset& dataset, const TrainConfig& config) {
  validate(config);
  if (dataset.labeled.empty()) throw ConfigError("pretrain: labeled set is empty");
  Rng rng(config.rng_seed);
  const auto dims = regressor_dims(dataset, config);
  PretrainResult out;
  out.theta = init_params(dims, rng);
  fit_normalization(out.theta, dataset);
  AdamState adam = make_adam_state(out.theta);

  double best = validation_nmpjpe(out.theta, dataset.validation);
  out.gamma = out.theta;
  out.best_iteration = 0;
  PhaseAccumulator acc;
  out.log.entries.push_back(acc.flush(0, best));

  for (long it = 1; it <= config.pretrain_iterations; ++it) {
    const TrainBatch batch = sample_batch(dataset, config, rng, /*with_unlabeled=*/false);
    try {
      acc.add(supervised_step(out.theta, batch, adam, config));
    } catch (const DegenerateError& e) {
      throw DegenerateError("pretrain iteration " + std::to_string(it) + ": " + e.what());
    }
    if (it % config.eval_every == 0 || it == config.pretrain_iterations) {
      const double val = validation_nmpjpe(out.theta, dataset.validation);
      out.log.entries.push_back(acc.flush(it, val));
      if (val < best) {
        best = val;
        out.gamma = out.theta;
        out.best_iteration = it;
      }
    }
  }
  out.theta = out.gamma;
  return out;
}

TrainResult weak_train(const Dataset& dataset, const TrainConfig& config, const PretrainResult& pre) {
  validate(config);
  Rng rng(config.rng_seed ^ kWeakPhaseSeedOffset);
  TrainResult out;
  out.theta = pre.gamma;
  out.gamma = pre.gamma;
  out.pretrain_log = pre.log;
  AdamState adam = make_adam_state(out.theta);

  PhaseAccumulator acc;
  out.log.entries.push_back(acc.flush(0, validation_nmpjpe(out.theta, dataset.validation)));
  for (long it = 1; it <= config.iterations; ++it) {
    const TrainBatch batch = sample_batch(dataset, config, rng);
    StepResult step;
    try {
      step = train_step(out.theta, out.gamma, batch, adam, config, dataset.skeleton);
    } catch (const DegenerateError& e) {
      throw DegenerateError("training iteration " + std::to_string(it) + ": " + e.what());
    }
    acc.add(step.loss);
    out.log.skipped_groups += step.skipped_groups;
    if (it % config.eval_every == 0 || it == config.iterations) {
      out.log.entries.push_back(acc.flush(it, validation_nmpjpe(out.theta, dataset.validation)));
    }
  }
  return out;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  return weak_train(dataset, config, pretrain(dataset, config));
}

MetricReport evaluate_predictions(std::span<const Pose> predictions, const std::vector<LabeledSample>& samples,
                                  const Skeleton& skeleton) {
  if (samples.empty()) throw ConfigError("evaluate: empty evaluation set");
  if (predictions.size() != samples.size()) throw ShapeError("evaluate: one prediction per sample required");
  std::vector<MetricReport> reports;
  reports.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!(pose_norm(predictions[i]) > kDegenerateNorm)) {
      throw DegenerateError("evaluate: degenerate prediction for sample " + std::to_string(i));
    }
    reports.push_back(evaluate_sample(predictions[i], samples[i].pose, skeleton));
  }
  return aggregate_reports(reports);
}

MetricReport evaluate(const RegressorParams& params, const std::vector<LabeledSample>& samples,
                      const Skeleton& skeleton) {
  if (samples.empty()) throw ConfigError("evaluate: empty evaluation set");
  Eigen::MatrixXd x(samples.front().features.size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = samples[i].features;
  const ForwardCache f = forward_batch(params, x);
  return evaluate_predictions(f.outputs, samples, skeleton);
}

}  // namespace mvpose
