// Command-line front end: synth, train, eval, calib.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvpose/error.hpp"
#include "mvpose/trainer.hpp"

namespace fs = std::filesystem;
using namespace mvpose;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

int verbosity() {
  const char* v = std::getenv("MVPOSE_LOG");
  return v ? std::atoi(v) : 1;
}

std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> ids;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      ids.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("invalid subject id '" + item + "'");
    }
  }
  return ids;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string config;
  std::string skeleton;
  std::string labeled = "0";
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  CaptureConfig cfg = capture_config_from_json(read_json_file(a.config));
  if (a.seed) cfg.rng_seed = *a.seed;
  const Skeleton skel = a.skeleton.empty() ? Skeleton::default_h17() : load_skeleton(a.skeleton);
  const auto labeled = parse_id_list(a.labeled);
  const Dataset d = generate_dataset(cfg, skel, labeled);
  save_dataset(d, a.out);
  std::cout << "subjects: " << cfg.n_subjects << " (" << d.labeled_subjects.size() << " labeled, "
            << cfg.n_validation_subjects << " validation)\n"
            << "frames_per_subject: " << cfg.frames_per_subject << "\n"
            << "labeled_samples: " << d.labeled.size() << "\n"
            << "unlabeled_samples: " << d.unlabeled.size() << "\n"
            << "validation_samples: " << d.validation.size() << "\n"
            << "cameras: " << cfg.n_cameras << " ("
            << (cfg.rotation_model == RotationModel::ptz ? "ptz" : "fixed") << ")\n"
            << "noise_sigma_mm: " << cfg.noise_sigma_mm << "\n"
            << "seed: " << cfg.rng_seed << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string config;
  std::string mode = "weak";
  std::string rotations;
  std::string distance;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

int cmd_train(const TrainArgs& a) {
  const Dataset d = load_dataset(a.dataset);
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : train_config_from_json(read_json_file(a.config));
  if (a.mode == "baseline") {
    cfg.weights.multiview = 0.0;
    cfg.weights.regularizer = 0.0;
  }
  if (!a.rotations.empty()) {
    cfg.rotations = a.rotations == "estimated" ? RotationSource::estimated : RotationSource::known;
  }
  if (!a.distance.empty()) cfg.distance = a.distance == "se" ? Distance::se : Distance::nse;
  if (a.seed) cfg.rng_seed = *a.seed;

  fs::create_directories(a.out_dir);
  if (verbosity() > 0) {
    std::cerr << "training: mode=" << a.mode << " distance=" << (cfg.distance == Distance::se ? "se" : "nse")
              << " rotations=" << (cfg.rotations == RotationSource::known ? "known" : "estimated")
              << " pretrain=" << cfg.pretrain_iterations << " iterations=" << cfg.iterations << "\n";
  }
  const TrainResult r = train(d, cfg);

  CheckpointInfo info;
  info.seed = cfg.rng_seed;
  info.iteration = cfg.iterations;
  info.joint_names = d.skeleton.names();
  save_checkpoint(r.theta, info, fs::path(a.out_dir) / "theta.ckpt.json");
  info.iteration = 0;
  save_checkpoint(r.gamma, info, fs::path(a.out_dir) / "gamma.ckpt.json");
  write_text_file(fs::path(a.out_dir) / "train_log.csv", r.log.to_csv());
  write_text_file(fs::path(a.out_dir) / "pretrain_log.csv", r.pretrain_log.to_csv());
  write_text_file(fs::path(a.out_dir) / "train_config.json", train_config_to_json(cfg).dump(2) + "\n");
  std::cout << "final_val_nmpjpe: " << format_double(r.log.final_val_nmpjpe()) << "\n"
            << "min_val_nmpjpe: " << format_double(r.log.min_val_nmpjpe()) << "\n"
            << "skipped_groups: " << r.log.skipped_groups << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "validation";
  std::string compare;
  bool oracle = false;
  std::string out;
};

const std::vector<LabeledSample>& pick_split(const Dataset& d, const std::string& split) {
  if (split == "validation") return d.validation;
  if (split == "labeled") return d.labeled;
  throw ConfigError("unknown split '" + split + "' (expected validation or labeled)");
}

MetricReport report_for(const std::string& ckpt, const Dataset& d, const std::vector<LabeledSample>& samples,
                        bool oracle) {
  if (oracle) {
    std::vector<Pose> preds;
    for (const auto& s : samples) preds.push_back(s.pose);
    return evaluate_predictions(preds, samples, d.skeleton);
  }
  CheckpointInfo info;
  const RegressorParams p = load_checkpoint(ckpt, &info);
  if (!info.joint_names.empty() && info.joint_names != d.skeleton.names()) {
    throw ConfigError("skeleton mismatch between checkpoint '" + ckpt + "' and dataset");
  }
  if (p.n_joints() != d.skeleton.n_joints() || p.input_dim() != 2 * d.skeleton.n_joints()) {
    throw ConfigError("skeleton mismatch between checkpoint '" + ckpt + "' and dataset");
  }
  return evaluate(p, samples, d.skeleton);
}

int cmd_eval(const EvalArgs& a) {
  if (!a.oracle && a.checkpoint.empty()) throw ConfigError("eval: --checkpoint or --oracle required");
  const Dataset d = load_dataset(a.dataset);
  const auto& samples = pick_split(d, a.split);
  const MetricReport self = report_for(a.checkpoint, d, samples, a.oracle);
  std::string csv = metric_csv_header() + "\n" + metric_csv_row(self) + "\n";
  if (!a.compare.empty()) {
    const MetricReport other = report_for(a.compare, d, samples, false);
    csv += metric_csv_row(report_difference(self, other)) + "\n";
  }
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    write_text_file(a.out, csv);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct CalibArgs {
  std::string dataset;
  std::string checkpoint;
  bool oracle = false;
  double oracle_noise_mm = 0.0;
  std::uint64_t seed = 0;
  std::string dump;
  std::string out;
};

int cmd_calib(const CalibArgs& a) {
  if (!a.oracle && a.checkpoint.empty()) throw ConfigError("calib: --checkpoint or --oracle required");
  const Dataset d = load_dataset(a.dataset);
  if (d.unlabeled.empty()) throw ConfigError("calib: dataset has no multi-view samples");
  for (const auto& s : d.unlabeled) {
    if (s.views.size() < 2) throw ConfigError("calib: single-view sample in dataset");
  }
  std::optional<RegressorParams> params;
  if (!a.oracle) params = load_checkpoint(a.checkpoint);
  Rng rng(a.seed);

  std::string dump = "sample,view,angle_error_deg\n";
  std::vector<double> errors;
  bool have_truth = true;
  for (std::size_t t = 0; t < d.unlabeled.size(); ++t) {
    const auto& s = d.unlabeled[t];
    std::vector<Pose> preds;
    for (const auto& v : s.views) {
      if (a.oracle) {
        preds.push_back(center_at_pelvis(perturb_joints(v.pose.joints(), a.oracle_noise_mm, rng)));
      } else {
        preds.push_back(forward(*params, v.features));
      }
    }
    for (std::size_t c = 1; c < preds.size(); ++c) {
      const Rotation3 est = estimate_rotation(preds[c], preds[0], d.skeleton.torso_set()).rotation;
      if (!s.views[c].rotation || !s.views[0].rotation) {
        have_truth = false;
        continue;
      }
      const Rotation3 truth = s.views[0].rotation->inverse() * *s.views[c].rotation;
      const double err = est.angle_to_deg(truth);
      errors.push_back(err);
      dump += std::to_string(t) + "," + std::to_string(c) + "," + format_double(err) + "\n";
    }
  }
  if (!a.dump.empty()) write_text_file(a.dump, dump);

  std::string summary = "n,mean_deg,median_deg,max_deg\n";
  if (!errors.empty()) {
    const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) / static_cast<double>(errors.size());
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    summary += std::to_string(n) + "," + format_double(mean) + "," + format_double(median) + "," +
               format_double(sorted.back()) + "\n";
  } else if (!have_truth) {
    summary += "0,nan,nan,nan\n";
  }
  if (a.out.empty()) {
    std::cout << summary;
  } else {
    write_text_file(a.out, summary);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised multi-view training for monocular 3D pose regression"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-view capture dataset");
  s->add_option("--config", synth.config, "Capture config JSON")->required();
  s->add_option("--skeleton", synth.skeleton, "Skeleton JSON (default: built-in 17-joint)");
  s->add_option("--labeled", synth.labeled, "Comma-separated labeled subject ids");
  s->add_option("--seed", synth.seed, "Override the config seed");
  s->add_option("--out", synth.out, "Output dataset JSON")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Pretrain and run weakly supervised training");
  t->add_option("--dataset", tr.dataset, "Dataset JSON")->required();
  t->add_option("--config", tr.config, "Train config JSON");
  t->add_option("--mode", tr.mode, "baseline or weak")->check(CLI::IsMember({"baseline", "weak"}));
  t->add_option("--rotations", tr.rotations, "known or estimated")->check(CLI::IsMember({"known", "estimated"}));
  t->add_option("--distance", tr.distance, "se or nse")->check(CLI::IsMember({"se", "nse"}));
  t->add_option("--seed", tr.seed, "Override the training seed");
  t->add_option("--out-dir", tr.out_dir, "Output directory")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint, one CSV row of metrics");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON");
  e->add_option("--dataset", ev.dataset, "Dataset JSON")->required();
  e->add_option("--split", ev.split, "validation or labeled");
  e->add_option("--compare", ev.compare, "Second checkpoint; adds a delta row (self - other)");
  e->add_flag("--oracle", ev.oracle, "Use ground-truth poses as predictions");
  e->add_option("--out", ev.out, "Output CSV (default: stdout)");

  CalibArgs ca;
  auto* c = app.add_subcommand("calib", "Estimate camera rotations from predicted poses");
  c->add_option("--dataset", ca.dataset, "Dataset JSON")->required();
  c->add_option("--checkpoint", ca.checkpoint, "Checkpoint JSON");
  c->add_flag("--oracle", ca.oracle, "Use ground-truth view poses as predictions");
  c->add_option("--oracle-noise-mm", ca.oracle_noise_mm, "Gaussian noise added to oracle predictions");
  c->add_option("--seed", ca.seed, "Seed for oracle noise");
  c->add_option("--dump", ca.dump, "Per-sample angle errors CSV");
  c->add_option("--out", ca.out, "Summary CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*c) return cmd_calib(ca);
  } catch (const DegenerateError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitNumerical;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
