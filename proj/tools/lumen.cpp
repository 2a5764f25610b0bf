// lumen CLI: dispatches every workflow (data generation, training, latent
// tools, evaluation) with reproducible seeds and a run.json provenance record
// per invocation. Exit codes: 0 success, 1 bad configuration/usage, 2 runtime
// failure.

#include <CLI11.hpp>
#include <zlib.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "lumen/eval.hpp"
#include "lumen/latent.hpp"
#include "lumen/trainer.hpp"

namespace fs = std::filesystem;
using lumen::ConfigError;
using lumen::IoError;
using nlohmann::ordered_json;

namespace {

uint32_t file_crc32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return static_cast<uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void write_run_json(const std::string& out_dir, const std::string& command,
                    const ordered_json& params) {
  fs::create_directories(out_dir);
  ordered_json j{{"artifact_version", lumen::kArtifactVersion},
                 {"command", command},
                 {"params", params}};
  auto path = fs::path(out_dir) / "run.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write provenance record: " + path.string());
  out << j.dump(2) << "\n";
}

struct GenDataArgs {
  std::string out;
  int64_t n = 10;
  int64_t n_val = 0;
  int64_t n_test = 0;
  int64_t resolution = 64;
  uint64_t seed = 0;
};

void run_gen_data(const GenDataArgs& a) {
  lumen::DatasetSpec spec;
  spec.n_train = a.n;
  spec.n_val = a.n_val;
  spec.n_test = a.n_test;
  spec.resolution = a.resolution;
  spec.seed = a.seed;
  write_run_json(a.out, "gen-data",
                 {{"out", a.out}, {"n", a.n}, {"n_val", a.n_val}, {"n_test", a.n_test},
                  {"resolution", a.resolution}, {"seed", a.seed}});
  lumen::write_dataset(a.out, spec);
}

struct TrainArgs {
  std::string config;
  std::string resume;
  std::string out_override;
};

void run_train(const TrainArgs& a) {
  if (!a.resume.empty()) {
    auto trainer = lumen::Trainer::from_checkpoint(a.resume);
    write_run_json(trainer.config().output_dir, "train",
                   {{"resume", a.resume}, {"resume_crc32", file_crc32(a.resume)}});
    trainer.train();
    return;
  }
  if (a.config.empty()) throw ConfigError("train requires --config or --resume");
  auto cfg = lumen::parse_train_config(a.config);
  if (!a.out_override.empty()) cfg.output_dir = a.out_override;
  lumen::Trainer trainer(cfg);
  write_run_json(cfg.output_dir, "train",
                 {{"config", a.config}, {"config_crc32", file_crc32(a.config)},
                  {"seed", cfg.seed}, {"output_dir", cfg.output_dir}});
  trainer.train();
}

struct AugmentArgs {
  std::string ckpt;
  std::string data;
  std::string split = "train";
  int64_t n_aug = 1;
  uint64_t seed = 0;
  std::string out;
};

void run_augment(const AugmentArgs& a) {
  auto models = lumen::load_models_from_checkpoint(a.ckpt);
  auto data = lumen::load_polyp_split(a.data, a.split);
  write_run_json(a.out, "augment",
                 {{"ckpt", a.ckpt}, {"ckpt_crc32", file_crc32(a.ckpt)}, {"data", a.data},
                  {"split", a.split}, {"n_aug", a.n_aug}, {"seed", a.seed}, {"out", a.out}});
  lumen::augment_dataset(models.g, models.f, data, a.n_aug, a.seed, a.out);
}

struct TransferArgs {
  std::string ckpt;
  std::string reference;
  std::string target;
  std::string out;
};

void run_transfer(const TransferArgs& a) {
  auto models = lumen::load_models_from_checkpoint(a.ckpt);
  auto reference = lumen::load_image(a.reference);
  auto target = lumen::load_image(a.target);
  write_run_json(a.out, "transfer",
                 {{"ckpt", a.ckpt}, {"ckpt_crc32", file_crc32(a.ckpt)},
                  {"reference", a.reference}, {"reference_crc32", file_crc32(a.reference)},
                  {"target", a.target}, {"target_crc32", file_crc32(a.target)}});
  auto result = lumen::transfer_color_lighting(models.g, models.f, reference, target);
  fs::create_directories(fs::path(a.out) / "frames");
  lumen::save_image(result, (fs::path(a.out) / "frames" / "transfer.png").string());
}

struct InterpolateArgs {
  std::string ckpt;
  std::string code = "cl";
  int64_t steps = 8;
  uint64_t seed = 0;
  std::string vc_path;
  std::string out;
};

void run_interpolate(const InterpolateArgs& a) {
  if (a.code != "cl" && a.code != "ts") throw ConfigError("--code must be 'cl' or 'ts'");
  auto models = lumen::load_models_from_checkpoint(a.ckpt);
  auto res = models.config.resolution;

  torch::Tensor vc;
  if (a.vc_path.empty()) {
    vc = lumen::generate_vc_frame(a.seed, res).image;
  } else {
    vc = lumen::load_image(a.vc_path);
  }

  // Endpoint and fixed codes drawn in a fixed order from the seed.
  lumen::Rng stream = lumen::Rng(a.seed).fork(1);
  lumen::InterpolationSpec spec;
  spec.steps = a.steps;
  spec.zcl_a = lumen::sample_zcl(stream, 1, models.config.d_cl);
  spec.zcl_b = lumen::sample_zcl(stream, 1, models.config.d_cl);
  spec.zcl_fixed = lumen::sample_zcl(stream, 1, models.config.d_cl);
  spec.zts_fixed = lumen::sample_zts(stream, 1, res, models.config.noise_levels);
  spec.zts_a = lumen::sample_zts(stream, 1, res, models.config.noise_levels);
  spec.zts_b = lumen::sample_zts(stream, 1, res, models.config.noise_levels);
  spec.code = a.code == "cl" ? lumen::WalkCode::cl : lumen::WalkCode::ts;

  write_run_json(a.out, "interpolate",
                 {{"ckpt", a.ckpt}, {"ckpt_crc32", file_crc32(a.ckpt)}, {"code", a.code},
                  {"steps", a.steps}, {"seed", a.seed}, {"vc", a.vc_path}});
  auto walk = lumen::latent_walk(models.f, vc, spec);
  auto frames_dir = fs::path(a.out) / "frames";
  fs::create_directories(frames_dir);
  for (size_t i = 0; i < walk.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%02zu.png", i);
    lumen::save_image(walk.frames[i], (frames_dir / name).string());
  }
  lumen::save_image(walk.strip, (frames_dir / "strip.png").string());
}

struct ProbeArgs {
  std::string ckpt;
  int64_t trials = 128;
  uint64_t seed = 0;
  std::string out;
};

void run_probe(const ProbeArgs& a) {
  auto models = lumen::load_models_from_checkpoint(a.ckpt);
  write_run_json(a.out, "probe",
                 {{"ckpt", a.ckpt}, {"ckpt_crc32", file_crc32(a.ckpt)}, {"trials", a.trials},
                  {"seed", a.seed}});
  auto report = lumen::disentanglement_probe(models, a.trials, a.seed);
  auto reports_dir = fs::path(a.out) / "reports";
  fs::create_directories(reports_dir);
  std::ofstream(reports_dir / "probe.json") << lumen::to_json(report).dump(2) << "\n";
  std::ofstream(reports_dir / "probe.md") << lumen::probe_markdown(report);
}

struct EvalSegArgs {
  std::string ckpt;
  std::string data;
  std::string out;
  int64_t seg_epochs = 12;
  int64_t n_seeds = 3;
  uint64_t seed = 0;
};

void run_eval_seg(const EvalSegArgs& a) {
  if (a.n_seeds < 1) throw ConfigError("--seeds must be >= 1");
  auto models = lumen::load_models_from_checkpoint(a.ckpt);
  lumen::DownstreamConfig cfg;
  cfg.seg.epochs = a.seg_epochs;
  cfg.seeds.clear();
  for (int64_t i = 0; i < a.n_seeds; ++i) cfg.seeds.push_back(a.seed + static_cast<uint64_t>(i));
  cfg.work_dir = (fs::path(a.out) / "frames").string();
  write_run_json(a.out, "eval-seg",
                 {{"ckpt", a.ckpt}, {"ckpt_crc32", file_crc32(a.ckpt)}, {"data", a.data},
                  {"seg_epochs", a.seg_epochs}, {"seeds", cfg.seeds}});
  auto report = lumen::run_downstream_experiment(models, a.data, cfg);
  auto reports_dir = fs::path(a.out) / "reports";
  fs::create_directories(reports_dir);
  std::ofstream(reports_dir / "experiment.json") << lumen::to_json(report).dump(2) << "\n";
  std::ofstream(reports_dir / "report.md") << lumen::experiment_markdown(report);
}

struct RenderReportArgs {
  std::string experiment;
  std::string probe;
  std::string out;
};

void run_render_report(const RenderReportArgs& a) {
  if (a.experiment.empty() && a.probe.empty()) {
    throw ConfigError("render-report requires --experiment and/or --probe");
  }
  write_run_json(a.out, "render-report", {{"experiment", a.experiment}, {"probe", a.probe}});
  std::string md;
  if (!a.experiment.empty()) {
    std::ifstream in(a.experiment);
    if (!in) throw IoError("cannot open experiment report: " + a.experiment);
    auto report = lumen::experiment_report_from_json(nlohmann::json::parse(in));
    md += "## Downstream segmentation\n\n" + lumen::experiment_markdown(report) + "\n";
  }
  if (!a.probe.empty()) {
    std::ifstream in(a.probe);
    if (!in) throw IoError("cannot open probe report: " + a.probe);
    auto report = lumen::probe_report_from_json(nlohmann::json::parse(in));
    md += "## Disentanglement probe\n\n" + lumen::probe_markdown(report) + "\n";
  }
  auto reports_dir = fs::path(a.out) / "reports";
  fs::create_directories(reports_dir);
  std::ofstream out(reports_dir / "report.md");
  if (!out) throw IoError("cannot write report: " + (reports_dir / "report.md").string());
  out << md;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"one-to-many unpaired image translation on a procedural tube domain"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate the procedural three-domain dataset");
  gen->add_option("--out", gen_args.out, "Dataset root directory")->required();
  gen->add_option("--n", gen_args.n, "Training frames per domain");
  gen->add_option("--n-val", gen_args.n_val, "Validation frames per domain");
  gen->add_option("--n-test", gen_args.n_test, "Test frames per domain");
  gen->add_option("--res", gen_args.resolution, "Frame resolution (power of 2, >= 16)");
  gen->add_option("--seed", gen_args.seed, "Dataset seed");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the translation networks");
  train->add_option("--config", train_args.config, "key = value training config file");
  train->add_option("--resume", train_args.resume, "Checkpoint to resume from");
  train->add_option("--out", train_args.out_override, "Override the configured output directory");

  AugmentArgs aug_args;
  auto* aug = app.add_subcommand("augment", "Recolor-augment a polyp split");
  aug->add_option("--ckpt", aug_args.ckpt, "Trained checkpoint")->required();
  aug->add_option("--data", aug_args.data, "Dataset root")->required();
  aug->add_option("--split", aug_args.split, "Polyp split to augment (default train)");
  aug->add_option("--n-aug", aug_args.n_aug, "Variants per image")->required();
  aug->add_option("--seed", aug_args.seed, "Augmentation seed");
  aug->add_option("--out", aug_args.out, "Output directory")->required();

  TransferArgs transfer_args;
  auto* transfer = app.add_subcommand("transfer", "Transfer color/lighting between frames");
  transfer->add_option("--ckpt", transfer_args.ckpt, "Trained checkpoint")->required();
  transfer->add_option("--reference", transfer_args.reference, "Reference frame (PNG)")->required();
  transfer->add_option("--target", transfer_args.target, "Target frame (PNG)")->required();
  transfer->add_option("--out", transfer_args.out, "Output directory")->required();

  InterpolateArgs interp_args;
  auto* interp = app.add_subcommand("interpolate", "Render a latent interpolation strip");
  interp->add_option("--ckpt", interp_args.ckpt, "Trained checkpoint")->required();
  interp->add_option("--code", interp_args.code, "Which code to walk: cl | ts");
  interp->add_option("--steps", interp_args.steps, "Number of interpolation steps (>= 2)");
  interp->add_option("--seed", interp_args.seed, "Seed for endpoint codes and the VC frame");
  interp->add_option("--vc", interp_args.vc_path, "Optional VC frame (PNG); procedural if absent");
  interp->add_option("--out", interp_args.out, "Output directory")->required();

  ProbeArgs probe_args;
  auto* probe = app.add_subcommand("probe", "Run the disentanglement probe");
  probe->add_option("--ckpt", probe_args.ckpt, "Trained checkpoint")->required();
  probe->add_option("--trials", probe_args.trials, "Number of probe trials");
  probe->add_option("--seed", probe_args.seed, "Probe seed");
  probe->add_option("--out", probe_args.out, "Output directory")->required();

  EvalSegArgs eval_args;
  auto* evals = app.add_subcommand("eval-seg", "Run the downstream augmentation experiment");
  evals->add_option("--ckpt", eval_args.ckpt, "Trained checkpoint")->required();
  evals->add_option("--data", eval_args.data, "Dataset root")->required();
  evals->add_option("--out", eval_args.out, "Output directory")->required();
  evals->add_option("--seg-epochs", eval_args.seg_epochs, "Segmenter training epochs");
  evals->add_option("--seeds", eval_args.n_seeds, "Number of segmenter seeds");
  evals->add_option("--seed", eval_args.seed, "First segmenter seed");

  RenderReportArgs render_args;
  auto* render = app.add_subcommand("render-report", "Render experiment/probe JSON to markdown");
  render->add_option("--experiment", render_args.experiment, "experiment.json path");
  render->add_option("--probe", render_args.probe, "probe.json path");
  render->add_option("--out", render_args.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) run_gen_data(gen_args);
    else if (train->parsed()) run_train(train_args);
    else if (aug->parsed()) run_augment(aug_args);
    else if (transfer->parsed()) run_transfer(transfer_args);
    else if (interp->parsed()) run_interpolate(interp_args);
    else if (probe->parsed()) run_probe(probe_args);
    else if (evals->parsed()) run_eval_seg(eval_args);
    else if (render->parsed()) run_render_report(render_args);
    return 0;
  } catch (const lumen::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const lumen::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
