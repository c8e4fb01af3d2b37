// edgeseg: profiling, training, evaluation and benchmarking for the
// segmentation models in core/. JSON reports go to stdout (or --json FILE);
// human-readable tables and progress go to stderr.

#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edgeseg/bench.hpp"
#include "edgeseg/dataio.hpp"
#include "edgeseg/gradcheck.hpp"
#include "edgeseg/metrics.hpp"
#include "edgeseg/model.hpp"
#include "edgeseg/profiler.hpp"
#include "edgeseg/train.hpp"
#include "edgeseg/weights_io.hpp"

namespace {

using namespace edgeseg;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void emit_json(const std::string& json, const std::string& path) {
  if (path.empty()) {
    std::cout << json;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cli: cannot open '" + path + "' for writing");
  out << json;
  if (!out) throw std::runtime_error("cli: short write to '" + path + "'");
}

// architecture flags shared by the subcommands that build a model
struct ModelArgs {
  std::string model = "umbv2";
  std::int64_t base = 64;
  int depth = 4;
  std::vector<std::int64_t> decoder_widths = {256, 128, 64, 32, 16};

  void add_flags(CLI::App* cmd, bool with_model = true) {
    if (with_model) {
      cmd->add_option("--model", model, "Architecture: unet, umbv2 or umbv3")
          ->check(CLI::IsMember({"unet", "umbv2", "umbv3"}))
          ->required();
    }
    cmd->add_option("--base", base, "unet only: encoder width at full resolution")
        ->capture_default_str();
    cmd->add_option("--depth", depth, "unet only: number of pooling steps")
        ->capture_default_str();
    cmd->add_option("--decoder-widths", decoder_widths,
                    "umbv2/umbv3 only: five decoder channel widths, deepest first")
        ->delimiter(',')
        ->expected(1, 5);
  }

  ModelConfig config(int num_classes) const {
    ModelConfig cfg;
    cfg.kind = parse_model_kind(model);
    cfg.num_classes = num_classes;
    cfg.base_width = base;
    cfg.depth = depth;
    cfg.decoder_widths = decoder_widths;
    return cfg;
  }
};

struct Cli {
  bool no_timestamps = false;

  // profile
  ModelArgs prof_model;
  int prof_classes = 0;
  std::int64_t prof_input = 0;
  std::string prof_json;

  // synth
  int synth_n = 8;
  std::int64_t synth_size = 64;
  int synth_classes = 4;
  std::uint64_t synth_seed = 0;
  std::string synth_out;

  // train
  ModelArgs train_model_args;
  std::string train_manifest;
  std::int64_t train_steps = 0;
  int train_epochs = 0;
  float train_lr = 0.001f;
  float train_wd = 0.0001f;
  int train_batch = 4;
  std::uint64_t train_seed = 0;
  float train_clip = 0.0f;
  bool train_hflip = false;
  std::string train_out;
  std::string train_log;

  // eval
  ModelArgs eval_model_args;
  std::string eval_manifest;
  std::string eval_weights;
  std::string eval_json;

  // bench
  ModelArgs bench_model_args;
  int bench_classes = 9;
  std::int64_t bench_input = 0;
  std::string bench_weights;
  std::int64_t bench_frames = 1000;
  int bench_rounds = 20;
  std::int64_t bench_warmup = 20;
  double bench_power = 0.0;
  int bench_threads = 1;
  std::string bench_json;

  // gradcheck
  std::string gc_target = "ops";
  double gc_tolerance = 1e-4;
  std::uint64_t gc_seed = 0;
};

void run_profile(const Cli& a) {
  const ModelConfig cfg = a.prof_model.config(a.prof_classes);
  const Model m = build_model(cfg);
  const Shape4 input{1, cfg.in_channels, a.prof_input, a.prof_input};
  const ModelProfile p = profile_model(m, input);
  emit_json(profile_to_json(p, cfg, a.no_timestamps ? "" : utc_now()), a.prof_json);
  std::cerr << profile_table(p, cfg);
}

void run_synth(const Cli& a) {
  SynthConfig cfg;
  cfg.count = a.synth_n;
  cfg.size = a.synth_size;
  cfg.num_classes = a.synth_classes;
  cfg.seed = a.synth_seed;
  generate_synthetic(a.synth_out, cfg);
  std::cerr << "wrote " << cfg.count << " samples of " << cfg.size << "x" << cfg.size << " with "
            << cfg.num_classes << " classes (seed " << cfg.seed << ") under " << a.synth_out
            << "\n";
}

void run_train(const Cli& a) {
  const Manifest data = read_manifest(a.train_manifest);
  const ModelConfig mc = a.train_model_args.config(static_cast<int>(data.classes.size()));
  Model m = build_model(mc);
  init_weights(m, a.train_seed);

  TrainConfig cfg;
  cfg.epochs = a.train_epochs;
  cfg.steps = a.train_steps;
  cfg.batch_size = a.train_batch;
  cfg.opt.lr = a.train_lr;
  cfg.opt.weight_decay = a.train_wd;
  cfg.seed = a.train_seed;
  cfg.clip_norm = a.train_clip;
  cfg.hflip = a.train_hflip;
  cfg.zero_seconds = a.no_timestamps;
  cfg.out_weights = a.train_out;
  cfg.log_csv = a.train_log;
  cfg.on_epoch = [](const EpochStats& e) {
    std::fprintf(stderr, "epoch %4d  loss %.6f  pixel_acc %.4f  miou %.4f  (%.2fs)\n", e.epoch,
                 e.loss, e.pixel_acc, e.miou, e.seconds);
  };
  std::cerr << "training " << model_kind_name(mc.kind) << " on " << data.samples.size()
            << " samples, " << data.classes.size() << " classes, seed " << a.train_seed << "\n";
  const TrainResult res = train_model(m, data, cfg);
  std::cerr << "done: " << res.steps_run << " steps, weights in " << a.train_out << "\n";
}

void run_eval(const Cli& a) {
  const Manifest data = read_manifest(a.eval_manifest);
  const ModelConfig mc = a.eval_model_args.config(static_cast<int>(data.classes.size()));
  Model m = build_model(mc);
  load_weights_into(m.params, a.eval_weights);

  ConfusionMatrix cm(mc.num_classes);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const LoadedSample s = load_sample(data, i);
    const Tensor logits = model_logits(m, s.image, ExecMode::eval);
    cm.add(s.mask, argmax_mask(logits), data.ignore_label);
  }
  emit_json(metrics_to_json(cm, data.classes), a.eval_json);
  std::cerr << metrics_table(cm, data.classes);
}

void run_bench_cmd(const Cli& a) {
  const ModelConfig mc = a.bench_model_args.config(a.bench_classes);
  Model m = build_model(mc);
  if (a.bench_weights.empty()) {
    init_weights(m, 0);
  } else {
    load_weights_into(m.params, a.bench_weights);
  }
  BenchConfig cfg;
  cfg.frames_per_round = a.bench_frames;
  cfg.rounds = a.bench_rounds;
  cfg.warmup_frames = a.bench_warmup;
  cfg.input = Shape4{1, mc.in_channels, a.bench_input, a.bench_input};
  cfg.power_watts = a.bench_power;
  cfg.threads = a.bench_threads;
  const BenchReport r = run_bench(m, cfg);
  emit_json(bench_to_json(r, mc, a.no_timestamps ? "" : utc_now()), a.bench_json);
  std::cerr << bench_table(r, mc);
}

void run_gradcheck(const Cli& a) {
  GradCheckReport report;
  if (a.gc_target == "ops") {
    report = gradcheck_ops(a.gc_tolerance, a.gc_seed);
  } else if (a.gc_target == "blocks") {
    report = gradcheck_blocks(a.gc_tolerance, a.gc_seed);
  } else {
    report = gradcheck_model(a.gc_tolerance, a.gc_seed);
  }
  // failures are part of the report, not a process error
  std::cout << gradcheck_report_text(report);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lightweight semantic segmentation: models, profiling, training, benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();

  Cli a;
  app.add_flag("--no-timestamps", a.no_timestamps,
               "Omit timestamps and wall-clock columns so reports are byte-reproducible");

  CLI::App* profile = app.add_subcommand("profile", "Analytic parameter/MAC/CIO breakdown");
  a.prof_model.add_flags(profile);
  profile->add_option("--classes", a.prof_classes, "Number of output classes")->required();
  profile->add_option("--input", a.prof_input, "Square input size in pixels")->required();
  profile->add_option("--json", a.prof_json, "Write the JSON report here instead of stdout");

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic shape dataset");
  synth->add_option("--n", a.synth_n, "Number of samples")->capture_default_str();
  synth->add_option("--size", a.synth_size, "Square image size, a multiple of 32")
      ->capture_default_str();
  synth->add_option("--classes", a.synth_classes, "Classes including background (2..10)")
      ->capture_default_str();
  synth->add_option("--seed", a.synth_seed, "Generator seed")->capture_default_str();
  synth->add_option("--out", a.synth_out, "Output directory")->required();

  CLI::App* train = app.add_subcommand("train", "Fit a model on a manifest dataset");
  train->add_option("--manifest", a.train_manifest, "Dataset manifest.json")->required();
  a.train_model_args.add_flags(train);
  train->add_option("--steps", a.train_steps, "Stop after this many optimizer steps");
  train->add_option("--epochs", a.train_epochs, "Stop after this many epochs");
  train->add_option("--lr", a.train_lr, "AdamW learning rate")->capture_default_str();
  train->add_option("--wd", a.train_wd, "AdamW decoupled weight decay")->capture_default_str();
  train->add_option("--batch", a.train_batch, "Minibatch size")->capture_default_str();
  train->add_option("--seed", a.train_seed, "Init/shuffle/augmentation seed")
      ->capture_default_str();
  train->add_option("--clip-norm", a.train_clip,
                    "Rescale gradients to this global norm (0 disables)")
      ->capture_default_str();
  train->add_flag("--hflip", a.train_hflip, "Random horizontal flips");
  train->add_option("--out", a.train_out, "Weight file to write (plus .json sidecar)")
      ->required();
  train->add_option("--log", a.train_log, "Per-epoch CSV log");

  CLI::App* eval = app.add_subcommand("eval", "Score weights against a manifest dataset");
  eval->add_option("--manifest", a.eval_manifest, "Dataset manifest.json")->required();
  eval->add_option("--weights", a.eval_weights, "Weight file to load")->required();
  a.eval_model_args.add_flags(eval);
  eval->add_option("--json", a.eval_json, "Write the JSON report here instead of stdout");

  CLI::App* bench = app.add_subcommand("bench", "Latency/throughput benchmark");
  a.bench_model_args.add_flags(bench);
  bench->add_option("--classes", a.bench_classes, "Number of output classes")
      ->capture_default_str();
  bench->add_option("--weights", a.bench_weights, "Optional weight file (random init otherwise)");
  bench->add_option("--input", a.bench_input, "Square input size in pixels")->required();
  bench->add_option("--frames", a.bench_frames, "Frames per round")->capture_default_str();
  bench->add_option("--rounds", a.bench_rounds, "Rounds")->capture_default_str();
  bench->add_option("--warmup", a.bench_warmup, "Untallied warmup frames")
      ->capture_default_str();
  bench->add_option("--power-watts", a.bench_power,
                    "Board power draw; enables fps/W and GOP/J");
  bench->add_option("--threads", a.bench_threads, "Worker threads")->capture_default_str();
  bench->add_option("--json", a.bench_json, "Write the JSON report here instead of stdout");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient audit");
  gradcheck->add_option("--target", a.gc_target, "ops, blocks or model")
      ->check(CLI::IsMember({"ops", "blocks", "model"}))
      ->capture_default_str();
  gradcheck->add_option("--tolerance", a.gc_tolerance, "Max relative error to pass")
      ->capture_default_str();
  gradcheck->add_option("--seed", a.gc_seed, "Probe seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    const std::string name = subs.empty() ? "<subcommand>" : subs[0]->get_name();
    std::cerr << "usage: edgeseg " << name << " --help\n";
    return 1;
  }

  try {
    if (profile->parsed()) run_profile(a);
    if (synth->parsed()) run_synth(a);
    if (train->parsed()) run_train(a);
    if (eval->parsed()) run_eval(a);
    if (bench->parsed()) run_bench_cmd(a);
    if (gradcheck->parsed()) run_gradcheck(a);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
