#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "wproj/checkpoint.hpp"
#include "wproj/config.hpp"
#include "wproj/error.hpp"
#include "wproj/harness.hpp"
#include "wproj/metrics.hpp"
#include "wproj/report.hpp"
#include "wproj/trainer.hpp"

namespace wproj::cli {
namespace {

namespace fs = std::filesystem;

struct GlobalOptions {
  std::string config_path;
  std::string preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> deterministic;
  std::string out_dir;
};

struct Data {
  Dataset train;
  Dataset test;
};

/// Config from --config / --preset, falling back to the text stored in a
/// checkpoint, then with --set, --seed, --deterministic and --out-dir applied.
ExperimentConfig resolve_config(const GlobalOptions& g, const Checkpoint* ckpt) {
  ExperimentConfig cfg;
  if (!g.config_path.empty() && !g.preset.empty()) {
    throw UsageError("--config and --preset are mutually exclusive");
  }
  if (!g.config_path.empty()) {
    cfg = load_config(g.config_path);
  } else if (!g.preset.empty()) {
    cfg = preset_config(g.preset);
  } else if (ckpt && !ckpt->config_text.empty()) {
    cfg = parse_config(ckpt->config_text);
  } else {
    throw UsageError("no configuration: pass --config FILE or --preset NAME");
  }
  for (const std::string& item : g.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects KEY=VALUE, got '" + item + "'");
    set_config_value(cfg, item.substr(0, eq), item.substr(eq + 1));
  }
  // Without --seed, a loaded checkpoint keeps the seed it was trained with.
  if (g.seed) {
    set_config_value(cfg, "experiment.seed", std::to_string(*g.seed));
  } else if (ckpt) {
    cfg.train.seed = ckpt->seed;
  }
  if (g.deterministic) set_config_value(cfg, "experiment.deterministic", *g.deterministic);
  if (!g.out_dir.empty()) set_config_value(cfg, "experiment.out_dir", g.out_dir);
  return cfg;
}

Data load_data(const ExperimentConfig& cfg) {
  const DataConfig& d = cfg.data;
  Data data;
  if (d.source == "synthetic") {
    SyntheticOptions o;
    o.kind = d.kind;
    o.classes = d.classes;
    o.seed = d.seed;
    o.noise = d.noise;
    o.size = d.size;
    o.n = d.train_size;
    o.split = 0;
    data.train = synthetic_dataset(o);
    o.n = d.test_size;
    o.split = 1;
    data.test = synthetic_dataset(o);
  } else {
    const std::vector<fs::path> train_files(d.train_files.begin(), d.train_files.end());
    const std::vector<fs::path> test_files(d.test_files.begin(), d.test_files.end());
    data.train = load_cifar10(train_files, "train");
    data.test = load_cifar10(test_files, "test");
    if (d.preprocess == Preprocessing::kGcn) {
      data.train = gcn_normalize(std::move(data.train));
      data.test = gcn_normalize(std::move(data.test));
    }
    if (!d.whitening.empty()) {
      data.train = apply_whitening(std::move(data.train), d.whitening);
      data.test = apply_whitening(std::move(data.test), d.whitening);
    }
  }
  return data;
}

std::string provenance_line(const ExperimentConfig& cfg) {
  return "# seed=" + std::to_string(cfg.train.seed) + ", config_hash=" + config_hash(cfg) + "\n";
}

nlohmann::json metadata(const ExperimentConfig& cfg) {
  return {{"experiment", cfg.name}, {"seed", cfg.train.seed}, {"config_hash", config_hash(cfg)}};
}

void warn_use(std::ostream& err, const ProjectionSpec& spec, bool training) {
  if (training && !usable_for_training(spec.kind)) {
    err << "warning: " << kind_name(spec.kind) << " is a test-time distortion; training with it anyway\n";
  } else if (!training && !usable_for_testing(spec.kind)) {
    err << "warning: " << kind_name(spec.kind) << " is a training projection; evaluating with it anyway\n";
  }
}

Checkpoint load_checkpoint_arg(const std::string& path, const GlobalOptions& g) {
  if (!path.empty()) return load_checkpoint(path);
  if (!g.out_dir.empty()) return load_checkpoint(fs::path(g.out_dir) / "checkpoint.bin");
  // Default location: <out_dir>/checkpoint.bin of the resolved config.
  const ExperimentConfig cfg = resolve_config(g, nullptr);
  return load_checkpoint(fs::path(cfg.out_dir) / "checkpoint.bin");
}

int cmd_train(const GlobalOptions& g, const std::string& resume, std::ostream& out,
              std::ostream& err) {
  std::optional<Checkpoint> resumed;
  if (!resume.empty()) {
    resumed = load_checkpoint(resume);
    if (!resumed->has_training_state) {
      throw UsageError(resume + " holds no training state and cannot be resumed");
    }
  }
  const ExperimentConfig cfg = resolve_config(g, resumed ? &*resumed : nullptr);
  warn_use(err, cfg.train.projection, true);
  const Data data = load_data(cfg);
  const fs::path dir(cfg.out_dir);
  const std::string text = serialize_config(cfg);
  write_file_atomic(dir / "config.ini", text);

  TrainState state;
  if (resumed) {
    state = std::move(resumed->state);
    if (state.net.specs() != cfg.layer_specs() || state.net.input_shape() != cfg.input_shape) {
      throw ConfigError("checkpoint architecture does not match model.layers");
    }
  } else {
    state = init_train_state(make_network(cfg.input_shape, cfg.layer_specs(), cfg.train.seed), cfg.train);
  }
  auto save = [&](const TrainState& s, const fs::path& path) {
    save_checkpoint(path, Checkpoint{s, true, cfg.train.seed, text});
  };

  TrainHistory history;
  const auto on_epoch = [&](const TrainState& s, const TrainHistory& h) {
    if (!h.records.empty() && h.records.back().epoch == s.epoch) {
      const HistoryRecord& r = h.records.back();
      out << "epoch " << r.epoch << " iteration " << r.iteration << " loss " << format_double(r.loss);
      for (std::size_t i = 0; i < r.errors.size(); ++i) {
        out << " " << h.spec_names[i] << "=" << format_double(r.errors[i]);
      }
      out << "\n";
    }
    if (cfg.checkpoint_every > 0 && s.epoch % cfg.checkpoint_every == 0) save(s, dir / "checkpoint.bin");
  };
  run_epochs(state, cfg.train, data.train, data.test, cfg.eval_specs, history, on_epoch);

  save(state, dir / "checkpoint.bin");
  write_file_atomic(dir / "history.csv", provenance_line(cfg) + history.to_csv());
  out << "wrote " << (dir / "checkpoint.bin").string() << " and " << (dir / "history.csv").string()
      << "\n";
  return kOk;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& ckpt_path,
                 const std::vector<std::string>& spec_texts, bool no_recompute, std::ostream& out,
                 std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint_arg(ckpt_path, g);
  const ExperimentConfig cfg = resolve_config(g, &ckpt);
  std::vector<ProjectionSpec> specs;
  for (const std::string& s : spec_texts) specs.push_back(parse_projection(s));
  if (specs.empty()) specs = cfg.eval_specs;
  if (specs.empty()) throw UsageError("no evaluation specs: pass --spec or set eval.specs");
  const Data data = load_data(cfg);

  EvalOptions options;
  options.recompute_bn = !no_recompute;
  nlohmann::json j;
  j["schema_version"] = kReportSchemaVersion;
  j["metadata"] = metadata(cfg);
  j["metadata"]["recompute_bn"] = options.recompute_bn;
  j["results"] = nlohmann::json::array();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    specs[i].validate();
    warn_use(err, specs[i], false);
    const std::uint64_t seed = evaluation_seed(cfg.train.seed, i);
    const double error = evaluate(ckpt.state.net, specs[i], data.test, data.train, seed, options);
    out << specs[i].to_string() << " " << format_double(error) << "\n";
    j["results"].push_back({{"spec", specs[i].to_string()}, {"error", error}, {"seed", seed}});
  }
  const fs::path path = fs::path(cfg.out_dir) / "evaluate.json";
  write_file_atomic(path, j.dump(2) + "\n");
  out << "wrote " << path.string() << "\n";
  return kOk;
}

struct SweepArgs {
  std::string checkpoint;
  std::string kind;
  std::string grid;
  std::size_t trials = 0;
  std::size_t threads = 1;
};

int cmd_sweep(const GlobalOptions& g, const SweepArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint ckpt = load_checkpoint_arg(a.checkpoint, g);
  const ExperimentConfig cfg = resolve_config(g, &ckpt);
  std::vector<NamedSweep> sweeps;
  if (!a.kind.empty()) {
    NamedSweep s;
    s.distortion = parse_projection(a.kind);
    s.name = std::string(kind_name(s.distortion.kind));
    s.grid = a.grid.empty() ? default_grid(s.distortion.kind) : parse_grid(a.grid);
    s.trials = a.trials;
    sweeps.push_back(std::move(s));
  } else {
    if (!a.grid.empty()) throw UsageError("--grid needs --kind");
    sweeps = cfg.sweeps;
    if (a.trials > 0) {
      for (NamedSweep& s : sweeps) s.trials = a.trials;
    }
  }
  if (sweeps.empty()) throw UsageError("no sweeps: pass --kind or add [sweep.NAME] sections");
  const Data data = load_data(cfg);
  for (const NamedSweep& named : sweeps) {
    warn_use(err, named.distortion, false);
    SweepSpec spec;
    spec.distortion = named.distortion;
    spec.grid = named.grid;
    spec.trials = named.trials;
    spec.seed = cfg.train.seed;
    spec.threads = cfg.train.deterministic ? 1 : std::max<std::size_t>(1, a.threads);
    SweepReport report = sweep(ckpt.state.net, spec, data.test, data.train);
    report.network_id = cfg.name;
    report.config_hash = config_hash(cfg);
    const fs::path base = fs::path(cfg.out_dir) / ("sweep_" + named.name);
    write_file_atomic(base.string() + ".csv", report.to_csv());
    write_file_atomic(base.string() + ".json", report.to_json());
    for (const SweepPoint& p : report.points) {
      out << named.name << " " << format_double(p.parameter) << " " << format_double(p.mean_error)
          << " +- " << format_double(p.std_error) << "\n";
    }
    out << "wrote " << base.string() << ".csv and .json\n";
  }
  return kOk;
}

int cmd_inspect(const GlobalOptions& g, const std::string& ckpt_path, const std::string& spec_text,
                std::size_t bins, std::size_t batch, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint_arg(ckpt_path, g);
  const ExperimentConfig cfg = resolve_config(g, &ckpt);
  const ProjectionSpec spec = parse_projection(spec_text);
  spec.validate();
  const Data data = load_data(cfg);
  const Network& net = ckpt.state.net;

  const std::size_t n = std::min(batch, data.test.size());
  const Tensor sample = slice_rows(data.test.images, 0, n);
  const auto gaps = weight_gap(net, spec);
  const auto corr = activation_correlation(net, spec, sample, cfg.train.seed, &data.train);
  const auto names = weight_layer_names(net);

  const fs::path dir(cfg.out_dir);
  std::vector<LayerDiagnostics> layers;
  for (std::size_t k = 0; k < names.size(); ++k) {
    LayerDiagnostics d{names[k], gaps[k], corr[k], weight_histogram(net.weight_layer(k).weight.values(), bins)};
    write_file_atomic(dir / ("hist_" + names[k] + ".csv"), provenance_line(cfg) + d.histogram.to_csv());
    out << names[k] << " gap " << format_double(d.weight_gap) << " correlation "
        << (d.correlation ? format_double(*d.correlation) : std::string("undefined")) << "\n";
    layers.push_back(std::move(d));
  }
  write_file_atomic(dir / "diagnostics.json",
                    diagnostics_to_json(layers, spec.to_string(), cfg.train.seed, config_hash(cfg)));
  out << "wrote " << (dir / "diagnostics.json").string() << "\n";
  return kOk;
}

int cmd_bits(const GlobalOptions& g, const std::string& ckpt_path, const std::string& spec_text,
             std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint_arg(ckpt_path, g);
  const ExperimentConfig cfg = resolve_config(g, &ckpt);
  const BitsReport report = bits_report(ckpt.state.net, parse_projection(spec_text));
  nlohmann::json j = nlohmann::json::parse(report.to_json());
  j["metadata"] = metadata(cfg);
  for (const LayerBits& lb : report.layers) {
    out << lb.layer << " " << format_double(lb.bits) << "\n";
  }
  out << "network weighted " << format_double(report.weighted_bits) << " pooled "
      << format_double(report.pooled_bits) << "\n";
  const fs::path path = fs::path(cfg.out_dir) / "bits.json";
  write_file_atomic(path, j.dump(2) + "\n");
  out << "wrote " << path.string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train and probe neural networks under weight projections and distortions", "wproj"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Experiment config file");
  app.add_option("--preset", g.preset, "Named experiment preset");
  app.add_option("--set", g.overrides, "Override a config key, e.g. train.epochs=5")
      ->allow_extra_args(false);
  app.add_option("--seed", g.seed, "Experiment seed");
  app.add_option("--deterministic", g.deterministic, "true or false");
  app.add_option("--out-dir", g.out_dir, "Directory for artifacts");

  std::string resume;
  auto* train = app.add_subcommand("train", "Train a network and write a checkpoint and history CSV");
  train->add_option("--resume", resume, "Continue from a checkpoint with training state");

  std::string checkpoint;
  std::vector<std::string> specs;
  bool no_recompute = false;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Test error under projections");
  evaluate_cmd->add_option("--checkpoint", checkpoint, "Checkpoint (default <out-dir>/checkpoint.bin)");
  evaluate_cmd->add_option("--spec", specs, "Projection, e.g. sign or addnorm:sigma=0.3")
      ->allow_extra_args(false);
  evaluate_cmd->add_flag("--no-bn-recompute", no_recompute, "Keep stored BatchNorm statistics");

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Error over a distortion parameter grid");
  sweep_cmd->add_option("--checkpoint", sweep_args.checkpoint, "Checkpoint");
  sweep_cmd->add_option("--kind", sweep_args.kind, "addnorm, multunif, power, stochm or stochm3");
  sweep_cmd->add_option("--grid", sweep_args.grid, "start:stop:count or a comma list");
  sweep_cmd->add_option("--trials", sweep_args.trials, "Trials per grid point");
  sweep_cmd->add_option("--threads", sweep_args.threads, "Concurrent grid points (non-deterministic mode)");

  std::string inspect_spec = "sign";
  std::size_t bins = 50;
  std::size_t batch = 100;
  auto* inspect = app.add_subcommand("inspect", "Per-layer weight gap, correlation and histograms");
  inspect->add_option("--checkpoint", checkpoint, "Checkpoint");
  inspect->add_option("--spec", inspect_spec, "Deterministic projection to compare against");
  inspect->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);
  inspect->add_option("--batch", batch, "Test images used for correlations")->check(CLI::PositiveNumber);

  std::string bits_spec = "addnorm:sigma=0.55";
  auto* bits = app.add_subcommand("bits", "Effective bits per weight under a noise model");
  bits->add_option("--checkpoint", checkpoint, "Checkpoint");
  bits->add_option("--spec", bits_spec, "addnorm:sigma=S or multunif:gamma=G");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  }

  try {
    if (*train) return cmd_train(g, resume, out, err);
    if (*evaluate_cmd) return cmd_evaluate(g, checkpoint, specs, no_recompute, out, err);
    if (*sweep_cmd) return cmd_sweep(g, sweep_args, out, err);
    if (*inspect) return cmd_inspect(g, checkpoint, inspect_spec, bins, batch, out);
    if (*bits) return cmd_bits(g, checkpoint, bits_spec, out);
  } catch (const NumericError& e) {
    err << "numeric error";
    if (e.layer() >= 0) err << " in layer " << e.layer();
    err << ": " << e.what() << "\n";
    return kNumericError;
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsageError;
}

}  // namespace wproj::cli
