#include "wproj/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>
#include <sstream>

#include "wproj/error.hpp"
#include "wproj/harness.hpp"
#include "wproj/report.hpp"

namespace wproj {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(trim(text.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Comma list with empty items dropped; an all-blank value is an empty list.
std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> out;
  for (std::string_view item : split(text, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_u64(std::string_view text, std::string_view what) {
  text = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError(std::string(what) + " expects a non-negative integer, got '" +
                      std::string(text) + "'");
  }
  return v;
}

std::size_t parse_size(std::string_view text, std::string_view what) {
  return static_cast<std::size_t>(parse_u64(text, what));
}

double parse_real(std::string_view text, std::string_view what) {
  try {
    return parse_double(trim(text));
  } catch (const Error&) {
    throw ConfigError(std::string(what) + " expects a number, got '" + std::string(text) + "'");
  }
}

bool parse_bool(std::string_view text, std::string_view what) {
  std::string v(trim(text));
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(std::string(what) + " expects true or false, got '" + std::string(text) + "'");
}

std::vector<Milestone> parse_schedule(std::string_view text, std::string_view what) {
  std::vector<Milestone> out;
  for (std::string_view item : split_list(text)) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) {
      throw ConfigError(std::string(what) + " entries must be ITERATION:MULTIPLIER, got '" +
                        std::string(item) + "'");
    }
    out.push_back({parse_u64(parts[0], what), parse_real(parts[1], what)});
  }
  return out;
}

std::string schedule_string(const std::vector<Milestone>& schedule) {
  std::string out;
  for (const Milestone& m : schedule) {
    if (!out.empty()) out += ", ";
    out += std::to_string(m.iteration) + ":" + format_double(m.multiplier);
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F&& fmt) {
  std::string out;
  for (const T& item : items) {
    if (!out.empty()) out += ", ";
    out += fmt(item);
  }
  return out;
}

ProjectionSpec parse_spec_value(std::string_view text) {
  try {
    ProjectionSpec spec = parse_projection(text);
    spec.validate();
    return spec;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::vector<double> parse_grid_value(std::string_view text) {
  try {
    return parse_grid(text);
  } catch (const Error& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
}

NamedSweep& sweep_named(ExperimentConfig& cfg, std::string_view name) {
  for (NamedSweep& s : cfg.sweeps) {
    if (s.name == name) return s;
  }
  NamedSweep s;
  s.name = std::string(name);
  cfg.sweeps.push_back(std::move(s));
  return cfg.sweeps.back();
}

void apply_key(ExperimentConfig& cfg, std::string_view section, std::string_view key,
               std::string_view value) {
  const std::string full = std::string(section) + "." + std::string(key);
  auto unknown = [&]() -> void { throw ConfigError("unknown key '" + full + "'"); };

  if (section == "experiment") {
    if (key == "name") {
      cfg.name = std::string(value);
    } else if (key == "seed") {
      cfg.train.seed = parse_u64(value, full);
    } else if (key == "deterministic") {
      cfg.train.deterministic = parse_bool(value, full);
    } else if (key == "out_dir") {
      cfg.out_dir = std::string(value);
    } else {
      unknown();
    }
  } else if (section == "model") {
    if (key == "input") {
      cfg.input_shape = parse_input_shape(value);
    } else if (key == "layers") {
      cfg.layers = std::string(value);
    } else {
      unknown();
    }
  } else if (section == "train") {
    if (key == "optimizer") {
      cfg.train.optimizer = parse_optimizer(trim(value));
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = parse_real(value, full);
    } else if (key == "lr_schedule") {
      cfg.train.lr_schedule = parse_schedule(value, full);
    } else if (key == "batch_size") {
      cfg.train.batch_size = parse_size(value, full);
    } else if (key == "epochs") {
      cfg.train.epochs = parse_size(value, full);
    } else if (key == "projection") {
      cfg.train.projection = parse_spec_value(value);
    } else if (key == "eval_every") {
      cfg.train.eval_every = parse_size(value, full);
    } else if (key == "checkpoint_every") {
      cfg.checkpoint_every = parse_size(value, full);
    } else {
      unknown();
    }
  } else if (section == "clip") {
    if (key == "enabled") {
      cfg.train.clip.enabled = parse_bool(value, full);
    } else if (key == "factor") {
      cfg.train.clip.global_factor = parse_real(value, full);
    } else if (key == "schedule") {
      cfg.train.clip.schedule = parse_schedule(value, full);
    } else {
      unknown();
    }
  } else if (section == "eval") {
    if (key == "specs") {
      cfg.eval_specs.clear();
      for (std::string_view item : split_list(value)) cfg.eval_specs.push_back(parse_spec_value(item));
    } else {
      unknown();
    }
  } else if (section == "data") {
    DataConfig& d = cfg.data;
    if (key == "source") {
      d.source = std::string(trim(value));
    } else if (key == "kind") {
      try {
        d.kind = parse_synthetic_kind(trim(value));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "classes") {
      d.classes = parse_size(value, full);
    } else if (key == "train_size") {
      d.train_size = parse_size(value, full);
    } else if (key == "test_size") {
      d.test_size = parse_size(value, full);
    } else if (key == "noise") {
      d.noise = parse_real(value, full);
    } else if (key == "size") {
      d.size = parse_size(value, full);
    } else if (key == "seed") {
      d.seed = parse_u64(value, full);
    } else if (key == "train_files" || key == "test_files") {
      auto& files = key == "train_files" ? d.train_files : d.test_files;
      files.clear();
      for (std::string_view item : split_list(value)) files.emplace_back(item);
    } else if (key == "preprocess") {
      const std::string_view v = trim(value);
      if (v == "none") {
        d.preprocess = Preprocessing::kNone;
      } else if (v == "gcn") {
        d.preprocess = Preprocessing::kGcn;
      } else {
        throw ConfigError(full + " must be none or gcn, got '" + std::string(v) + "'");
      }
    } else if (key == "whitening") {
      d.whitening = std::string(trim(value));
    } else {
      unknown();
    }
  } else if (section.starts_with("sweep.") && section.size() > 6) {
    NamedSweep& s = sweep_named(cfg, section.substr(6));
    if (key == "distortion") {
      s.distortion = parse_spec_value(value);
      if (s.grid.empty() && s.distortion.kind != ProjectionKind::kNone) {
        try {
          s.grid = default_grid(s.distortion.kind);
        } catch (const Error&) {
          // Not sweepable; validate() reports it.
        }
      }
    } else if (key == "grid") {
      s.grid = parse_grid_value(value);
    } else if (key == "trials") {
      s.trials = parse_size(value, full);
    } else {
      unknown();
    }
  } else {
    throw ConfigError("unknown section '" + std::string(section) + "'");
  }
}

std::string input_list(const std::vector<std::string>& items) {
  return join(items, [](const std::string& s) { return s; });
}

}  // namespace

Tensor::Shape parse_input_shape(std::string_view text) {
  const auto parts = split(trim(text), 'x');
  if (parts.size() != 3) {
    throw ConfigError("input shape must be CxHxW, got '" + std::string(text) + "'");
  }
  Tensor::Shape shape;
  for (std::string_view p : parts) {
    const std::size_t v = parse_size(p, "input shape");
    if (v == 0) throw ConfigError("input shape dimensions must be positive");
    shape.push_back(v);
  }
  return shape;
}

std::string input_shape_string(const Tensor::Shape& shape) {
  std::string out;
  for (std::size_t d : shape) {
    if (!out.empty()) out += "x";
    out += std::to_string(d);
  }
  return out;
}

std::vector<LayerSpec> parse_layer_list(std::string_view text, const Tensor::Shape& input_shape) {
  std::vector<LayerSpec> specs;
  // Channel count flowing into the next layer (for BatchNorm inference).
  std::size_t channels = input_shape.empty() ? 0 : input_shape[0];
  for (std::string_view item : split_list(text)) {
    const auto parts = split(item, ':');
    const std::string_view kind = parts[0];
    if (kind == "conv") {
      if (parts.size() < 2) throw ConfigError("conv needs KH-KW-IN-OUT, got '" + std::string(item) + "'");
      const auto dims = split(parts[1], '-');
      if (dims.size() != 4) throw ConfigError("conv needs KH-KW-IN-OUT, got '" + std::string(item) + "'");
      Conv2D c;
      c.kernel_h = parse_size(dims[0], "conv kernel height");
      c.kernel_w = parse_size(dims[1], "conv kernel width");
      c.in_channels = parse_size(dims[2], "conv input channels");
      c.out_channels = parse_size(dims[3], "conv output channels");
      for (std::size_t i = 2; i < parts.size(); ++i) {
        const std::string_view opt = parts[i];
        if (opt.size() > 1 && opt[0] == 's') {
          c.stride = parse_size(opt.substr(1), "conv stride");
        } else if (opt.size() > 1 && opt[0] == 'p') {
          c.padding = parse_size(opt.substr(1), "conv padding");
        } else {
          throw ConfigError("unknown conv option '" + std::string(opt) + "'");
        }
      }
      channels = c.out_channels;
      specs.emplace_back(c);
    } else if (kind == "fc") {
      const auto dims = parts.size() == 2 ? split(parts[1], '-') : std::vector<std::string_view>{};
      if (dims.size() != 2) throw ConfigError("fc needs IN-OUT, got '" + std::string(item) + "'");
      Dense d;
      d.in_features = parse_size(dims[0], "fc input features");
      d.out_features = parse_size(dims[1], "fc output features");
      channels = d.out_features;
      specs.emplace_back(d);
    } else if (kind == "bn" && parts.size() == 1) {
      BatchNorm b;
      b.channels = channels;
      specs.emplace_back(b);
    } else if (kind == "relu" && parts.size() == 1) {
      specs.emplace_back(ReLU{});
    } else if (kind == "flatten" && parts.size() == 1) {
      specs.emplace_back(Flatten{});
    } else {
      throw ConfigError("unknown layer '" + std::string(item) + "'");
    }
  }
  if (specs.empty()) throw ConfigError("model.layers is empty");
  return specs;
}

std::string layer_list_string(const std::vector<LayerSpec>& specs) {
  std::string out;
  for (const LayerSpec& spec : specs) {
    if (!out.empty()) out += ", ";
    if (const auto* c = std::get_if<Conv2D>(&spec)) {
      out += "conv:" + std::to_string(c->kernel_h) + "-" + std::to_string(c->kernel_w) + "-" +
             std::to_string(c->in_channels) + "-" + std::to_string(c->out_channels) + ":s" +
             std::to_string(c->stride) + ":p" + std::to_string(c->padding);
    } else if (const auto* d = std::get_if<Dense>(&spec)) {
      out += "fc:" + std::to_string(d->in_features) + "-" + std::to_string(d->out_features);
    } else {
      out += layer_kind_name(spec);
    }
  }
  return out;
}

std::vector<LayerSpec> ExperimentConfig::layer_specs() const {
  return parse_layer_list(layers, input_shape);
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("experiment.name is empty");
  const std::vector<LayerSpec> specs = layer_specs();
  Network net;
  try {
    net = Network(input_shape, specs);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model.layers: ") + e.what());
  }
  train.validate();
  if (!usable_for_training(train.projection.kind)) {
    // Test-only kinds are allowed with a warning at the CLI; nothing to reject here.
  }
  if (data.source != "synthetic" && data.source != "cifar10") {
    throw ConfigError("data.source must be synthetic or cifar10, got '" + data.source + "'");
  }
  if (data.source == "synthetic") {
    if (data.classes < 2) throw ConfigError("data.classes must be at least 2");
    if (data.train_size < data.classes || data.test_size < data.classes) {
      throw ConfigError("data.train_size and data.test_size must be at least data.classes");
    }
    if (!(data.noise >= 0.0)) throw ConfigError("data.noise must be non-negative");
    if (input_shape != Tensor::Shape{1, data.size, data.size}) {
      throw ConfigError("model.input must be 1x" + std::to_string(data.size) + "x" +
                        std::to_string(data.size) + " for the synthetic data");
    }
    if (net.num_classes() != data.classes) {
      throw ConfigError("network has " + std::to_string(net.num_classes()) +
                        " outputs but data.classes is " + std::to_string(data.classes));
    }
  } else {
    if (data.train_files.empty() || data.test_files.empty()) {
      throw ConfigError("data.train_files and data.test_files are required for cifar10");
    }
    if (input_shape != Tensor::Shape{3, 32, 32}) throw ConfigError("model.input must be 3x32x32 for cifar10");
    if (net.num_classes() != 10) throw ConfigError("cifar10 needs a network with 10 outputs");
  }
  for (const NamedSweep& s : sweeps) {
    if (s.grid.empty()) throw ConfigError("sweep." + s.name + ".grid is empty");
    try {
      for (double v : s.grid) with_parameter(s.distortion, v);
    } catch (const Error& e) {
      throw ConfigError("sweep." + s.name + ": " + e.what());
    }
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  cfg.layers.clear();
  std::string section;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    // A ';' or '#' preceded by whitespace starts an inline comment.
    for (std::size_t i = 1; i < line.size(); ++i) {
      if ((line[i] == ';' || line[i] == '#') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line = trim(line.substr(0, i));
        break;
      }
    }
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!seen.insert("[" + section + "]").second) {
        throw ConfigError(where + "duplicate section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    const std::string key(trim(line.substr(0, eq)));
    const std::string full = section + "." + key;
    if (!seen.insert(full).second) throw ConfigError(where + "duplicate key '" + full + "'");
    try {
      apply_key(cfg, section, key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (cfg.layers.empty()) throw ConfigError("model.layers is required");
  cfg.layers = layer_list_string(cfg.layer_specs());
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string serialize_config(const ExperimentConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const DataConfig& d = cfg.data;
  std::ostringstream os;
  os << "[experiment]\n"
     << "name = " << cfg.name << '\n'
     << "seed = " << t.seed << '\n'
     << "deterministic = " << (t.deterministic ? "true" : "false") << '\n'
     << "out_dir = " << cfg.out_dir << "\n\n";
  os << "[model]\n"
     << "input = " << input_shape_string(cfg.input_shape) << '\n'
     << "layers = " << cfg.layers << "\n\n";
  os << "[train]\n"
     << "optimizer = " << optimizer_name(t.optimizer) << '\n'
     << "learning_rate = " << format_double(t.learning_rate) << '\n'
     << "lr_schedule = " << schedule_string(t.lr_schedule) << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "epochs = " << t.epochs << '\n'
     << "projection = " << t.projection.to_string() << '\n'
     << "eval_every = " << t.eval_every << '\n'
     << "checkpoint_every = " << cfg.checkpoint_every << "\n\n";
  os << "[clip]\n"
     << "enabled = " << (t.clip.enabled ? "true" : "false") << '\n'
     << "factor = " << format_double(t.clip.global_factor) << '\n'
     << "schedule = " << schedule_string(t.clip.schedule) << "\n\n";
  os << "[eval]\n"
     << "specs = " << join(cfg.eval_specs, [](const ProjectionSpec& s) { return s.to_string(); })
     << "\n\n";
  os << "[data]\n"
     << "source = " << d.source << '\n'
     << "kind = " << synthetic_kind_name(d.kind) << '\n'
     << "classes = " << d.classes << '\n'
     << "train_size = " << d.train_size << '\n'
     << "test_size = " << d.test_size << '\n'
     << "noise = " << format_double(d.noise) << '\n'
     << "size = " << d.size << '\n'
     << "seed = " << d.seed << '\n'
     << "train_files = " << input_list(d.train_files) << '\n'
     << "test_files = " << input_list(d.test_files) << '\n'
     << "preprocess = " << (d.preprocess == Preprocessing::kGcn ? "gcn" : "none") << '\n'
     << "whitening = " << d.whitening << '\n';
  for (const NamedSweep& s : cfg.sweeps) {
    os << "\n[sweep." << s.name << "]\n"
       << "distortion = " << s.distortion.to_string() << '\n'
       << "grid = " << join(s.grid, [](double v) { return format_double(v); }) << '\n'
       << "trials = " << s.trials << '\n';
  }
  return os.str();
}

void set_config_value(ExperimentConfig& cfg, std::string_view dotted_key, std::string_view value) {
  const auto dot = dotted_key.rfind('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == dotted_key.size()) {
    throw ConfigError("override key must be section.key, got '" + std::string(dotted_key) + "'");
  }
  ExperimentConfig updated = cfg;
  apply_key(updated, dotted_key.substr(0, dot), dotted_key.substr(dot + 1), trim(value));
  updated.layers = layer_list_string(updated.layer_specs());
  updated.validate();
  cfg = std::move(updated);
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(serialize_config(cfg))); }

namespace {

struct PresetTraining {
  const char* name;
  const char* projection;
  bool clip;
};

constexpr PresetTraining kPresets[] = {
    {"tr-none-nc", "none", false},          {"tr-none-c", "none", true},
    {"tr-sign-c", "sign", true},            {"tr-stoch-c", "stoch", true},
    {"tr-power-c", "power:sample", true},   {"tr-stochm-c", "stochm:gamma=0.5", true},
    {"tr-stochm3-c", "stochm3:gamma=0.5", true},
};

// Six 3x3 convolutions (stride 2 every second one in place of pooling) and two
// fully connected layers, each followed by BatchNorm.
constexpr const char* kCifarLayers =
    "conv:3-3-3-128:s1:p1, bn, relu, conv:3-3-128-128:s2:p1, bn, relu, "
    "conv:3-3-128-256:s1:p1, bn, relu, conv:3-3-256-256:s2:p1, bn, relu, "
    "conv:3-3-256-512:s1:p1, bn, relu, conv:3-3-512-512:s2:p1, bn, relu, "
    "flatten, fc:8192-1024, bn, relu, fc:1024-10, bn";

constexpr const char* kToyLayers =
    "conv:3-3-1-8:s1:p1, bn, relu, conv:3-3-8-16:s2:p1, bn, relu, flatten, fc:256-4, bn";

void add_default_sweeps(ExperimentConfig& cfg) {
  for (const char* kind : {"addnorm", "multunif", "power"}) {
    NamedSweep s;
    s.name = kind;
    s.distortion = parse_projection(kind);
    s.grid = default_grid(s.distortion.kind);
    cfg.sweeps.push_back(std::move(s));
  }
}

}  // namespace

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : kPresets) names.emplace_back(p.name);
  for (const auto& p : kPresets) names.push_back(std::string("toy-") + p.name);
  return names;
}

ExperimentConfig preset_config(std::string_view name) {
  const bool toy = name.starts_with("toy-");
  const std::string_view base = toy ? name.substr(4) : name;
  const PresetTraining* preset = nullptr;
  for (const auto& p : kPresets) {
    if (base == p.name) preset = &p;
  }
  if (!preset) throw ConfigError("unknown preset '" + std::string(name) + "'");

  ExperimentConfig cfg;
  cfg.name = std::string(name);
  cfg.out_dir = "out/" + std::string(name);
  cfg.train.optimizer = Optimizer::kAdam;
  cfg.train.learning_rate = 0.003;
  cfg.train.batch_size = 50;
  cfg.train.projection = parse_projection(preset->projection);
  cfg.train.clip.enabled = preset->clip;
  cfg.train.clip.global_factor = 0.5;
  cfg.train.eval_every = 2;
  cfg.eval_specs = {parse_projection("none"), parse_projection("sign"), parse_projection("round")};
  if (toy) {
    cfg.input_shape = {1, 8, 8};
    cfg.layers = kToyLayers;
    cfg.train.epochs = 5;
    cfg.data.source = "synthetic";
    cfg.data.kind = SyntheticKind::kStripes;
    cfg.data.classes = 4;
  } else {
    cfg.input_shape = {3, 32, 32};
    cfg.layers = kCifarLayers;
    cfg.train.epochs = 500;
    cfg.data.source = "cifar10";
    cfg.data.preprocess = Preprocessing::kGcn;
    for (int i = 1; i <= 5; ++i) {
      cfg.data.train_files.push_back("data/cifar-10-batches-bin/data_batch_" + std::to_string(i) + ".bin");
    }
    cfg.data.test_files = {"data/cifar-10-batches-bin/test_batch.bin"};
  }
  add_default_sweeps(cfg);
  cfg.layers = layer_list_string(cfg.layer_specs());
  cfg.validate();
  return cfg;
}

}  // namespace wproj
