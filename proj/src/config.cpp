#include "cobnet/config.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cobnet/error.hpp"

namespace cobnet {

SamplerConfig RunConfig::sampler() const {
  SamplerConfig s;
  s.side = image_side;
  s.feature_side = image_side / backbone.downsample;
  s.matched_backgrounds = matched_backgrounds;
  return s;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("invalid non-negative integer for '" + key + "': '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("invalid unsigned integer for '" + key + "': '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for '" + key + "': '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("invalid boolean for '" + key + "': '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::istringstream is(v);
  std::string part;
  while (std::getline(is, part, ',')) out.push_back(to_size(key, trim(part)));
  if (out.empty()) throw ConfigError("empty list for '" + key + "'");
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "seed") c.train.seed = to_u64(key, v);
  else if (key == "lr") c.train.base_lr = to_double(key, v);
  else if (key == "momentum") c.train.momentum = to_double(key, v);
  else if (key == "poly_power") c.train.poly_power = to_double(key, v);
  else if (key == "epochs") c.train.epochs = to_size(key, v);
  else if (key == "iterations_per_epoch") c.train.iterations_per_epoch = to_size(key, v);
  else if (key == "batch_size") c.train.batch_size = to_size(key, v);
  else if (key == "train_shots") c.train.shots = to_size(key, v);
  else if (key == "train_weak") c.train.weak = to_bool(key, v);
  else if (key == "augment") c.train.augment = to_bool(key, v);
  else if (key == "ablation") c.train.model.ablation = parse_ablation(v);
  else if (key == "channels") {
    c.train.model.channels = to_size(key, v);
    c.backbone.channels = c.train.model.channels;
  } else if (key == "pyramid") c.train.model.pyramid = to_sizes(key, v);
  else if (key == "grid") c.train.model.grid = to_size(key, v);
  else if (key == "backbone_seed") c.backbone.seed = to_u64(key, v);
  else if (key == "backbone_layers") c.backbone.layers = to_size(key, v);
  else if (key == "downsample") c.backbone.downsample = to_size(key, v);
  else if (key == "image_side") c.image_side = to_size(key, v);
  else if (key == "matched_backgrounds") c.matched_backgrounds = to_bool(key, v);
  else if (key == "shots" || key == "k") c.shots = to_size(key, v);
  else if (key == "weak") c.weak = to_bool(key, v);
  else if (key == "episodes") c.episodes = to_size(key, v);
  else if (key == "eval_seed") c.eval_seed = to_u64(key, v);
  else if (key == "fold") {
    try {
      c.fold = std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError("invalid fold '" + v + "'");
    }
    if (c.fold < -1 || c.fold >= static_cast<int>(kNumFolds)) throw ConfigError("fold must be -1 or 0..3");
  } else if (key == "threads") c.threads = std::max<std::size_t>(1, to_size(key, v));
  else if (key == "out_dir") c.out_dir = v;
  else throw ConfigError("unknown configuration key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream is(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    apply_setting(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  os << "seed = " << c.train.seed << '\n'
     << "lr = " << fmt_double(c.train.base_lr) << '\n'
     << "momentum = " << fmt_double(c.train.momentum) << '\n'
     << "poly_power = " << fmt_double(c.train.poly_power) << '\n'
     << "epochs = " << c.train.epochs << '\n'
     << "iterations_per_epoch = " << c.train.iterations_per_epoch << '\n'
     << "batch_size = " << c.train.batch_size << '\n'
     << "train_shots = " << c.train.shots << '\n'
     << "train_weak = " << (c.train.weak ? 1 : 0) << '\n'
     << "augment = " << (c.train.augment ? 1 : 0) << '\n'
     << "ablation = " << ablation_name(c.train.model.ablation) << '\n'
     << "channels = " << c.train.model.channels << '\n'
     << "pyramid = " << list(c.train.model.pyramid) << '\n'
     << "grid = " << c.train.model.grid << '\n'
     << "backbone_seed = " << c.backbone.seed << '\n'
     << "backbone_layers = " << c.backbone.layers << '\n'
     << "downsample = " << c.backbone.downsample << '\n'
     << "image_side = " << c.image_side << '\n'
     << "matched_backgrounds = " << (c.matched_backgrounds ? 1 : 0) << '\n'
     << "shots = " << c.shots << '\n'
     << "weak = " << (c.weak ? 1 : 0) << '\n'
     << "episodes = " << c.episodes << '\n'
     << "eval_seed = " << c.eval_seed << '\n'
     << "fold = " << c.fold << '\n'
     << "threads = " << c.threads << '\n'
     << "out_dir = " << c.out_dir << '\n';
  return os.str();
}

void save_checkpoint(const std::filesystem::path& dir, const RunConfig& config, std::size_t fold, const CobNet& model) {
  std::filesystem::create_directories(dir);
  model.save(dir);
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  if (!out) throw FormatError("cannot write checkpoint manifest in " + dir.string());
  out << "# cobnet checkpoint\n";
  out << "@fold " << fold << '\n';
  for (const auto& p : model.parameters()) {
    out << "@param " << p.name << ' ' << shape_string(p.tensor.shape()) << '\n';
  }
  out << to_text(config);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest = dir / "manifest.txt";
  std::ifstream in(manifest);
  if (!in) throw MissingArtifactError("no checkpoint at " + dir.string());
  std::string line, config_text;
  std::size_t fold = 0;
  bool have_fold = false;
  std::vector<std::pair<std::string, std::string>> params;
  while (std::getline(in, line)) {
    if (line.rfind("@fold ", 0) == 0) {
      fold = std::stoul(line.substr(6));
      have_fold = true;
    } else if (line.rfind("@param ", 0) == 0) {
      std::istringstream is(line.substr(7));
      std::string name, shape;
      is >> name >> shape;
      params.emplace_back(name, shape);
    } else {
      config_text += line + '\n';
    }
  }
  if (!have_fold) throw FormatError(manifest.string() + ": missing @fold line");
  RunConfig config = parse_config(config_text);
  CobNet model(config.train.model, 0);
  const auto expected = model.parameters();
  if (expected.size() != params.size()) throw FormatError(manifest.string() + ": parameter list does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != expected[i].name || params[i].second != shape_string(expected[i].tensor.shape())) {
      throw FormatError(manifest.string() + ": unexpected parameter " + params[i].first);
    }
  }
  model.load(dir);
  return {std::move(config), fold, std::move(model)};
}

std::string model_digest(const CobNet& model) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& p : model.parameters()) {
    for (double v : p.tensor.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xFFu;
        h *= 1099511628211ull;
      }
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace cobnet
