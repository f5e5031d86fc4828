#include "cobnet/episodes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "cobnet/error.hpp"
#include "cobnet/proto.hpp"
#include "cobnet/tensor_io.hpp"

namespace cobnet {

namespace {

using Color = std::array<double, 3>;

constexpr std::array<Color, kNumClasses> kPalette{{
    {0.90, 0.15, 0.15}, {0.15, 0.75, 0.20}, {0.15, 0.30, 0.90}, {0.95, 0.85, 0.10},
    {0.85, 0.20, 0.85}, {0.10, 0.85, 0.85}, {0.95, 0.55, 0.10}, {0.55, 0.20, 0.90},
    {0.95, 0.95, 0.95}, {0.08, 0.08, 0.08}, {0.60, 0.35, 0.15}, {0.55, 0.90, 0.55},
}};

constexpr double kColorJitter = 0.08;
constexpr double kMinRadius = 8.5;
constexpr double kMaxRadius = 16.0;
// Every shape lies within this multiple of its radius from its centre.
constexpr double kShapeExtent = 1.25;
constexpr double kMinFraction = 0.02;
constexpr double kMaxFraction = 0.6;
constexpr double kMaxRotation = 15.0;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

Color random_color(Rng& rng, double lo, double hi) { return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)}; }

struct Canvas {
  std::size_t side;
  std::vector<double> rgb;  // 3×side×side

  explicit Canvas(std::size_t s) : side(s), rgb(3 * s * s, 0.0) {}
  void set(std::size_t y, std::size_t x, const Color& c) {
    for (std::size_t ch = 0; ch < 3; ++ch) rgb[(ch * side + y) * side + x] = c[ch];
  }
};

void paint_background(Canvas& canvas, std::size_t style, Rng& rng) {
  const std::size_t s = canvas.side;
  const Color c1 = random_color(rng, 0.2, 0.8);
  const Color c2 = random_color(rng, 0.2, 0.8);
  auto blend = [](const Color& a, const Color& b, double t) {
    return Color{a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
  };
  switch (static_cast<BackgroundStyle>(style)) {
    case BackgroundStyle::solid:
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) canvas.set(y, x, c1);
      break;
    case BackgroundStyle::gradient: {
      const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double dx = std::cos(theta), dy = std::sin(theta);
      const double half = 0.5 * static_cast<double>(s - 1);
      const double reach = half * (std::abs(dx) + std::abs(dy));
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          const double p = ((static_cast<double>(x) - half) * dx + (static_cast<double>(y) - half) * dy) / reach;
          canvas.set(y, x, blend(c1, c2, 0.5 * (p + 1.0)));
        }
      break;
    }
    case BackgroundStyle::noise:
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          Color c = c1;
          for (auto& v : c) v = std::clamp(v + uniform(rng, -0.25, 0.25), 0.0, 1.0);
          canvas.set(y, x, c);
        }
      break;
    case BackgroundStyle::checker: {
      const std::size_t cell = 4 + uniform_index(rng, 7);
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) canvas.set(y, x, ((y / cell + x / cell) % 2) ? c2 : c1);
      break;
    }
    case BackgroundStyle::stripes: {
      const std::size_t period = 4 + uniform_index(rng, 9);
      const std::size_t orientation = uniform_index(rng, 3);
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) {
          const std::size_t t = orientation == 0 ? y : orientation == 1 ? x : x + y;
          canvas.set(y, x, ((t / period) % 2) ? c2 : c1);
        }
      break;
    }
    case BackgroundStyle::blobs: {
      for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x) canvas.set(y, x, c1);
      const std::size_t count = 3 + uniform_index(rng, 4);
      for (std::size_t b = 0; b < count; ++b) {
        const Color c = random_color(rng, 0.2, 0.8);
        const double cx = uniform(rng, 0.0, static_cast<double>(s));
        const double cy = uniform(rng, 0.0, static_cast<double>(s));
        const double r = uniform(rng, 4.0, 12.0);
        for (std::size_t y = 0; y < s; ++y)
          for (std::size_t x = 0; x < s; ++x) {
            const double ddx = static_cast<double>(x) - cx, ddy = static_cast<double>(y) - cy;
            if (ddx * ddx + ddy * ddy <= r * r) canvas.set(y, x, c);
          }
      }
      break;
    }
  }
}

}  // namespace

std::string class_name(std::size_t class_id) {
  static const std::array<const char*, kNumClasses> names{"circle", "square",   "triangle", "diamond",
                                                          "cross",  "ring",     "hexagon",  "star",
                                                          "crescent", "corner", "bar",      "frame"};
  if (class_id >= kNumClasses) throw ValidationError("class id out of range");
  return names[class_id];
}

std::string background_name(std::size_t background_id) {
  static const std::array<const char*, kNumBackgrounds> names{"solid", "gradient", "noise", "checker", "stripes", "blobs"};
  if (background_id >= kNumBackgrounds) throw ValidationError("background id out of range");
  return names[background_id];
}

bool shape_contains(std::size_t class_id, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  const double r2 = u * u + v * v;
  switch (static_cast<ShapeClass>(class_id)) {
    case ShapeClass::circle: return r2 <= 1.0;
    case ShapeClass::square: return au <= 0.8 && av <= 0.8;
    case ShapeClass::triangle: return v <= 0.8 && v >= -0.9 && au <= 0.55 * (v + 0.9);
    case ShapeClass::diamond: return au + av <= 1.0;
    case ShapeClass::cross: return (au <= 0.3 && av <= 0.9) || (av <= 0.3 && au <= 0.9);
    case ShapeClass::ring: return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    case ShapeClass::hexagon: return av <= std::sqrt(3.0) / 2.0 && std::sqrt(3.0) * au + av <= std::sqrt(3.0);
    case ShapeClass::star: {
      const double theta = std::atan2(v, u);
      const double r = std::sqrt(r2);
      return r <= 0.62 + 0.36 * std::cos(5.0 * theta);
    }
    case ShapeClass::crescent: {
      const double du = u - 0.55;
      return r2 <= 1.0 && du * du + v * v > 0.75 * 0.75;
    }
    case ShapeClass::corner:
      return (u >= -0.8 && u <= -0.2 && v >= -0.8 && v <= 0.8) || (u >= -0.8 && u <= 0.8 && v >= 0.2 && v <= 0.8);
    case ShapeClass::bar: return u * u + (v / 0.45) * (v / 0.45) <= 1.0;
    case ShapeClass::frame: return au <= 0.85 && av <= 0.85 && !(au <= 0.45 && av <= 0.45);
  }
  return false;
}

Scene render_scene(std::size_t class_id, std::size_t background_id, std::uint64_t seed, std::size_t side) {
  if (class_id >= kNumClasses) throw ValidationError("class id out of range: " + std::to_string(class_id));
  if (background_id >= kNumBackgrounds) throw ValidationError("background id out of range: " + std::to_string(background_id));
  const double scale = static_cast<double>(side) / 64.0;
  Rng rng(mix_seed(seed, class_id * kNumBackgrounds + background_id));
  Canvas canvas(side);
  paint_background(canvas, background_id, rng);

  Color color = kPalette[class_id];
  for (auto& v : color) v = std::clamp(v + uniform(rng, -kColorJitter, kColorJitter), 0.0, 1.0);

  const double centre = 0.5 * static_cast<double>(side - 1);
  const double frame_radius = 0.5 * static_cast<double>(side) - 1.0;
  Mask mask(side, side);
  std::size_t painted = 0;
  for (int attempt = 0;; ++attempt) {
    const double r = uniform(rng, kMinRadius, kMaxRadius) * scale;
    const double reach = frame_radius - kShapeExtent * r;
    double cx = centre, cy = centre;
    do {
      cx = centre + uniform(rng, -reach, reach);
      cy = centre + uniform(rng, -reach, reach);
    } while ((cx - centre) * (cx - centre) + (cy - centre) * (cy - centre) > reach * reach);
    const double rot = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double cr = std::cos(rot), sr = std::sin(rot);
    std::fill(mask.values.begin(), mask.values.end(), 0);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x) {
        const double dx = (static_cast<double>(x) - cx) / r, dy = (static_cast<double>(y) - cy) / r;
        if (shape_contains(class_id, cr * dx + sr * dy, -sr * dx + cr * dy)) mask.at(y, x) = 1;
      }
    const double fraction = static_cast<double>(mask.count()) / static_cast<double>(mask.size());
    if ((fraction >= kMinFraction && fraction <= kMaxFraction) || attempt >= 1000) break;
  }
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x)
      if (mask.at(y, x)) {
        canvas.set(y, x, color);
        ++painted;
      }
  return {Tensor({3, side, side}, std::move(canvas.rgb)), std::move(mask), painted};
}

FoldSplit FoldSplit::standard() {
  FoldSplit split;
  for (std::size_t c = 0; c < kNumClasses; ++c) split.fold_of_class_[c] = c / kClassesPerFold;
  return split;
}

std::vector<std::size_t> FoldSplit::test_classes(std::size_t fold) const {
  if (fold >= kNumFolds) throw ConfigError("fold out of range: " + std::to_string(fold));
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (fold_of_class_[c] == fold) out.push_back(c);
  return out;
}

std::vector<std::size_t> FoldSplit::train_classes(std::size_t test_fold) const {
  if (test_fold >= kNumFolds) throw ConfigError("fold out of range: " + std::to_string(test_fold));
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    if (fold_of_class_[c] != test_fold) out.push_back(c);
  return out;
}

std::size_t FoldSplit::fold_of(std::size_t class_id) const {
  if (class_id >= kNumClasses) throw ValidationError("class id out of range");
  return fold_of_class_[class_id];
}

Augmented apply_augmentation(const Tensor& image, const Mask& mask, bool flip, double angle_degrees) {
  const std::size_t h = image.dim(1), w = image.dim(2), c = image.dim(0);
  if (mask.height != h || mask.width != w) throw DimensionError("augmentation: image and mask sizes differ");
  const double cy = 0.5 * static_cast<double>(h - 1), cx = 0.5 * static_cast<double>(w - 1);
  const double theta = angle_degrees * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const auto in = image.data();
  std::vector<double> out(in.size(), 0.0);
  Mask out_mask(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const long sx = std::lround(cx + ct * dx + st * dy);
      const long sy = std::lround(cy - st * dx + ct * dy);
      if (sx < 0 || sy < 0 || sx >= static_cast<long>(w) || sy >= static_cast<long>(h)) continue;
      // flip is applied first, so the pre-flip source column is mirrored
      const std::size_t src_x = flip ? w - 1 - static_cast<std::size_t>(sx) : static_cast<std::size_t>(sx);
      const std::size_t src_y = static_cast<std::size_t>(sy);
      for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + y) * w + x] = in[(ch * h + src_y) * w + src_x];
      out_mask.at(y, x) = mask.at(src_y, src_x);
    }
  return {Tensor(image.shape(), std::move(out)), std::move(out_mask), flip, angle_degrees};
}

Augmented augment(const Tensor& image, const Mask& mask, Rng& rng) {
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  const double angle = uniform(rng, -kMaxRotation, kMaxRotation);
  return apply_augmentation(image, mask, flip, angle);
}

namespace {

SupportPair build_pair(std::size_t class_id, const SceneSpec& spec, std::size_t side) {
  Scene scene = render_scene(class_id, spec.background, spec.seed, side);
  if (!spec.flipped && spec.angle_degrees == 0.0) return {std::move(scene.image), std::move(scene.mask), spec};
  Augmented a = apply_augmentation(scene.image, scene.mask, spec.flipped, spec.angle_degrees);
  return {std::move(a.image), std::move(a.mask), spec};
}

SceneSpec draw_spec(Rng& rng, std::size_t background, bool augmenting) {
  SceneSpec spec;
  spec.background = background;
  spec.seed = rng();
  if (augmenting) {
    spec.flipped = std::bernoulli_distribution(0.5)(rng);
    spec.angle_degrees = uniform(rng, -kMaxRotation, kMaxRotation);
  }
  return spec;
}

}  // namespace

Episode sample_episode(const FoldSplit& split, std::size_t fold, EpisodeRole role, std::size_t shots, Rng& rng,
                       const SamplerConfig& config) {
  if (shots < 1) throw ConfigError("episodes need at least one support shot");
  const auto classes = role == EpisodeRole::test ? split.test_classes(fold) : split.train_classes(fold);
  for (std::size_t attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
    Episode ep;
    ep.class_id = classes[uniform_index(rng, classes.size())];
    ep.fold = split.fold_of(ep.class_id);
    const std::size_t query_bg = uniform_index(rng, kNumBackgrounds);
    ep.query_spec = draw_spec(rng, query_bg, config.augment);
    bool ok = true;
    for (std::size_t s = 0; s < shots; ++s) {
      const std::size_t bg = config.matched_backgrounds ? query_bg : uniform_index(rng, kNumBackgrounds);
      SupportPair pair = build_pair(ep.class_id, draw_spec(rng, bg, config.augment), config.side);
      if (proto::resize_mask(pair.mask, config.feature_side, config.feature_side).count() == 0) ok = false;
      ep.support.push_back(std::move(pair));
    }
    if (!ok) continue;
    SupportPair query = build_pair(ep.class_id, ep.query_spec, config.side);
    ep.query_image = std::move(query.image);
    ep.query_mask = std::move(query.mask);
    return ep;
  }
  throw Error("could not sample an episode with non-empty support masks in " + std::to_string(kMaxSampleAttempts) +
              " attempts");
}

Episode sample_indexed_episode(const FoldSplit& split, std::size_t fold, EpisodeRole role, std::size_t shots,
                               std::uint64_t seed, std::size_t index, const SamplerConfig& config) {
  const std::uint64_t stream = mix_seed(mix_seed(seed, fold * 2 + (role == EpisodeRole::test ? 1 : 0)), index);
  Rng rng(stream);
  return sample_episode(split, fold, role, shots, rng, config);
}

Episode make_weak(Episode episode) {
  for (auto& pair : episode.support) pair.mask = Mask::ones(pair.mask.height, pair.mask.width);
  episode.weak = true;
  return episode;
}

namespace {

void write_spec(std::ostream& os, const SceneSpec& spec) {
  os << spec.background << ',' << spec.seed << ',' << (spec.flipped ? 1 : 0) << ',';
  std::ostringstream angle;
  angle.precision(17);
  angle << spec.angle_degrees;
  os << angle.str();
}

SceneSpec parse_spec(const std::string& text) {
  SceneSpec spec;
  std::istringstream is(text);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (fields.size() != 4) throw FormatError("malformed scene spec '" + text + "'");
  try {
    spec.background = std::stoul(fields[0]);
    spec.seed = std::stoull(fields[1]);
    spec.flipped = fields[2] == "1";
    spec.angle_degrees = std::stod(fields[3]);
  } catch (const std::exception&) {
    throw FormatError("malformed scene spec '" + text + "'");
  }
  return spec;
}

}  // namespace

std::string manifest_line(const Episode& episode) {
  std::ostringstream os;
  os << "class=" << episode.class_id << " fold=" << episode.fold << " weak=" << (episode.weak ? 1 : 0)
     << " shots=" << episode.support.size() << " query=";
  write_spec(os, episode.query_spec);
  os << " support=";
  for (std::size_t i = 0; i < episode.support.size(); ++i) {
    if (i) os << '|';
    write_spec(os, episode.support[i].spec);
  }
  return os.str();
}

Episode replay_episode(const std::string& line, std::size_t side) {
  std::istringstream is(line);
  std::string token;
  Episode ep;
  std::vector<SceneSpec> support;
  bool have_query = false;
  bool have_class = false;
  while (is >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError("malformed manifest token '" + token + "'");
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "class") {
      ep.class_id = std::stoul(value);
      have_class = true;
    } else if (key == "fold") {
      ep.fold = std::stoul(value);
    } else if (key == "weak") {
      ep.weak = value == "1";
    } else if (key == "shots") {
      // implied by the support list
    } else if (key == "query") {
      ep.query_spec = parse_spec(value);
      have_query = true;
    } else if (key == "support") {
      std::istringstream ss(value);
      std::string part;
      while (std::getline(ss, part, '|')) support.push_back(parse_spec(part));
    } else {
      throw FormatError("unknown manifest key '" + key + "'");
    }
  }
  if (!have_class || !have_query || support.empty()) throw FormatError("incomplete manifest line");
  for (const auto& spec : support) ep.support.push_back(build_pair(ep.class_id, spec, side));
  SupportPair query = build_pair(ep.class_id, ep.query_spec, side);
  ep.query_image = std::move(query.image);
  ep.query_mask = std::move(query.mask);
  if (ep.weak) ep = make_weak(std::move(ep));
  return ep;
}

Tensor mask_to_tensor(const Mask& mask) {
  return Tensor({1, mask.height, mask.width}, std::vector<double>(mask.values.begin(), mask.values.end()));
}

std::string export_episode(const std::filesystem::path& dir, const std::string& name, const Episode& episode) {
  std::filesystem::create_directories(dir);
  save_tensor(dir / (name + "_query.cbt"), episode.query_image);
  save_tensor(dir / (name + "_query_mask.cbt"), mask_to_tensor(episode.query_mask));
  for (std::size_t i = 0; i < episode.support.size(); ++i) {
    save_tensor(dir / (name + "_support" + std::to_string(i) + ".cbt"), episode.support[i].image);
    save_tensor(dir / (name + "_support" + std::to_string(i) + "_mask.cbt"), mask_to_tensor(episode.support[i].mask));
  }
  const std::string line = manifest_line(episode);
  std::ofstream manifest(dir / "manifest.txt", std::ios::app);
  manifest << name << ' ' << line << '\n';
  return line;
}

}  // namespace cobnet
