#include "cobnet/model.hpp"

#include "cobnet/error.hpp"
#include "cobnet/ops.hpp"
#include "cobnet/tensor_io.hpp"

namespace cobnet {

std::string ablation_name(Ablation mode) {
  switch (mode) {
    case Ablation::full: return "full";
    case Ablation::mbm_only: return "mbm_only";
    case Ablation::mbm_s: return "mbm_s";
    case Ablation::mbm_o: return "mbm_o";
  }
  return "full";
}

Ablation parse_ablation(const std::string& name) {
  if (name == "full") return Ablation::full;
  if (name == "mbm_only") return Ablation::mbm_only;
  if (name == "mbm_s") return Ablation::mbm_s;
  if (name == "mbm_o") return Ablation::mbm_o;
  throw ConfigError("unknown ablation mode '" + name + "'");
}

CobNet::CobNet(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (config_.pyramid.empty()) throw ConfigError("pyramid needs at least one scale");
  for (std::size_t i = 1; i < config_.pyramid.size(); ++i) {
    if (config_.pyramid[i] > config_.pyramid[i - 1]) throw ConfigError("pyramid sizes must be non-increasing");
  }
  if (config_.grid < 1 || config_.grid > config_.pyramid.back()) {
    throw ConfigError("background grid " + std::to_string(config_.grid) + " must not exceed the smallest scale " +
                      std::to_string(config_.pyramid.back()));
  }
  // Every variant draws the full parameter set in the same order so shared
  // parameters start identical across ablations; unused ones are dropped.
  const std::size_t c = config_.channels;
  Rng rng(mix_seed(seed, 0xC0B));
  for (std::size_t i = 0; i < config_.pyramid.size(); ++i) {
    ScaleParams s;
    s.fuse_plus = ConvLayer::init(c, 2 * c + 1, 1, rng);
    s.fuse_minus = ConvLayer::init(c, 2 * c + 1, 1, rng);
    s.head = HeadParams::init(c, rng);
    if (config_.ablation == Ablation::mbm_o) s.fuse_minus = ConvLayer{};
    scales_.push_back(std::move(s));
  }
  attention_ = AttentionParams::init(c, rng);
  if (config_.ablation != Ablation::full) attention_ = AttentionParams{};
  classifier_ = ClassifierParams::init(c, rng);
}

ParameterList CobNet::parameters() const {
  ParameterList list;
  for (std::size_t i = 0; i < scales_.size(); ++i) {
    const std::string prefix = "mbm.scale" + std::to_string(i);
    append_conv(list, prefix + ".fuse_plus", scales_[i].fuse_plus);
    if (scales_[i].fuse_minus.defined()) append_conv(list, prefix + ".fuse_minus", scales_[i].fuse_minus);
    append_conv(list, prefix + ".head.conv1", scales_[i].head.conv1);
    append_conv(list, prefix + ".head.conv2", scales_[i].head.conv2);
    append_conv(list, prefix + ".head.out", scales_[i].head.out);
  }
  if (attention_.conv1.defined()) {
    append_conv(list, "cam.attention.conv1", attention_.conv1);
    append_conv(list, "cam.attention.conv2", attention_.conv2);
  }
  append_conv(list, "cam.classifier.conv1", classifier_.conv1);
  append_conv(list, "cam.classifier.conv2", classifier_.conv2);
  append_conv(list, "cam.classifier.conv3", classifier_.conv3);
  append_conv(list, "cam.classifier.out", classifier_.out);
  return list;
}

ForwardResult CobNet::forward(const EpisodeInput& input) const {
  if (input.shots.empty()) throw UsageError("episode input has no support shots");
  const FeatureMap& query = input.query;
  if (query.rank() != 3 || query.dim(0) != config_.channels) {
    throw DimensionError("query features " + shape_string(query.shape()) + " do not have " +
                         std::to_string(config_.channels) + " channels");
  }
  const std::size_t h = query.dim(1), w = query.dim(2);
  const std::size_t smallest = config_.pyramid.back();

  // Prototypes and the align mask are constants of the graph.
  ObjectPrototype object;
  std::vector<FeatureMap> masked;
  if (input.weak) {
    object = proto::weak_kshot_prototype(input.shots);
    for (const auto& s : input.shots) masked.push_back(s.features);
  } else {
    object = proto::kshot_prototype(input.shots);
    for (const auto& s : input.shots) masked.push_back(prior::masked_support_features(s.features, s.mask));
  }
  ForwardResult result;
  result.align = prior::align_mask(query, masked);

  const bool background_branch = config_.ablation != Ablation::mbm_o;
  BackgroundGrid background;
  if (background_branch) {
    background = config_.ablation == Ablation::mbm_s ? proto::support_background_grid(input.shots, config_.grid, smallest)
                                                     : proto::background_grid(query, config_.grid, smallest);
  }

  const ScalePyramid pyramid = mbm::build_pyramid(query, config_.pyramid);
  std::vector<Tensor> plus, minus;
  for (std::size_t i = 0; i < pyramid.sizes.size(); ++i) {
    const std::size_t k = pyramid.sizes[i];
    const Tensor mask_k = prior::downsample_mask(result.align, k);
    const Tensor fused = mbm::fuse_plus(pyramid.levels[i], mbm::expand_object(object, k), mask_k, scales_[i].fuse_plus);
    result.intermediate.push_back(mbm::intermediate_prediction(fused, scales_[i].head));
    plus.push_back(fused);
    if (background_branch) {
      minus.push_back(mbm::fuse_minus(pyramid.levels[i], mbm::expand_background(background, k), mask_k,
                                      scales_[i].fuse_minus));
    }
  }
  result.object_features = mbm::aggregate(plus, h, w);
  Tensor logits;
  if (background_branch) {
    result.background_features = mbm::aggregate(minus, h, w);
    if (config_.ablation == Ablation::full) {
      result.attention = cam::attention(result.object_features, result.background_features, attention_);
      auto [object_att, background_att] =
          cam::apply_attention(result.object_features, result.background_features, result.attention);
      logits = cam::classify(object_att, background_att, classifier_);
    } else {
      logits = cam::classify(result.object_features, result.background_features, classifier_);
    }
  } else {
    logits = cam::classify(result.object_features, result.object_features, classifier_);
  }
  const std::size_t out_h = input.out_height ? input.out_height : h;
  const std::size_t out_w = input.out_width ? input.out_width : w;
  result.logits = bilinear_resize(logits, out_h, out_w);
  return result;
}

void CobNet::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& p : parameters()) save_tensor(dir / (p.name + ".cbt"), p.tensor);
}

void CobNet::load(const std::filesystem::path& dir) {
  for (auto& p : parameters()) {
    const auto path = dir / (p.name + ".cbt");
    if (!std::filesystem::exists(path)) throw MissingArtifactError("missing parameter file " + path.string());
    const Tensor stored = load_tensor(path);
    if (stored.shape() != p.tensor.shape()) {
      throw FormatError(path.string() + ": shape " + shape_string(stored.shape()) + " does not match " +
                        shape_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
}

EpisodeInput prepare_input(const Backbone& backbone, const Episode& episode) {
  EpisodeInput input;
  input.query = backbone.extract(episode.query_image);
  const std::size_t h = input.query.dim(1), w = input.query.dim(2);
  for (const auto& pair : episode.support) {
    input.shots.push_back({backbone.extract(pair.image), proto::resize_mask(pair.mask, h, w)});
  }
  input.out_height = episode.query_mask.height;
  input.out_width = episode.query_mask.width;
  input.weak = episode.weak;
  return input;
}

Mask Segmenter::predict(const Episode& episode) const {
  if (!backbone || !model) throw UsageError("segmenter is missing its backbone or model");
  Graph::NoGrad no_grad;
  return cam::predict_mask(model->forward(prepare_input(*backbone, episode)).logits);
}

}  // namespace cobnet
