#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cobnet/layers.hpp"
#include "cobnet/mask.hpp"
#include "cobnet/tensor.hpp"

namespace cobnet {

// Synthetic "Shapes-12" episodic data: twelve shape classes, four folds of
// three, rendered over six background styles.

inline constexpr std::size_t kNumClasses = 12;
inline constexpr std::size_t kNumFolds = 4;
inline constexpr std::size_t kClassesPerFold = 3;
inline constexpr std::size_t kNumBackgrounds = 6;

enum class ShapeClass : std::size_t {
  circle, square, triangle, diamond, cross, ring, hexagon, star, crescent, corner, bar, frame
};
enum class BackgroundStyle : std::size_t { solid, gradient, noise, checker, stripes, blobs };

std::string class_name(std::size_t class_id);
std::string background_name(std::size_t background_id);

struct Scene {
  Tensor image;  // 3×side×side, values in [0, 1]
  Mask mask;
  std::size_t shape_pixels = 0;  // pixels painted by the shape rasteriser
};

/// Deterministic single-object scene.
Scene render_scene(std::size_t class_id, std::size_t background_id, std::uint64_t seed, std::size_t side = 64);

/// Shape membership test in the shape's local frame (u, v ∈ [−1, 1] at unit radius).
bool shape_contains(std::size_t class_id, double u, double v);

class FoldSplit {
 public:
  // Fold f holds classes {3f, 3f+1, 3f+2}.
  static FoldSplit standard();

  std::vector<std::size_t> test_classes(std::size_t fold) const;
  std::vector<std::size_t> train_classes(std::size_t test_fold) const;
  std::size_t fold_of(std::size_t class_id) const;

 private:
  std::array<std::size_t, kNumClasses> fold_of_class_{};
};

enum class EpisodeRole { train, test };

/// Everything needed to re-render one image of an episode.
struct SceneSpec {
  std::size_t background = 0;
  std::uint64_t seed = 0;
  bool flipped = false;
  double angle_degrees = 0.0;
};

struct SupportPair {
  Tensor image;
  Mask mask;
  SceneSpec spec;
};

struct Episode {
  std::vector<SupportPair> support;
  Tensor query_image;
  Mask query_mask;
  SceneSpec query_spec;
  std::size_t class_id = 0;
  std::size_t fold = 0;
  bool weak = false;
};

struct SamplerConfig {
  std::size_t side = 64;
  std::size_t feature_side = 16;  // resolution at which support masks must stay non-empty
  bool matched_backgrounds = false;
  bool augment = false;
};

inline constexpr std::size_t kMaxSampleAttempts = 100;

Episode sample_episode(const FoldSplit& split, std::size_t fold, EpisodeRole role, std::size_t shots, Rng& rng,
                       const SamplerConfig& config);

/// Episode `index` of a seeded stream; independent of every other index.
Episode sample_indexed_episode(const FoldSplit& split, std::size_t fold, EpisodeRole role, std::size_t shots,
                               std::uint64_t seed, std::size_t index, const SamplerConfig& config);

struct Augmented {
  Tensor image;
  Mask mask;
  bool flipped = false;
  double angle_degrees = 0.0;
};

/// Horizontal flip with probability 0.5, then a uniform rotation in [−15°, 15°].
Augmented augment(const Tensor& image, const Mask& mask, Rng& rng);

/// Deterministic flip-then-rotate about the image centre, nearest-neighbour
/// resampling; samples falling outside the frame become 0 in image and mask.
Augmented apply_augmentation(const Tensor& image, const Mask& mask, bool flip, double angle_degrees);

Episode make_weak(Episode episode);

/// One line: class, fold, weak flag and the scene specs, for exact replay.
std::string manifest_line(const Episode& episode);
Episode replay_episode(const std::string& line, std::size_t side = 64);

/// Writes the episode images and masks as CBT1 tensors under `dir` using the
/// prefix `name`, and returns its manifest line.
std::string export_episode(const std::filesystem::path& dir, const std::string& name, const Episode& episode);

Tensor mask_to_tensor(const Mask& mask);

}  // namespace cobnet
