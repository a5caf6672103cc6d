#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ecnn/tensor.hpp"

namespace ecnn {

inline constexpr std::size_t kNumTissueClasses = 3;
inline constexpr std::array<std::string_view, kNumTissueClasses> kTissueClassNames{"normal", "benign", "malignant"};

/// Case-insensitive lookup of "normal" / "benign" / "malignant".
std::size_t parse_tissue_class(std::string_view name);

/// Row-major grayscale image, values in [0, 1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

struct RoiSample {
  Tensor patch;  // [1, R, R]
  std::size_t label = 0;
  std::string source_id;
};

struct DatasetSplit {
  std::vector<RoiSample> train;
  std::vector<RoiSample> test;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;
};

/// Square ROI: center and half-side in pixel units.
struct Annotation {
  std::string image;
  long cx = 0;
  long cy = 0;
  long radius = 0;
  std::size_t label = 0;
};

/// Binary 8-bit PGM ("P5"). Header comments are allowed.
GrayImage parse_pgm(std::string_view bytes);
GrayImage load_image(const std::string& path);
std::string encode_pgm(const GrayImage& image);

/// Bilinear resampling with half-pixel centers and edge clamping.
GrayImage resize_bilinear(const GrayImage& image, std::size_t width, std::size_t height);

/// Crops [cx-r, cx+r) x [cy-r, cy+r); pixels outside the image read as 0.
/// The crop is resampled to out_resolution x out_resolution.
RoiSample extract_roi(const GrayImage& image, const Annotation& annotation, std::size_t out_resolution);

/// CSV with header `image,cx,cy,radius,label`.
std::vector<Annotation> parse_annotations(std::string_view csv);
/// Loads every annotated ROI; image paths are relative to `image_dir`.
std::vector<RoiSample> load_roi_dataset(const std::string& image_dir, const std::string& annotations_csv,
                                        std::size_t resolution);

/// Geometry of the lesion drawn into a synthetic sample.
struct SynthLesion {
  double cx = 0, cy = 0;
  double radius = 0;  // disk radius or core radius
  std::size_t spikes = 0;
};

struct SynthSample {
  RoiSample sample;
  SynthLesion lesion;
};

/// One synthetic patch: 0 = smooth background, 1 = bright circumscribed disk,
/// 2 = bright core with thin spicules. Uses only integer RNG, + - * / and sqrt,
/// so output is bit-identical on IEEE-754 platforms.
SynthSample synthesize_sample(std::uint64_t seed, std::size_t label, std::size_t index, std::size_t resolution);

/// per_class samples of each of the three classes, class-major order.
std::vector<RoiSample> synthesize_dataset(std::uint64_t seed, std::size_t per_class, std::size_t resolution);

/// Stratified split; each class contributes round(test_fraction * size) test samples.
DatasetSplit train_test_split(std::span<const RoiSample> samples, double test_fraction, std::uint64_t seed);

/// Stacks patches into [N, 1, R, R].
Tensor stack_patches(std::span<const RoiSample> samples, std::span<const std::size_t> indices);
Tensor stack_patches(std::span<const RoiSample> samples);

/// Bilinear resample of every patch to a new resolution.
std::vector<RoiSample> resample(std::span<const RoiSample> samples, std::size_t resolution);

/// Dataset cache container, magic "ENSD".
std::string encode_dataset(std::span<const RoiSample> samples);
std::vector<RoiSample> decode_dataset(std::string_view bytes);

}  // namespace ecnn
