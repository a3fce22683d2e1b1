#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fsce/rng.hpp"
#include "fsce/tensor.hpp"

namespace fsce {

// Single-channel image with values in [0, 1], row-major.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<float> px;

  Image() = default;
  Image(int height, int width, float fill = 0.0f)
      : h(height), w(width), px(static_cast<std::size_t>(height) * width, fill) {}
  float& at(int i, int j) { return px[static_cast<std::size_t>(i) * w + j]; }
  float at(int i, int j) const { return px[static_cast<std::size_t>(i) * w + j]; }
  bool operator==(const Image&) const = default;
};

// Target geometry, one per class id in this order.
enum class ShapeFamily { bar, l_shape, disk, cross, ring, t_shape, triangle, double_bar };
constexpr int kMaxClasses = 8;
std::string to_string(ShapeFamily f);

struct SceneConfig {
  int classes = 4;
  int size = 64;
  double looks = 1.0;
  std::uint64_t seed = 1;
  double background = 0.2;
  double target = 0.8;
  // Target pose: rotation is uniform over the full circle, the center moves by
  // up to max_shift * size along each axis, and the scale varies by
  // +-scale_jitter around 1.
  double max_shift = 0.15;
  double scale_jitter = 0.15;

  void validate() const;
};

struct SceneSample {
  Image clean;
  std::vector<std::uint8_t> noisy;  // size*size quantized pixels
};

// Clean scene for (class_id, index) followed by L-look speckle. The sample
// draws from Rng(hash_seed(seed, class_id, index)) only, so any sample can be
// generated alone.
SceneSample generate_sample(const SceneConfig& cfg, int class_id, int index);
Image render_clean(const SceneConfig& cfg, int class_id, Rng& rng);
// clip(clean * Gamma(L, 1/L), 0, 1), quantized to round(255 v).
std::vector<std::uint8_t> apply_speckle(const Image& clean, double looks, Rng& rng);

struct Dataset {
  int height = 0;
  int width = 0;
  int num_classes = 0;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;  // count * height * width

  std::size_t count() const { return labels.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(height) * width; }
  Image image(std::size_t i) const;
  bool operator==(const Dataset&) const = default;
};

// per_class samples of every class, interleaved by index: sample
// i*classes + c is (class c, index i).
Dataset generate_dataset(const SceneConfig& cfg, int per_class);

// SDS1 layout, little-endian: "SDS1" | u32 count | u32 height | u32 width |
// u32 num_classes | count x { u8 label | height*width u8 pixels }.
std::vector<std::uint8_t> encode_sds1(const Dataset& d);
Dataset decode_sds1(const std::vector<std::uint8_t>& bytes);
void write_sds1(const std::string& path, const Dataset& d);
Dataset read_sds1(const std::string& path);

struct TeacherAugConfig {
  double hflip_p = 0.5;
  double vflip_p = 0.5;
  double rotation_deg = 15.0;
  double translate_px = 4.0;
  double shear_deg = 5.0;
  double perspective_p = 0.3;
  double perspective = 0.05;  // max corner displacement as a fraction of size
  double erase_p = 0.25;
  double erase_area = 0.05;   // fraction of H*W
  double erase_value = 0.0;
};

struct StudentAugConfig {
  double crop_scale_min = 0.8;  // area fraction of the random crop
  double crop_scale_max = 1.0;
  double blur_p = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 1.0;
  // Identity on single-channel input; the draw is still made.
  double grayscale_p = 0.2;
};

struct PreprocessConfig {
  int resize = 0;  // 0 keeps the input size
  int crop = 0;    // center crop side; 0 keeps the resized size
};

struct AugmenterConfig {
  TeacherAugConfig teacher;
  StudentAugConfig student;
  PreprocessConfig preprocess;
};

enum class View { teacher, student };

Image augment(View view, const Image& img, const AugmenterConfig& cfg, Rng& rng);
Image preprocess(const Image& img, const PreprocessConfig& cfg);

// Building blocks, exposed for tests.
Image resize_bilinear(const Image& img, int out_h, int out_w);
Image center_crop(const Image& img, int side);
Image flip_horizontal(const Image& img);
Image flip_vertical(const Image& img);
// Rotation (deg), translation (px) and x-shear (deg) about the image center;
// uncovered pixels are filled with 0.
Image affine(const Image& img, double rotation_deg, double tx, double ty, double shear_deg);
// Source-corner offsets (dx, dy) in pixels for the corners TL, TR, BR, BL.
Image perspective(const Image& img, const std::array<std::array<double, 2>, 4>& corner_offsets);
// One axis-aligned rectangle of round(area_frac*H*W) pixels (up to rounding of
// its sides) set to value. Returns the rectangle as {top, left, height, width}.
std::array<int, 4> random_erase(Image& img, double area_frac, float value, Rng& rng);
Image gaussian_blur(const Image& img, double sigma);
// Crop of area fraction `scale` (square aspect) at a random position, resized back.
Image random_resized_crop(const Image& img, double scale, Rng& rng);

// Speckle samples, exposed for moment tests: Gamma(L, 1/L) draws.
double speckle_draw(double looks, Rng& rng);

}  // namespace fsce
