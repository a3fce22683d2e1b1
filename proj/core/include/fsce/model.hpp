#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsce/dsaf.hpp"
#include "fsce/layers.hpp"

namespace fsce {

enum class BlockKind { plain, residual };
enum class Insertion { none, pre, s1, s2, s3, s4 };

std::string to_string(BlockKind k);
std::string to_string(Insertion at);
BlockKind parse_block_kind(const std::string& s);
Insertion parse_insertion(const std::string& s);

struct StageSpec {
  int blocks = 1;
  int channels = 8;
  bool operator==(const StageSpec&) const = default;
};

struct BackboneConfig {
  std::string name = "custom";
  BlockKind block = BlockKind::residual;
  std::vector<StageSpec> stages;
  // The first block of every stage downsamples by this factor.
  int stage_stride = 2;
  int in_channels = 1;
  int num_classes = 4;
  Insertion insertion = Insertion::none;
  bool dsaf_spatial = true;
  bool dsaf_frequency = true;
  std::vector<int> dsaf_kernels{3, 5, 7, 9};
  std::vector<int> dsaf_paddings{1, 2, 3, 4};
  int cbam_reduction = 8;
  bool cbam_legacy_order = false;

  bool operator==(const BackboneConfig&) const = default;
  // Throws ConfigError describing the first violated constraint.
  void validate() const;
};

// Presets: "student-L", "student-M", "teacher", "teacher-desk".
BackboneConfig preset(const std::string& name, int num_classes = 4, Insertion insertion = Insertion::none);
std::vector<std::string> preset_names();

// Intermediate activations exposed for Grad-CAM and feature analysis.
// Index 0 is the stem output and k = 1..4 the output of stage k; when DSAF is
// inserted at a point, that point's tap is the DSAF output.
template <typename T>
struct ModelTaps {
  std::array<Var<T>, 5> points{};
  Var<T> features;  // post global-average-pool, (N, C, 1, 1)
};

// Tap name to index: "stem" or "pre" -> 0, "s1".."s4" -> 1..4.
int parse_tap(const std::string& s, int num_stages);

template <typename T>
class Model {
 public:
  Model(const BackboneConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // x is (N, in_channels, H, W); returns logits (N, num_classes, 1, 1).
  Var<T> forward(Tape<T>& tape, const Var<T>& x, Mode mode, ModelTaps<T>* taps = nullptr);

  // Parameters and buffers in a fixed order (stem, stages, DSAF, head).
  ParamRefs<T> refs();
  std::uint64_t count_params() const;
  std::uint64_t count_flops(const Shape& input) const;

  const BackboneConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  const Dsaf<T>* dsaf() const { return dsaf_ ? &*dsaf_ : nullptr; }
  Dsaf<T>* dsaf() { return dsaf_ ? &*dsaf_ : nullptr; }

 private:
  struct Block {
    Conv2dLayer<T> conv1;
    BatchNorm2dLayer<T> bn1;
    std::optional<Conv2dLayer<T>> conv2;
    std::optional<BatchNorm2dLayer<T>> bn2;
    std::optional<Conv2dLayer<T>> proj;
    std::optional<BatchNorm2dLayer<T>> proj_bn;
  };

  Var<T> block_forward(Tape<T>& tape, Block& b, const Var<T>& x, Mode mode);
  std::uint64_t block_flops(const Block& b, const Shape& in, Shape& out) const;
  std::uint64_t block_params(const Block& b) const;

  BackboneConfig cfg_;
  std::uint64_t seed_ = 0;
  Conv2dLayer<T> stem_;
  BatchNorm2dLayer<T> stem_bn_;
  std::vector<std::vector<Block>> stages_;
  std::optional<Dsaf<T>> dsaf_;
  LinearLayer<T> fc_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace fsce
