#include "fsce/model.hpp"

#include "fsce/flops.hpp"

namespace fsce {

std::string to_string(BlockKind k) { return k == BlockKind::plain ? "plain" : "residual"; }

std::string to_string(Insertion at) {
  switch (at) {
    case Insertion::none: return "none";
    case Insertion::pre: return "pre";
    case Insertion::s1: return "s1";
    case Insertion::s2: return "s2";
    case Insertion::s3: return "s3";
    case Insertion::s4: return "s4";
  }
  return "none";
}

BlockKind parse_block_kind(const std::string& s) {
  if (s == "plain") return BlockKind::plain;
  if (s == "residual") return BlockKind::residual;
  throw ConfigError("unknown block kind '" + s + "' (expected plain or residual)");
}

Insertion parse_insertion(const std::string& s) {
  if (s == "none") return Insertion::none;
  if (s == "pre") return Insertion::pre;
  if (s == "s1") return Insertion::s1;
  if (s == "s2") return Insertion::s2;
  if (s == "s3") return Insertion::s3;
  if (s == "s4") return Insertion::s4;
  throw ConfigError("unknown insertion point '" + s + "' (expected none, pre, s1, s2, s3, s4)");
}

namespace {

int insertion_index(Insertion at) {
  switch (at) {
    case Insertion::pre: return 0;
    case Insertion::s1: return 1;
    case Insertion::s2: return 2;
    case Insertion::s3: return 3;
    case Insertion::s4: return 4;
    default: return -1;
  }
}

}  // namespace

void BackboneConfig::validate() const {
  if (stages.empty()) throw ConfigError(name + ": backbone needs at least one stage");
  if (stages.size() > 4) throw ConfigError(name + ": at most 4 stages are supported");
  if (num_classes < 1) throw ConfigError(name + ": num_classes must be >= 1");
  if (in_channels < 1) throw ConfigError(name + ": in_channels must be >= 1");
  if (stage_stride < 1) throw ConfigError(name + ": stage_stride must be >= 1");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].blocks < 1 || stages[i].channels < 1) {
      throw ConfigError(name + ": stage " + std::to_string(i + 1) + " needs blocks >= 1 and channels >= 1");
    }
  }
  const int at = insertion_index(insertion);
  if (at > static_cast<int>(stages.size())) {
    throw ConfigError(name + ": insertion " + to_string(insertion) + " refers to a missing stage (backbone has " +
                      std::to_string(stages.size()) + ")");
  }
  if (at >= 0) {
    const int c = stages[at == 0 ? 0 : at - 1].channels;
    if (c % 2 != 0) {
      throw ConfigError(name + ": DSAF at " + to_string(insertion) + " needs an even channel count, got " +
                        std::to_string(c));
    }
  }
}

BackboneConfig preset(const std::string& name, int num_classes, Insertion insertion) {
  BackboneConfig c;
  c.name = name;
  c.num_classes = num_classes;
  c.insertion = insertion;
  if (name == "student-L") {
    c.block = BlockKind::residual;
    c.stages = {{2, 16}, {2, 32}, {2, 64}, {2, 128}};
  } else if (name == "student-M") {
    c.block = BlockKind::plain;
    c.stages = {{1, 8}, {1, 16}, {1, 32}, {1, 64}};
  } else if (name == "teacher") {
    c.block = BlockKind::residual;
    c.stages = {{3, 32}, {4, 64}, {6, 128}, {3, 256}};
  } else if (name == "teacher-desk") {
    c.block = BlockKind::residual;
    c.stages = {{2, 12}, {2, 24}, {2, 48}, {2, 96}};
  } else {
    throw ConfigError("unknown model preset '" + name + "'");
  }
  c.validate();
  return c;
}

std::vector<std::string> preset_names() { return {"student-L", "student-M", "teacher", "teacher-desk"}; }

int parse_tap(const std::string& s, int num_stages) {
  int idx = -1;
  if (s == "stem" || s == "pre") idx = 0;
  else if (s.size() == 2 && s[0] == 's' && s[1] >= '1' && s[1] <= '4') idx = s[1] - '0';
  if (idx < 0 || idx > num_stages) {
    throw ConfigError("invalid tap '" + s + "' (expected stem or s1..s" + std::to_string(num_stages) + ")");
  }
  return idx;
}

template <typename T>
Model<T>::Model(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  Rng rng(hash_seed(seed, 0xB0));
  Rng dsaf_rng(hash_seed(seed, 0xD5));
  const int c0 = cfg_.stages[0].channels;
  stem_ = Conv2dLayer<T>("stem.conv", cfg_.in_channels, c0, 3, Conv2dOptions{1, 1, 1}, false, rng);
  stem_bn_ = BatchNorm2dLayer<T>("stem.bn", c0);
  int cin = c0;
  for (std::size_t si = 0; si < cfg_.stages.size(); ++si) {
    const auto& spec = cfg_.stages[si];
    std::vector<Block> blocks;
    for (int bi = 0; bi < spec.blocks; ++bi) {
      const std::string p = "s" + std::to_string(si + 1) + ".b" + std::to_string(bi + 1);
      const int stride = bi == 0 ? cfg_.stage_stride : 1;
      Block b;
      b.conv1 = Conv2dLayer<T>(p + ".conv1", cin, spec.channels, 3, Conv2dOptions{stride, 1, 1}, false, rng);
      b.bn1 = BatchNorm2dLayer<T>(p + ".bn1", spec.channels);
      if (cfg_.block == BlockKind::residual) {
        b.conv2 = Conv2dLayer<T>(p + ".conv2", spec.channels, spec.channels, 3, Conv2dOptions{1, 1, 1}, false, rng);
        b.bn2 = BatchNorm2dLayer<T>(p + ".bn2", spec.channels);
        if (stride != 1 || cin != spec.channels) {
          b.proj = Conv2dLayer<T>(p + ".proj", cin, spec.channels, 1, Conv2dOptions{stride, 0, 1}, false, rng);
          b.proj_bn = BatchNorm2dLayer<T>(p + ".proj_bn", spec.channels);
        }
      }
      blocks.push_back(std::move(b));
      cin = spec.channels;
    }
    stages_.push_back(std::move(blocks));
  }
  const int at = insertion_index(cfg_.insertion);
  if (at >= 0) {
    DsafConfig dc;
    dc.in_channels = at == 0 ? c0 : cfg_.stages[at - 1].channels;
    dc.kernel_sizes = cfg_.dsaf_kernels;
    dc.paddings = cfg_.dsaf_paddings;
    dc.cbam_reduction = cfg_.cbam_reduction;
    dc.cbam_legacy_order = cfg_.cbam_legacy_order;
    dc.spatial = cfg_.dsaf_spatial;
    dc.frequency = cfg_.dsaf_frequency;
    dsaf_.emplace("dsaf", dc, dsaf_rng);
  }
  fc_ = LinearLayer<T>("fc", cin, cfg_.num_classes, true, rng);
}

template <typename T>
Var<T> Model<T>::block_forward(Tape<T>& tape, Block& b, const Var<T>& x, Mode mode) {
  auto y = relu(tape, b.bn1.forward(tape, b.conv1.forward(tape, x), mode));
  if (cfg_.block == BlockKind::plain) return y;
  y = b.bn2->forward(tape, b.conv2->forward(tape, y), mode);
  auto shortcut = b.proj ? b.proj_bn->forward(tape, b.proj->forward(tape, x), mode) : x;
  return relu(tape, add(tape, y, shortcut));
}

template <typename T>
Var<T> Model<T>::forward(Tape<T>& tape, const Var<T>& x, Mode mode, ModelTaps<T>* taps) {
  const Shape s = x->value.shape();
  if (s.c != cfg_.in_channels) {
    throw ShapeError(cfg_.name + ": expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                     std::to_string(s.c));
  }
  const int at = insertion_index(cfg_.insertion);
  auto y = relu(tape, stem_bn_.forward(tape, stem_.forward(tape, x), mode));
  if (at == 0) y = dsaf_->forward(tape, y, mode);
  if (taps) taps->points[0] = y;
  for (std::size_t si = 0; si < stages_.size(); ++si) {
    for (auto& b : stages_[si]) y = block_forward(tape, b, y, mode);
    if (at == static_cast<int>(si) + 1) y = dsaf_->forward(tape, y, mode);
    if (taps) taps->points[si + 1] = y;
  }
  auto feat = spatial_mean(tape, y);
  if (taps) taps->features = feat;
  return fc_.forward(tape, feat);
}

template <typename T>
ParamRefs<T> Model<T>::refs() {
  ParamRefs<T> r;
  stem_.collect(r);
  stem_bn_.collect(r);
  const int at = insertion_index(cfg_.insertion);
  if (at == 0) dsaf_->collect(r);
  for (std::size_t si = 0; si < stages_.size(); ++si) {
    for (auto& b : stages_[si]) {
      b.conv1.collect(r);
      b.bn1.collect(r);
      if (b.conv2) b.conv2->collect(r);
      if (b.bn2) b.bn2->collect(r);
      if (b.proj) b.proj->collect(r);
      if (b.proj_bn) b.proj_bn->collect(r);
    }
    if (at == static_cast<int>(si) + 1) dsaf_->collect(r);
  }
  fc_.collect(r);
  return r;
}

template <typename T>
std::uint64_t Model<T>::block_params(const Block& b) const {
  std::uint64_t n = b.conv1.param_count() + b.bn1.param_count();
  if (b.conv2) n += b.conv2->param_count() + b.bn2->param_count();
  if (b.proj) n += b.proj->param_count() + b.proj_bn->param_count();
  return n;
}

template <typename T>
std::uint64_t Model<T>::count_params() const {
  std::uint64_t n = stem_.param_count() + stem_bn_.param_count();
  for (const auto& stage : stages_)
    for (const auto& b : stage) n += block_params(b);
  if (dsaf_) n += dsaf_->param_count();
  return n + fc_.param_count();
}

template <typename T>
std::uint64_t Model<T>::block_flops(const Block& b, const Shape& in, Shape& out) const {
  Shape o1;
  std::uint64_t f = b.conv1.flops(in, o1) + b.bn1.flops(o1) + flops::activation(o1);
  out = o1;
  if (cfg_.block == BlockKind::plain) return f;
  Shape o2;
  f += b.conv2->flops(o1, o2) + b.bn2->flops(o2);
  if (b.proj) {
    Shape op;
    f += b.proj->flops(in, op) + b.proj_bn->flops(op);
  }
  f += flops::eltwise(o2) + flops::activation(o2);
  out = o2;
  return f;
}

template <typename T>
std::uint64_t Model<T>::count_flops(const Shape& input) const {
  const int at = insertion_index(cfg_.insertion);
  Shape s;
  std::uint64_t f = stem_.flops(input, s) + stem_bn_.flops(s) + flops::activation(s);
  if (at == 0) f += dsaf_->flops(s);
  for (std::size_t si = 0; si < stages_.size(); ++si) {
    for (const auto& b : stages_[si]) {
      Shape o;
      f += block_flops(b, s, o);
      s = o;
    }
    if (at == static_cast<int>(si) + 1) f += dsaf_->flops(s);
  }
  f += flops::pool(s);
  return f + fc_.flops(input.n);
}

template class Model<float>;
template class Model<double>;

}  // namespace fsce
