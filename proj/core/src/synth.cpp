#include "fsce/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "fsce/checkpoint.hpp"
#include "fsce/io_bytes.hpp"
#include "fsce/parallel.hpp"

namespace fsce {

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::bar: return "bar";
    case ShapeFamily::l_shape: return "l_shape";
    case ShapeFamily::disk: return "disk";
    case ShapeFamily::cross: return "cross";
    case ShapeFamily::ring: return "ring";
    case ShapeFamily::t_shape: return "t_shape";
    case ShapeFamily::triangle: return "triangle";
    case ShapeFamily::double_bar: return "double_bar";
  }
  return "unknown";
}

void SceneConfig::validate() const {
  if (classes < 1 || classes > kMaxClasses) {
    throw ConfigError("classes must be in [1, " + std::to_string(kMaxClasses) + "], got " + std::to_string(classes));
  }
  if (size < 2 || size % 2 != 0) throw ConfigError("image size must be even and >= 2, got " + std::to_string(size));
  if (!(looks >= 1.0)) throw ConfigError("looks must be >= 1");
  if (!(background >= 0 && target <= 1 && background < target)) {
    throw ConfigError("need 0 <= background < target <= 1");
  }
  if (max_shift < 0 || scale_jitter < 0 || scale_jitter >= 1) throw ConfigError("invalid pose ranges");
}

namespace {

bool inside(ShapeFamily f, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (f) {
    case ShapeFamily::bar: return au <= 0.28 && av <= 0.06;
    case ShapeFamily::l_shape:
      return (u >= -0.2 && u <= 0.2 && v >= 0.08 && v <= 0.2) || (u >= -0.2 && u <= -0.08 && v >= -0.2 && v <= 0.2);
    case ShapeFamily::disk: return u * u + v * v <= 0.16 * 0.16;
    case ShapeFamily::cross: return (au <= 0.2 && av <= 0.05) || (av <= 0.2 && au <= 0.05);
    case ShapeFamily::ring: {
      const double r2 = u * u + v * v;
      return r2 >= 0.1 * 0.1 && r2 <= 0.18 * 0.18;
    }
    case ShapeFamily::t_shape: return (au <= 0.2 && v >= -0.2 && v <= -0.1) || (au <= 0.05 && av <= 0.2);
    case ShapeFamily::triangle: {
      // Equilateral, circumradius 0.2, apex up.
      const double r = 0.2;
      if (v > r * 0.5) return false;
      const double s3 = std::sqrt(3.0);
      return (s3 * u - v <= r) && (-s3 * u - v <= r);
    }
    case ShapeFamily::double_bar: return au <= 0.22 && (std::abs(v - 0.08) <= 0.04 || std::abs(v + 0.08) <= 0.04);
  }
  return false;
}

}  // namespace

Image render_clean(const SceneConfig& cfg, int class_id, Rng& rng) {
  const auto family = static_cast<ShapeFamily>(class_id);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double sx = rng.uniform(-cfg.max_shift, cfg.max_shift);
  const double sy = rng.uniform(-cfg.max_shift, cfg.max_shift);
  const double scale = rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);
  const double ct = std::cos(theta), st = std::sin(theta);
  const int S = cfg.size;
  constexpr int kSub = 3;
  Image img(S, S);
  for (int i = 0; i < S; ++i) {
    for (int j = 0; j < S; ++j) {
      int hits = 0;
      for (int a = 0; a < kSub; ++a) {
        for (int b = 0; b < kSub; ++b) {
          const double y = (i + (a + 0.5) / kSub) / S - 0.5 - sy;
          const double x = (j + (b + 0.5) / kSub) / S - 0.5 - sx;
          const double u = (ct * x + st * y) / scale;
          const double v = (-st * x + ct * y) / scale;
          hits += inside(family, u, v);
        }
      }
      const double frac = static_cast<double>(hits) / (kSub * kSub);
      img.at(i, j) = static_cast<float>(cfg.background + frac * (cfg.target - cfg.background));
    }
  }
  return img;
}

double speckle_draw(double looks, Rng& rng) { return rng.gamma(looks, 1.0 / looks); }

std::vector<std::uint8_t> apply_speckle(const Image& clean, double looks, Rng& rng) {
  std::vector<std::uint8_t> out(clean.px.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(clean.px[i] * speckle_draw(looks, rng), 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

SceneSample generate_sample(const SceneConfig& cfg, int class_id, int index) {
  cfg.validate();
  if (class_id < 0 || class_id >= cfg.classes) throw ConfigError("class id out of range");
  Rng rng(hash_seed(cfg.seed, static_cast<std::uint64_t>(class_id), static_cast<std::uint64_t>(index)));
  SceneSample s;
  s.clean = render_clean(cfg, class_id, rng);
  s.noisy = apply_speckle(s.clean, cfg.looks, rng);
  return s;
}

Image Dataset::image(std::size_t i) const {
  Image img(height, width);
  const std::uint8_t* p = pixels.data() + i * image_size();
  for (std::size_t k = 0; k < image_size(); ++k) img.px[k] = static_cast<float>(p[k]) / 255.0f;
  return img;
}

Dataset generate_dataset(const SceneConfig& cfg, int per_class) {
  cfg.validate();
  if (per_class < 1) throw ConfigError("per_class must be >= 1");
  Dataset d;
  d.height = d.width = cfg.size;
  d.num_classes = cfg.classes;
  const std::size_t count = static_cast<std::size_t>(per_class) * cfg.classes;
  d.labels.resize(count);
  d.pixels.resize(count * d.image_size());
  parallel_for(static_cast<int>(count), [&](int k) {
    const int c = k % cfg.classes;
    const int i = k / cfg.classes;
    auto s = generate_sample(cfg, c, i);
    d.labels[k] = static_cast<std::uint8_t>(c);
    std::memcpy(d.pixels.data() + static_cast<std::size_t>(k) * d.image_size(), s.noisy.data(), s.noisy.size());
  });
  return d;
}

std::vector<std::uint8_t> encode_sds1(const Dataset& d) {
  ByteWriter w;
  w.raw("SDS1", 4);
  w.u32(static_cast<std::uint32_t>(d.count()));
  w.u32(static_cast<std::uint32_t>(d.height));
  w.u32(static_cast<std::uint32_t>(d.width));
  w.u32(static_cast<std::uint32_t>(d.num_classes));
  for (std::size_t i = 0; i < d.count(); ++i) {
    w.u8(d.labels[i]);
    w.raw(d.pixels.data() + i * d.image_size(), d.image_size());
  }
  return w.take();
}

Dataset decode_sds1(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "SDS1", 4) != 0) throw FormatError("sds1: bad magic");
  ByteReader r(bytes, "sds1");
  r.skip(4);
  Dataset d;
  const std::uint32_t count = r.u32();
  d.height = static_cast<int>(r.u32());
  d.width = static_cast<int>(r.u32());
  d.num_classes = static_cast<int>(r.u32());
  if (d.num_classes < 1 || d.num_classes > 255) throw FormatError("sds1: num_classes must be in [1, 255]");
  d.labels.resize(count);
  d.pixels.resize(static_cast<std::size_t>(count) * d.image_size());
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint8_t label = r.u8();
    if (label >= d.num_classes) {
      throw DataError("sds1: sample " + std::to_string(i) + " has label " + std::to_string(label) + " but only " +
                      std::to_string(d.num_classes) + " classes");
    }
    d.labels[i] = label;
    std::memcpy(d.pixels.data() + static_cast<std::size_t>(i) * d.image_size(), r.ptr(d.image_size()),
                d.image_size());
  }
  if (!r.at_end()) throw FormatError("sds1: " + std::to_string(r.remaining()) + " trailing bytes");
  return d;
}

void write_sds1(const std::string& path, const Dataset& d) { write_file_bytes(path, encode_sds1(d)); }

Dataset read_sds1(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_sds1(bytes);
  } catch (const LengthError& e) {
    throw LengthError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

namespace {

// Bilinear sample at continuous pixel coordinates; taps outside the image read 0.
float sample_zero(const Image& img, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto tap = [&](int i, int j) -> double {
    if (i < 0 || i >= img.h || j < 0 || j >= img.w) return 0.0;
    return img.at(i, j);
  };
  const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                   fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
  return static_cast<float>(v);
}

void clip01(Image& img) {
  for (auto& v : img.px) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

Image resize_bilinear(const Image& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ConfigError("resize target must be positive");
  if (out_h == img.h && out_w == img.w) return img;
  Image out(out_h, out_w);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int i = 0; i < out_h; ++i) {
    const double y = std::clamp((i + 0.5) * sy - 0.5, 0.0, img.h - 1.0);
    const int y0 = static_cast<int>(y);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double fy = y - y0;
    for (int j = 0; j < out_w; ++j) {
      const double x = std::clamp((j + 0.5) * sx - 0.5, 0.0, img.w - 1.0);
      const int x0 = static_cast<int>(x);
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double fx = x - x0;
      out.at(i, j) = static_cast<float>((1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
                                        fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1)));
    }
  }
  return out;
}

Image center_crop(const Image& img, int side) {
  if (side < 1 || side > img.h || side > img.w) throw ConfigError("center crop side out of range");
  const int top = (img.h - side) / 2, left = (img.w - side) / 2;
  Image out(side, side);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) out.at(i, j) = img.at(top + i, left + j);
  return out;
}

Image preprocess(const Image& img, const PreprocessConfig& cfg) {
  Image out = cfg.resize > 0 ? resize_bilinear(img, cfg.resize, cfg.resize) : img;
  if (cfg.crop > 0) out = center_crop(out, cfg.crop);
  clip01(out);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.h, img.w);
  for (int i = 0; i < img.h; ++i)
    for (int j = 0; j < img.w; ++j) out.at(i, j) = img.at(i, img.w - 1 - j);
  return out;
}

Image flip_vertical(const Image& img) {
  Image out(img.h, img.w);
  for (int i = 0; i < img.h; ++i)
    for (int j = 0; j < img.w; ++j) out.at(i, j) = img.at(img.h - 1 - i, j);
  return out;
}

Image affine(const Image& img, double rotation_deg, double tx, double ty, double shear_deg) {
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double sh = std::tan(shear_deg * std::numbers::pi / 180.0);
  // Forward map A = R * [[1, sh], [0, 1]] on (x, y) about the center.
  const double c = std::cos(th), s = std::sin(th);
  const double a00 = c, a01 = c * sh - s, a10 = s, a11 = s * sh + c;
  const double det = a00 * a11 - a01 * a10;
  const double i00 = a11 / det, i01 = -a01 / det, i10 = -a10 / det, i11 = a00 / det;
  const double cy = (img.h - 1) / 2.0, cx = (img.w - 1) / 2.0;
  Image out(img.h, img.w);
  for (int i = 0; i < img.h; ++i) {
    for (int j = 0; j < img.w; ++j) {
      const double dx = j - cx - tx, dy = i - cy - ty;
      out.at(i, j) = sample_zero(img, i10 * dx + i11 * dy + cy, i00 * dx + i01 * dy + cx);
    }
  }
  return out;
}

Image perspective(const Image& img, const std::array<std::array<double, 2>, 4>& off) {
  const double W = img.w - 1.0, H = img.h - 1.0;
  const std::array<std::array<double, 2>, 4> dst = {{{0, 0}, {W, 0}, {W, H}, {0, H}}};
  Eigen::Matrix<double, 8, 8> A;
  Eigen::Matrix<double, 8, 1> b;
  for (int k = 0; k < 4; ++k) {
    const double x = dst[k][0], y = dst[k][1];
    const double u = x + off[k][0], v = y + off[k][1];
    A.row(2 * k) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    A.row(2 * k + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * k) = u;
    b(2 * k + 1) = v;
  }
  const Eigen::Matrix<double, 8, 1> h = A.partialPivLu().solve(b);
  Image out(img.h, img.w);
  for (int i = 0; i < img.h; ++i) {
    for (int j = 0; j < img.w; ++j) {
      const double den = h(6) * j + h(7) * i + 1.0;
      const double u = (h(0) * j + h(1) * i + h(2)) / den;
      const double v = (h(3) * j + h(4) * i + h(5)) / den;
      out.at(i, j) = sample_zero(img, v, u);
    }
  }
  return out;
}

std::array<int, 4> random_erase(Image& img, double area_frac, float value, Rng& rng) {
  const double area = area_frac * img.h * img.w;
  const double log_r = rng.uniform(std::log(0.5), std::log(2.0));
  const double ratio = std::exp(log_r);
  const int eh = std::clamp(static_cast<int>(std::lround(std::sqrt(area * ratio))), 1, img.h);
  const int ew = std::clamp(static_cast<int>(std::lround(area / eh)), 1, img.w);
  const int top = rng.uniform_int(0, img.h - eh);
  const int left = rng.uniform_int(0, img.w - ew);
  for (int i = top; i < top + eh; ++i)
    for (int j = left; j < left + ew; ++j) img.at(i, j) = value;
  return {top, left, eh, ew};
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0)) return img;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double total = 0;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= total;
  Image tmp(img.h, img.w), out(img.h, img.w);
  for (int i = 0; i < img.h; ++i) {
    for (int j = 0; j < img.w; ++j) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * img.at(i, std::clamp(j + t, 0, img.w - 1));
      tmp.at(i, j) = static_cast<float>(acc);
    }
  }
  for (int i = 0; i < img.h; ++i) {
    for (int j = 0; j < img.w; ++j) {
      double acc = 0;
      for (int t = -r; t <= r; ++t) acc += k[t + r] * tmp.at(std::clamp(i + t, 0, img.h - 1), j);
      out.at(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

Image random_resized_crop(const Image& img, double scale, Rng& rng) {
  const int base = std::min(img.h, img.w);
  const int side = std::clamp(static_cast<int>(std::lround(std::sqrt(std::clamp(scale, 0.0, 1.0)) * base)), 1, base);
  const int top = rng.uniform_int(0, img.h - side);
  const int left = rng.uniform_int(0, img.w - side);
  if (side == img.h && side == img.w) return img;
  Image crop(side, side);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) crop.at(i, j) = img.at(top + i, left + j);
  return resize_bilinear(crop, img.h, img.w);
}

Image augment(View view, const Image& img, const AugmenterConfig& cfg, Rng& rng) {
  Image out = img;
  if (view == View::teacher) {
    const auto& t = cfg.teacher;
    // Every draw is made unconditionally so the stream layout does not depend
    // on which operations fire.
    const bool hf = rng.bernoulli(t.hflip_p);
    const bool vf = rng.bernoulli(t.vflip_p);
    const double rot = rng.uniform(-t.rotation_deg, t.rotation_deg);
    const double tx = rng.uniform(-t.translate_px, t.translate_px);
    const double ty = rng.uniform(-t.translate_px, t.translate_px);
    const double shear = rng.uniform(-t.shear_deg, t.shear_deg);
    const bool persp = rng.bernoulli(t.perspective_p);
    std::array<std::array<double, 2>, 4> off{};
    const double m = t.perspective * std::max(img.h, img.w);
    for (auto& c : off)
      for (auto& v : c) v = rng.uniform(-m, m);
    const bool erase = rng.bernoulli(t.erase_p);
    Rng erase_rng(rng.next_u64());

    if (hf) out = flip_horizontal(out);
    if (vf) out = flip_vertical(out);
    if (rot != 0 || tx != 0 || ty != 0 || shear != 0) out = affine(out, rot, tx, ty, shear);
    if (persp && m > 0) out = perspective(out, off);
    if (erase && t.erase_area > 0) random_erase(out, t.erase_area, static_cast<float>(t.erase_value), erase_rng);
  } else {
    const auto& s = cfg.student;
    const double scale = rng.uniform(s.crop_scale_min, s.crop_scale_max);
    Rng crop_rng(rng.next_u64());
    const bool blur = rng.bernoulli(s.blur_p);
    const double sigma = rng.uniform(s.blur_sigma_min, s.blur_sigma_max);
    [[maybe_unused]] const bool gray = rng.bernoulli(s.grayscale_p);

    out = random_resized_crop(out, scale, crop_rng);
    if (blur) out = gaussian_blur(out, sigma);
  }
  clip01(out);
  return out;
}

}  // namespace fsce
