#include "fsce/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace fsce {

const std::vector<RunConfig::KeyDoc>& RunConfig::keys() {
  static const std::vector<KeyDoc> k = {
      {"model.student", 's', "student-M", "student preset (student-L, student-M, teacher, teacher-desk)"},
      {"model.teacher", 's', "teacher-desk", "teacher preset"},
      {"model.insertion", 's', "s1", "DSAF insertion point for the student (none, pre, s1, s2, s3, s4)"},
      {"model.stage_stride", 'i', "2", "downsampling factor of the first block in every stage"},
      {"model.dsaf.spatial", 'b', "true", "enable the multi-scale spatial branch"},
      {"model.dsaf.frequency", 'b', "true", "enable the wavelet frequency branch"},
      {"model.dsaf.kernels", 'l', "3,5,7,9", "spatial branch kernel sizes"},
      {"model.dsaf.paddings", 'l', "1,2,3,4", "spatial branch paddings"},
      {"cbam.reduction", 'i', "8", "channel-gate reduction ratio (hidden width >= 4)"},
      {"cbam.legacy_order", 'b', "false", "apply the MLP per descriptor and stack spatial descriptors"},
      {"kd.enabled", 'b', "true", "train with an online teacher"},
      {"kd.T", 'd', "3", "distillation temperature"},
      {"kd.alpha", 'd', "0.5", "distillation weight"},
      {"kd.same_view", 'b', "false", "teacher sees the student's view"},
      {"train.epochs", 'i', "40", "epochs"},
      {"train.batch", 'i', "64", "batch size"},
      {"train.lr_teacher", 'd', "2.5e-4", "teacher peak learning rate (cosine per epoch)"},
      {"train.lr_student", 'd', "2.5e-3", "student peak learning rate (onecycle per iteration)"},
      {"train.weight_decay", 'd', "0.01", "AdamW decoupled weight decay"},
      {"train.seed", 'u', "1", "run seed"},
      {"train.seeds", 'L', "1,2,3", "seeds used by the sweep commands"},
      {"train.eval_batch", 'i', "100", "evaluation batch size"},
      {"data.resize", 'i', "0", "preprocess resize side (0 keeps the stored size)"},
      {"data.crop", 'i', "0", "preprocess center-crop side (0 keeps the resized size)"},
      {"aug.teacher.hflip_p", 'd', "0.5", "horizontal flip probability"},
      {"aug.teacher.vflip_p", 'd', "0.5", "vertical flip probability"},
      {"aug.teacher.rotation_deg", 'd', "15", "rotation range +-deg"},
      {"aug.teacher.translate_px", 'd', "4", "translation range +-px"},
      {"aug.teacher.shear_deg", 'd', "5", "shear range +-deg"},
      {"aug.teacher.perspective_p", 'd', "0.3", "perspective probability"},
      {"aug.teacher.perspective", 'd', "0.05", "perspective corner displacement (fraction of size)"},
      {"aug.teacher.erase_p", 'd', "0.25", "random-erase probability"},
      {"aug.teacher.erase_area", 'd', "0.05", "random-erase area fraction"},
      {"aug.teacher.erase_value", 'd', "0", "random-erase fill value"},
      {"aug.student.crop_scale_min", 'd', "0.8", "random crop minimum area fraction"},
      {"aug.student.crop_scale_max", 'd', "1", "random crop maximum area fraction"},
      {"aug.student.blur_p", 'd', "0.5", "gaussian blur probability"},
      {"aug.student.blur_sigma_min", 'd', "0.1", "gaussian blur minimum sigma"},
      {"aug.student.blur_sigma_max", 'd', "1", "gaussian blur maximum sigma"},
      {"aug.student.grayscale_p", 'd', "0.2", "random grayscale probability (identity on one channel)"},
  };
  return k;
}

RunConfig::RunConfig() {
  for (const auto& d : keys()) values_[d.key] = d.default_value;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

bool parse_bool_text(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") {
    out = true;
    return true;
  }
  if (v == "false" || v == "0" || v == "no" || v == "off") {
    out = false;
    return true;
  }
  return false;
}

template <typename N>
bool parse_number(const std::string& v, N& out) {
  const char* b = v.data();
  const char* e = b + v.size();
  auto r = std::from_chars(b, e, out);
  return r.ec == std::errc{} && r.ptr == e;
}

std::vector<int> int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& item : split_list(v)) {
    int x = 0;
    if (!parse_number(item, x)) throw ConfigError(key + ": '" + item + "' is not an integer");
    out.push_back(x);
  }
  return out;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeyDoc* doc = nullptr;
  for (const auto& d : keys())
    if (d.key == key) doc = &d;
  if (!doc) throw ConfigError("unknown config key '" + key + "'");
  bool b;
  int i;
  double x;
  std::uint64_t u;
  switch (doc->type) {
    case 'b':
      if (!parse_bool_text(value, b)) throw ConfigError(key + ": expected a boolean, got '" + value + "'");
      break;
    case 'i':
      if (!parse_number(value, i)) throw ConfigError(key + ": expected an integer, got '" + value + "'");
      break;
    case 'u':
      if (!parse_number(value, u)) throw ConfigError(key + ": expected an unsigned integer, got '" + value + "'");
      break;
    case 'd':
      if (!parse_number(value, x)) throw ConfigError(key + ": expected a number, got '" + value + "'");
      break;
    case 'l':
      int_list(key, value);
      break;
    case 'L':
      for (const auto& item : split_list(value)) {
        if (!parse_number(item, u)) throw ConfigError(key + ": '" + item + "' is not a seed");
      }
      break;
    default:
      if (value.empty()) throw ConfigError(key + ": empty value");
      if (key == "model.insertion") parse_insertion(value);
      if (key == "model.student" || key == "model.teacher") {
        const auto names = preset_names();
        if (std::find(names.begin(), names.end(), value) == names.end()) {
          throw ConfigError(key + ": unknown preset '" + value + "'");
        }
      }
  }
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

int RunConfig::get_int(const std::string& key) const {
  int v = 0;
  if (!parse_number(get(key), v)) throw ConfigError(key + ": expected an integer, got '" + get(key) + "'");
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0;
  if (!parse_number(get(key), v)) throw ConfigError(key + ": expected a number, got '" + get(key) + "'");
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  bool v = false;
  if (!parse_bool_text(get(key), v)) throw ConfigError(key + ": expected a boolean, got '" + get(key) + "'");
  return v;
}

std::vector<std::uint64_t> RunConfig::seeds() const {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(get("train.seeds"))) {
    std::uint64_t x = 0;
    if (!parse_number(item, x)) throw ConfigError("train.seeds: '" + item + "' is not a seed");
    out.push_back(x);
  }
  if (out.empty()) throw ConfigError("train.seeds: empty list");
  return out;
}

BackboneConfig RunConfig::student(int num_classes) const {
  BackboneConfig c = preset(get("model.student"), num_classes, parse_insertion(get("model.insertion")));
  c.stage_stride = get_int("model.stage_stride");
  c.dsaf_spatial = get_bool("model.dsaf.spatial");
  c.dsaf_frequency = get_bool("model.dsaf.frequency");
  c.dsaf_kernels = int_list("model.dsaf.kernels", get("model.dsaf.kernels"));
  c.dsaf_paddings = int_list("model.dsaf.paddings", get("model.dsaf.paddings"));
  c.cbam_reduction = get_int("cbam.reduction");
  c.cbam_legacy_order = get_bool("cbam.legacy_order");
  // With both branches off the block is an identity, so none is inserted.
  if (!c.dsaf_spatial && !c.dsaf_frequency) c.insertion = Insertion::none;
  c.validate();
  return c;
}

BackboneConfig RunConfig::teacher(int num_classes) const {
  BackboneConfig c = preset(get("model.teacher"), num_classes, Insertion::none);
  c.stage_stride = get_int("model.stage_stride");
  c.validate();
  return c;
}

KdConfig RunConfig::kd() const {
  KdConfig k;
  k.enabled = get_bool("kd.enabled");
  k.temperature = get_double("kd.T");
  k.alpha = get_double("kd.alpha");
  k.same_view = get_bool("kd.same_view");
  k.validate();
  return k;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.epochs = get_int("train.epochs");
  t.batch = get_int("train.batch");
  t.lr_teacher = get_double("train.lr_teacher");
  t.lr_student = get_double("train.lr_student");
  t.weight_decay = get_double("train.weight_decay");
  if (!parse_number(get("train.seed"), t.seed)) throw ConfigError("train.seed: expected an unsigned integer");
  t.eval_batch = get_int("train.eval_batch");
  t.validate();
  return t;
}

AugmenterConfig RunConfig::augmenter() const {
  AugmenterConfig a;
  a.preprocess.resize = get_int("data.resize");
  a.preprocess.crop = get_int("data.crop");
  auto& t = a.teacher;
  t.hflip_p = get_double("aug.teacher.hflip_p");
  t.vflip_p = get_double("aug.teacher.vflip_p");
  t.rotation_deg = get_double("aug.teacher.rotation_deg");
  t.translate_px = get_double("aug.teacher.translate_px");
  t.shear_deg = get_double("aug.teacher.shear_deg");
  t.perspective_p = get_double("aug.teacher.perspective_p");
  t.perspective = get_double("aug.teacher.perspective");
  t.erase_p = get_double("aug.teacher.erase_p");
  t.erase_area = get_double("aug.teacher.erase_area");
  t.erase_value = get_double("aug.teacher.erase_value");
  auto& s = a.student;
  s.crop_scale_min = get_double("aug.student.crop_scale_min");
  s.crop_scale_max = get_double("aug.student.crop_scale_max");
  s.blur_p = get_double("aug.student.blur_p");
  s.blur_sigma_min = get_double("aug.student.blur_sigma_min");
  s.blur_sigma_max = get_double("aug.student.blur_sigma_max");
  s.grayscale_p = get_double("aug.student.grayscale_p");
  if (a.preprocess.resize < 0 || a.preprocess.crop < 0) throw ConfigError("data.resize and data.crop must be >= 0");
  if (!(s.crop_scale_min > 0 && s.crop_scale_min <= s.crop_scale_max && s.crop_scale_max <= 1)) {
    throw ConfigError("aug.student crop scale range must satisfy 0 < min <= max <= 1");
  }
  if (s.blur_sigma_min < 0 || s.blur_sigma_min > s.blur_sigma_max) throw ConfigError("aug.student blur sigma range invalid");
  if (t.erase_area < 0 || t.erase_area > 1) throw ConfigError("aug.teacher.erase_area must be in [0, 1]");
  for (double p : {t.hflip_p, t.vflip_p, t.perspective_p, t.erase_p, s.blur_p, s.grayscale_p}) {
    if (p < 0 || p > 1) throw ConfigError("augmentation probabilities must be in [0, 1]");
  }
  return a;
}

RunConfig parse_log_echo(const std::string& log_text) {
  std::istringstream in(log_text);
  std::string line, body;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) != 0) break;
    const std::string rest = line.substr(2);
    if (rest.find('=') == std::string::npos) continue;
    body += rest + "\n";
  }
  return RunConfig::parse(body, "<log echo>");
}

}  // namespace fsce
