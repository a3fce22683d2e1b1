#include "fsce/experiments.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace fsce {

std::uint64_t teacher_seed(std::uint64_t run_seed) { return hash_seed(run_seed, 0x7E); }
std::uint64_t student_seed(std::uint64_t run_seed) { return hash_seed(run_seed, 0x57); }

void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text_file(const std::string& path) {
  const auto b = read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

std::string render_log(const RunConfig& cfg, const std::vector<EpochRecord>& epochs) {
  std::string s = "# fsce train log\n";
  std::istringstream in(cfg.echo());
  std::string line;
  while (std::getline(in, line)) s += "# " + line + "\n";
  s += kCsvHeader;
  s += "\n";
  for (const auto& r : epochs) s += csv_row(r) + "\n";
  return s;
}

namespace {

void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

nlohmann::json backbone_json(const BackboneConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) stages.push_back({s.blocks, s.channels});
  return {{"name", c.name},
          {"block", to_string(c.block)},
          {"stages", stages},
          {"stage_stride", c.stage_stride},
          {"in_channels", c.in_channels},
          {"num_classes", c.num_classes},
          {"insertion", to_string(c.insertion)},
          {"dsaf_spatial", c.dsaf_spatial},
          {"dsaf_frequency", c.dsaf_frequency},
          {"dsaf_kernels", c.dsaf_kernels},
          {"dsaf_paddings", c.dsaf_paddings},
          {"cbam_reduction", c.cbam_reduction},
          {"cbam_legacy_order", c.cbam_legacy_order}};
}

BackboneConfig backbone_from_json(const nlohmann::json& j) {
  BackboneConfig c;
  c.name = j.at("name").get<std::string>();
  c.block = parse_block_kind(j.at("block").get<std::string>());
  for (const auto& s : j.at("stages")) c.stages.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  c.stage_stride = j.at("stage_stride").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.insertion = parse_insertion(j.at("insertion").get<std::string>());
  c.dsaf_spatial = j.at("dsaf_spatial").get<bool>();
  c.dsaf_frequency = j.at("dsaf_frequency").get<bool>();
  c.dsaf_kernels = j.at("dsaf_kernels").get<std::vector<int>>();
  c.dsaf_paddings = j.at("dsaf_paddings").get<std::vector<int>>();
  c.cbam_reduction = j.at("cbam_reduction").get<int>();
  c.cbam_legacy_order = j.at("cbam_legacy_order").get<bool>();
  c.validate();
  return c;
}

}  // namespace

std::string checkpoint_sidecar(const RunConfig& cfg, const BackboneConfig& model, std::uint64_t model_seed) {
  nlohmann::json j;
  j["format"] = "fsce-checkpoint-1";
  j["model"] = backbone_json(model);
  j["model_seed"] = model_seed;
  j["run_seed"] = cfg.train().seed;
  j["preprocess"] = {{"resize", cfg.get_int("data.resize")}, {"crop", cfg.get_int("data.crop")}};
  return j.dump(2) + "\n";
}

LoadedModel load_checkpoint(const std::string& ckpt_path) {
  const auto tensors = read_fsm1(ckpt_path);
  const std::string side = ckpt_path + ".json";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(side));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side + ": " + e.what());
  }
  LoadedModel out;
  try {
    const BackboneConfig bc = backbone_from_json(j.at("model"));
    out.model = std::make_unique<Model<float>>(bc, j.at("model_seed").get<std::uint64_t>());
    out.preprocess.resize = j.at("preprocess").at("resize").get<int>();
    out.preprocess.crop = j.at("preprocess").at("crop").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(side + ": " + e.what());
  }
  auto refs = out.model->refs();
  restore(tensors, refs);
  return out;
}

RunResult run_training(const RunConfig& cfg, const Dataset& train, const Dataset& test, const TrainOutputs& out,
                       RunCache* cache, std::ostream* progress) {
  if (train.num_classes != test.num_classes) {
    throw ConfigError("train and test sets disagree on the class count (" + std::to_string(train.num_classes) +
                      " vs " + std::to_string(test.num_classes) + ")");
  }
  const int K = train.num_classes;
  const BackboneConfig scfg = cfg.student(K);
  const KdConfig kd = cfg.kd();
  const TrainConfig tc = cfg.train();
  const AugmenterConfig aug = cfg.augmenter();
  const std::string result_key = cfg.echo();
  if (cache && out.log_path.empty() && out.ckpt_path.empty()) {
    auto it = cache->results.find(result_key);
    if (it != cache->results.end()) return it->second;
  }

  Model<float> student(scfg, student_seed(tc.seed));
  std::unique_ptr<Model<float>> teacher;
  const TeacherTrace* trace = nullptr;
  if (kd.enabled) {
    const BackboneConfig tcfg = cfg.teacher(K);
    if (cache) {
      const std::string key = teacher_trace_key(tcfg, teacher_seed(tc.seed), tc, kd, aug, train);
      auto it = cache->traces.find(key);
      if (it == cache->traces.end()) {
        Model<float> t(tcfg, teacher_seed(tc.seed));
        auto tr = record_teacher_trace(t, train, kd, tc, aug);
        tr.key = key;
        it = cache->traces.emplace(key, std::move(tr)).first;
      }
      trace = &it->second;
    } else {
      teacher = std::make_unique<Model<float>>(tcfg, teacher_seed(tc.seed));
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  EpochCallback cb;
  if (progress) {
    cb = [&](const EpochRecord& r) {
      if (r.epoch == tc.epochs || r.epoch % 10 == 0) {
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        *progress << "  epoch " << r.epoch << "/" << tc.epochs << " train_acc " << format_number(r.train_acc)
                  << " test_acc " << format_number(r.test_acc) << " (" << static_cast<int>(dt) << " s)\n"
                  << std::flush;
      }
    };
  }
  RunResult res = train_online(teacher.get(), student, train, test, kd, tc, aug, trace, nullptr, cb);

  if (!out.log_path.empty()) {
    ensure_parent(out.log_path);
    write_text_file(out.log_path, render_log(cfg, res.epochs));
  }
  if (!out.ckpt_path.empty()) {
    ensure_parent(out.ckpt_path);
    write_fsm1(out.ckpt_path, snapshot(student.refs()));
    write_text_file(out.ckpt_path + ".json", checkpoint_sidecar(cfg, scfg, student.seed()));
  }
  if (cache) cache->results[result_key] = res;
  return res;
}

double SweepRow::mean() const {
  double s = 0;
  for (double a : acc) s += a;
  return acc.empty() ? 0.0 : s / static_cast<double>(acc.size());
}

std::string SweepResult::to_csv(const std::string& key_name) const {
  std::string s = key_name;
  for (const auto& f : field_names) s += "," + f;
  for (auto seed : seeds) s += ",seed_" + std::to_string(seed);
  s += ",mean\n";
  for (const auto& r : rows) {
    s += r.key;
    for (const auto& f : field_names) s += "," + r.fields.at(f);
    for (double a : r.acc) s += "," + format_number(a);
    s += "," + format_number(r.mean()) + "\n";
  }
  return s;
}

const std::vector<AblationCell>& ablation_grid() {
  static const std::vector<AblationCell> g = {
      {1, false, false, false}, {2, true, false, false}, {3, false, true, false}, {4, false, false, true},
      {5, true, true, false},   {6, true, false, true},  {7, false, true, true},  {8, true, true, true},
  };
  return g;
}

namespace {

struct Variant {
  std::string key;
  std::map<std::string, std::string> fields;
  std::vector<std::pair<std::string, std::string>> overrides;
};

SweepResult run_variants(const RunConfig& base, const std::vector<Variant>& variants,
                         const std::vector<std::string>& field_names, const Dataset& train, const Dataset& test,
                         const std::string& out_dir, const std::string& prefix, RunCache* cache,
                         std::ostream* progress) {
  SweepResult res;
  res.seeds = base.seeds();
  res.field_names = field_names;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (const auto& v : variants) {
    SweepRow row{v.key, v.fields, {}};
    for (auto seed : res.seeds) {
      RunConfig cfg = base;
      for (const auto& [k, val] : v.overrides) cfg.set(k, val);
      cfg.set("train.seed", std::to_string(seed));
      if (progress) *progress << prefix << " " << v.key << " seed " << seed << "\n" << std::flush;
      RunResult r;
      const std::string key = cfg.echo();
      if (cache && cache->results.count(key)) {
        r = cache->results.at(key);
        if (progress) *progress << "  reused cached result\n";
      } else {
        r = run_training(cfg, train, test, {}, cache, progress);
      }
      if (!out_dir.empty()) {
        write_text_file(out_dir + "/" + prefix + "_" + v.key + "_seed" + std::to_string(seed) + ".csv",
                        render_log(cfg, r.epochs));
      }
      row.acc.push_back(r.final_test_acc);
    }
    res.rows.push_back(std::move(row));
  }
  return res;
}

}  // namespace

SweepResult run_ablation(const RunConfig& base, const Dataset& train, const Dataset& test, const std::string& out_dir,
                         RunCache* cache, std::ostream* progress) {
  std::vector<Variant> vs;
  for (const auto& c : ablation_grid()) {
    Variant v;
    v.key = std::to_string(c.id);
    v.fields = {{"frequency", c.frequency ? "1" : "0"}, {"spatial", c.spatial ? "1" : "0"}, {"kd", c.kd ? "1" : "0"}};
    v.overrides = {{"model.dsaf.frequency", c.frequency ? "true" : "false"},
                   {"model.dsaf.spatial", c.spatial ? "true" : "false"},
                   {"kd.enabled", c.kd ? "true" : "false"}};
    vs.push_back(v);
  }
  auto res = run_variants(base, vs, {"frequency", "spatial", "kd"}, train, test, out_dir, "ablate", cache, progress);
  if (!out_dir.empty()) write_text_file(out_dir + "/ablation.csv", res.to_csv("id"));
  return res;
}

SweepResult run_kd_sweep(const RunConfig& base, const Dataset& train, const Dataset& test, const std::string& out_dir,
                         RunCache* cache, std::ostream* progress) {
  std::vector<Variant> vs;
  for (const char* t : {"1", "3", "5", "7", "9"}) {
    vs.push_back({std::string("T") + t, {{"T", t}, {"alpha", "0.5"}},
                  {{"kd.enabled", "true"}, {"kd.T", t}, {"kd.alpha", "0.5"}}});
  }
  for (const char* a : {"0.1", "0.3", "0.5", "0.7", "0.9"}) {
    vs.push_back({std::string("alpha") + a, {{"T", "3"}, {"alpha", a}},
                  {{"kd.enabled", "true"}, {"kd.T", "3"}, {"kd.alpha", a}}});
  }
  RunCache local;
  auto res = run_variants(base, vs, {"T", "alpha"}, train, test, out_dir, "sweepkd", cache ? cache : &local, progress);
  if (!out_dir.empty()) write_text_file(out_dir + "/sweep_kd.csv", res.to_csv("row"));
  return res;
}

SweepResult run_insertion_sweep(const RunConfig& base, const Dataset& train, const Dataset& test,
                                const std::string& out_dir, RunCache* cache, std::ostream* progress) {
  std::vector<Variant> vs;
  for (const char* at : {"pre", "s1", "s2", "s4"}) {
    vs.push_back({at, {}, {{"model.insertion", at}}});
  }
  auto res = run_variants(base, vs, {}, train, test, out_dir, "insert", cache, progress);
  if (!out_dir.empty()) write_text_file(out_dir + "/sweep_insert.csv", res.to_csv("insertion"));
  return res;
}

}  // namespace fsce
