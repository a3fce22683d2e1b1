#include "fsce_cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "fsce/experiments.hpp"
#include "fsce/gradcheck.hpp"
#include "fsce/metrics.hpp"

namespace fsce::cli {
namespace {

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", path, "key = value config file");
    cmd->add_option("--set", overrides, "override one key (key=value); repeatable");
  }

  RunConfig load() const {
    RunConfig cfg = path.empty() ? RunConfig() : RunConfig::load(path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    return cfg;
  }
};

std::string fixed(double v, int digits = 6) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(digits) << v;
  return o.str();
}

void print_confusion(std::ostream& out, const ConfusionMatrix& cm) {
  out << "confusion (rows = true class, cols = predicted)\n";
  out << std::setw(6) << "";
  for (int p = 0; p < cm.k; ++p) out << std::setw(7) << p;
  out << "\n";
  for (int t = 0; t < cm.k; ++t) {
    out << std::setw(6) << t;
    for (int p = 0; p < cm.k; ++p) out << std::setw(7) << cm.at(t, p);
    out << "\n";
  }
}

void print_sweep(std::ostream& out, const SweepResult& r, const std::string& key_name) {
  out << r.to_csv(key_name);
}

int gen_data(const std::string& path, SceneConfig sc, int per_class, std::ostream& out) {
  sc.validate();
  if (per_class < 1) throw ConfigError("--per-class must be >= 1");
  const Dataset d = generate_dataset(sc, per_class);
  write_sds1(path, d);
  out << "wrote " << d.count() << " samples (" << sc.classes << " classes, " << sc.size << "x" << sc.size
      << ", L=" << sc.looks << ", seed " << sc.seed << ") to " << path << "\n";
  return 0;
}

int eval_cmd(const std::string& ckpt, const std::string& data, int batch, std::ostream& out) {
  LoadedModel lm = load_checkpoint(ckpt);
  const Dataset d = read_sds1(data);
  if (d.num_classes != lm.model->config().num_classes) {
    throw ConfigError("dataset has " + std::to_string(d.num_classes) + " classes but the checkpoint predicts " +
                      std::to_string(lm.model->config().num_classes));
  }
  const auto preds = predict(*lm.model, d, lm.preprocess, batch);
  const std::vector<int> labels(d.labels.begin(), d.labels.end());
  const ConfusionMatrix cm = confusion(preds, labels, d.num_classes);
  out << "accuracy " << fixed(accuracy(preds, labels)) << " (" << cm.trace() << "/" << cm.total() << ")\n";
  print_confusion(out, cm);
  return 0;
}

int gradcheck_cmd(int trials, std::ostream& out) {
  GradcheckOptions opt;
  if (trials > 0) opt.trials = trials;
  int failed = 0;
  out << std::left << std::setw(34) << "primitive" << std::right << std::setw(8) << "trials" << std::setw(14)
      << "max_rel_err" << std::setw(10) << "tol" << "  result\n";
  run_gradcheck(opt, [&](const GradcheckResult& r) {
    char err[32], tol[32];
    std::snprintf(err, sizeof err, "%.3e", r.max_rel_error);
    std::snprintf(tol, sizeof tol, "%.0e", r.tolerance);
    out << std::left << std::setw(34) << r.name << std::right << std::setw(8) << r.trials << std::setw(14) << err
        << std::setw(10) << tol << "  " << (r.passed() ? "ok" : "FAIL") << "\n";
    out.flush();
    if (!r.passed()) ++failed;
  });
  out << (failed == 0 ? "all primitives passed\n" : std::to_string(failed) + " primitive(s) failed\n");
  return failed == 0 ? 0 : 2;
}

int count_cmd(const RunConfig& cfg, const std::string& preset_name, const std::string& insertion, int classes,
              int size, bool teacher, std::ostream& out) {
  BackboneConfig bc = teacher ? cfg.teacher(classes) : cfg.student(classes);
  if (!preset_name.empty()) {
    const BackboneConfig p = preset(preset_name, classes);
    bc.name = p.name;
    bc.block = p.block;
    bc.stages = p.stages;
  }
  if (!insertion.empty()) bc.insertion = parse_insertion(insertion);
  if (size < 1) throw ConfigError("--size must be >= 1");
  const Model<float> m(bc, 0);
  const Shape in{1, bc.in_channels, size, size};
  out << "model " << bc.name << " (" << to_string(bc.block) << ", insertion " << to_string(bc.insertion) << ")\n";
  out << "input " << in.n << "x" << in.c << "x" << in.h << "x" << in.w << "\n";
  out << "params " << m.count_params() << "\n";
  out << "flops " << m.count_flops(in) << "\n";
  if (m.dsaf()) out << "dsaf_params " << m.dsaf()->param_count() << "\n";
  out << "convention: one multiply-add = 2 FLOPs; conv 2*Cout*Ho*Wo*(Cin/groups)*kh*kw, plus Cout*Ho*Wo with "
         "bias; linear 2*in*out plus out; batchnorm 2 and activation 1 FLOP per element\n";
  return 0;
}

int gradcam_cmd(const std::string& ckpt, const std::string& data, int index, int class_id, const std::string& tap,
                const std::string& path, std::ostream& out) {
  LoadedModel lm = load_checkpoint(ckpt);
  const Dataset d = read_sds1(data);
  if (index < 0 || static_cast<std::size_t>(index) >= d.count()) {
    throw ConfigError("--index " + std::to_string(index) + " out of range (dataset has " +
                      std::to_string(d.count()) + " samples)");
  }
  const Image img = preprocess(d.image(static_cast<std::size_t>(index)), lm.preprocess);
  Tensor<float> x(Shape{1, 1, img.h, img.w}, std::vector<float>(img.px));
  const int label = d.labels[static_cast<std::size_t>(index)];
  const int cls = class_id < 0 ? label : class_id;
  if (cls >= lm.model->config().num_classes) {
    throw ConfigError("--class " + std::to_string(cls) + " out of range");
  }
  const Image heat = grad_cam(*lm.model, x, cls, tap);
  write_pgm(path, heat);
  out << "grad-cam sample " << index << " (label " << label << ") class " << cls << " tap " << tap << " -> " << path
      << " (" << heat.w << "x" << heat.h << ")\n";
  return 0;
}

struct SweepArgs {
  ConfigArgs config;
  std::string train_path, test_path, out_dir;
  bool quiet = false;

  void add_to(CLI::App* cmd) {
    config.add_to(cmd);
    cmd->add_option("--data-train", train_path, "SDS1 training set")->required();
    cmd->add_option("--data-test", test_path, "SDS1 test set")->required();
    cmd->add_option("--out-dir", out_dir, "directory for the summary CSV and per-run logs")->required();
    cmd->add_flag("--quiet", quiet, "no per-epoch progress on stderr");
  }
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fsce: dual-branch spatial/frequency fusion with online distillation on synthetic speckle imagery",
               "fsce"};
  app.require_subcommand(1);

  std::string gen_out;
  SceneConfig scene;
  int per_class = 200;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic speckle dataset (SDS1)");
  gen->add_option("--out", gen_out, "output SDS1 file")->required();
  gen->add_option("--classes", scene.classes, "number of classes (1-8)")->capture_default_str();
  gen->add_option("--per-class", per_class, "samples per class")->capture_default_str();
  gen->add_option("--size", scene.size, "image side in pixels (even)")->capture_default_str();
  gen->add_option("--looks", scene.looks, "speckle looks L")->capture_default_str();
  gen->add_option("--seed", scene.seed, "dataset seed")->capture_default_str();

  ConfigArgs train_cfg;
  std::string train_data, test_data, log_path, ckpt_out;
  bool train_quiet = false;
  auto* train = app.add_subcommand("train", "train one student (with its online teacher when KD is on)");
  train_cfg.add_to(train);
  train->add_option("--data-train", train_data, "SDS1 training set")->required();
  train->add_option("--data-test", test_data, "SDS1 test set")->required();
  train->add_option("--log", log_path, "CSV metric log");
  train->add_option("--ckpt-out", ckpt_out, "FSM1 student checkpoint");
  train->add_flag("--quiet", train_quiet, "no per-epoch progress on stderr");

  std::string eval_ckpt, eval_data;
  int eval_batch = 100;
  auto* eval = app.add_subcommand("eval", "accuracy and confusion matrix of a checkpoint");
  eval->add_option("--ckpt", eval_ckpt, "FSM1 checkpoint")->required();
  eval->add_option("--data", eval_data, "SDS1 dataset")->required();
  eval->add_option("--batch", eval_batch, "evaluation batch size")->capture_default_str();

  int gc_trials = 0;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every differentiable primitive");
  gc->add_option("--trials", gc_trials, "random trials per primitive (default 20)");

  ConfigArgs count_cfg;
  std::string count_preset, count_insertion;
  int count_classes = 4, count_size = 64;
  bool count_teacher = false;
  auto* count = app.add_subcommand("count", "parameter and FLOP counts");
  count_cfg.add_to(count);
  count->add_option("--preset", count_preset, "student-L, student-M, teacher, teacher-desk");
  count->add_option("--insertion", count_insertion, "none, pre, s1, s2, s3, s4");
  count->add_option("--classes", count_classes, "number of classes")->capture_default_str();
  count->add_option("--size", count_size, "input side in pixels")->capture_default_str();
  count->add_flag("--teacher", count_teacher, "count the configured teacher instead of the student");

  std::string cam_ckpt, cam_data, cam_tap = "s1", cam_out;
  int cam_index = 0, cam_class = -1;
  auto* cam = app.add_subcommand("gradcam", "Grad-CAM heatmap of one sample as an 8-bit PGM");
  cam->add_option("--ckpt", cam_ckpt, "FSM1 checkpoint")->required();
  cam->add_option("--data", cam_data, "SDS1 dataset")->required();
  cam->add_option("--index", cam_index, "sample index")->capture_default_str();
  cam->add_option("--class", cam_class, "target class (default: the sample's label)");
  cam->add_option("--tap", cam_tap, "stem or s1..s4")->capture_default_str();
  cam->add_option("--out", cam_out, "output PGM")->required();

  SweepArgs ablate_args, kd_args, ins_args;
  auto* ablate = app.add_subcommand("ablate", "8-row {frequency, spatial, KD} ablation grid");
  ablate_args.add_to(ablate);
  auto* sweep_kd = app.add_subcommand("sweep-kd", "temperature and alpha sweeps");
  kd_args.add_to(sweep_kd);
  auto* sweep_ins = app.add_subcommand("sweep-insert", "DSAF insertion point sweep");
  ins_args.add_to(sweep_ins);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return gen_data(gen_out, scene, per_class, out);
    if (*train) {
      const RunConfig cfg = train_cfg.load();
      const Dataset tr = read_sds1(train_data);
      const Dataset te = read_sds1(test_data);
      const RunResult r = run_training(cfg, tr, te, {log_path, ckpt_out}, nullptr, train_quiet ? nullptr : &err);
      out << "final train_acc " << fixed(r.final_train_acc) << " test_acc " << fixed(r.final_test_acc) << "\n";
      return 0;
    }
    if (*eval) return eval_cmd(eval_ckpt, eval_data, eval_batch, out);
    if (*gc) return gradcheck_cmd(gc_trials, out);
    if (*count) {
      return count_cmd(count_cfg.load(), count_preset, count_insertion, count_classes, count_size, count_teacher,
                       out);
    }
    if (*cam) return gradcam_cmd(cam_ckpt, cam_data, cam_index, cam_class, cam_tap, cam_out, out);
    for (auto [cmd, a] : {std::pair{ablate, &ablate_args}, std::pair{sweep_kd, &kd_args},
                          std::pair{sweep_ins, &ins_args}}) {
      if (!*cmd) continue;
      const RunConfig cfg = a->config.load();
      const Dataset tr = read_sds1(a->train_path);
      const Dataset te = read_sds1(a->test_path);
      std::filesystem::create_directories(a->out_dir);
      RunCache cache;
      std::ostream* progress = a->quiet ? nullptr : &err;
      if (cmd == ablate) print_sweep(out, run_ablation(cfg, tr, te, a->out_dir, &cache, progress), "id");
      if (cmd == sweep_kd) print_sweep(out, run_kd_sweep(cfg, tr, te, a->out_dir, &cache, progress), "row");
      if (cmd == sweep_ins) {
        print_sweep(out, run_insertion_sweep(cfg, tr, te, a->out_dir, &cache, progress), "insertion");
      }
      return 0;
    }
  } catch (const std::exception& e) {
    const bool validation = is_validation_error(e);
    err << "fsce: " << (validation ? "error: " : "runtime failure: ") << e.what() << "\n";
    return validation ? 1 : 2;
  }
  return 1;
}

}  // namespace fsce::cli
