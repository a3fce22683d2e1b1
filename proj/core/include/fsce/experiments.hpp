#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "fsce/checkpoint.hpp"
#include "fsce/config.hpp"
#include "fsce/distill.hpp"

namespace fsce {

// Caches shared across runs of one process: teacher traces by trace key and
// final student test accuracies by (config echo, seed).
struct RunCache {
  std::map<std::string, TeacherTrace> traces;
  std::map<std::string, RunResult> results;
};

struct TrainOutputs {
  std::string log_path;   // CSV log; empty skips it
  std::string ckpt_path;  // FSM1 student checkpoint (+ ".json" sidecar); empty skips it
};

std::uint64_t teacher_seed(std::uint64_t run_seed);
std::uint64_t student_seed(std::uint64_t run_seed);

// Full log text: config echo as `# key = value` lines, the CSV header, one row
// per epoch.
std::string render_log(const RunConfig& cfg, const std::vector<EpochRecord>& epochs);

// Trains one student (and its online teacher when KD is on) from cfg.
RunResult run_training(const RunConfig& cfg, const Dataset& train, const Dataset& test, const TrainOutputs& out = {},
                       RunCache* cache = nullptr, std::ostream* progress = nullptr);

// Sidecar with the model config, run seed and preprocessing needed to rebuild
// a checkpointed student.
std::string checkpoint_sidecar(const RunConfig& cfg, const BackboneConfig& model, std::uint64_t model_seed);
struct LoadedModel {
  std::unique_ptr<Model<float>> model;
  PreprocessConfig preprocess;
};
LoadedModel load_checkpoint(const std::string& ckpt_path);

struct SweepRow {
  std::string key;                      // row label (ablation id, "T=3", "s1", ...)
  std::map<std::string, std::string> fields;  // extra summary columns
  std::vector<double> acc;              // final test accuracy per seed
  double mean() const;
};

struct SweepResult {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> field_names;
  std::vector<SweepRow> rows;
  std::string to_csv(const std::string& key_name) const;
};

// Eight-row {frequency, spatial, KD} grid; row ids 1..8 follow
//   1 ---, 2 F--, 3 -S-, 4 --K, 5 FS-, 6 F-K, 7 -SK, 8 FSK.
struct AblationCell {
  int id;
  bool frequency;
  bool spatial;
  bool kd;
};
const std::vector<AblationCell>& ablation_grid();

SweepResult run_ablation(const RunConfig& base, const Dataset& train, const Dataset& test, const std::string& out_dir,
                         RunCache* cache = nullptr, std::ostream* progress = nullptr);
// T in {1,3,5,7,9} at alpha 0.5, then alpha in {0.1,0.3,0.5,0.7,0.9} at T 3.
SweepResult run_kd_sweep(const RunConfig& base, const Dataset& train, const Dataset& test, const std::string& out_dir,
                         RunCache* cache = nullptr, std::ostream* progress = nullptr);
// insertion in {pre, s1, s2, s4}.
SweepResult run_insertion_sweep(const RunConfig& base, const Dataset& train, const Dataset& test,
                                const std::string& out_dir, RunCache* cache = nullptr,
                                std::ostream* progress = nullptr);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace fsce
