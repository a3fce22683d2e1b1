#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fsce/model.hpp"
#include "fsce/optim.hpp"
#include "fsce/synth.hpp"

namespace fsce {

struct KdConfig {
  bool enabled = true;
  double temperature = 3.0;
  double alpha = 0.5;
  // Teacher logits come from the student's view instead of the teacher's own.
  bool same_view = false;

  void validate() const;
};

// T^2 * mean_n sum_i p_i (ln p_i - ln q_i) with p = softmax(t/T), q = softmax(s/T).
// t is a constant: no gradient flows to it.
template <typename T>
Var<T> kd_loss(Tape<T>& tape, const Var<T>& s, const Tensor<T>& t, double temperature);

// mean_n -log_softmax(s)[n, labels[n]].
template <typename T>
Var<T> ce_loss(Tape<T>& tape, const Var<T>& s, const std::vector<int>& labels);

struct TrainConfig {
  int epochs = 40;
  int batch = 64;
  double lr_teacher = 2.5e-4;
  double lr_student = 2.5e-3;
  double weight_decay = 0.01;
  std::uint64_t seed = 1;
  int eval_batch = 100;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double teacher_loss = 0;
  double student_ce = 0;
  double student_kd = 0;
  double student_total = 0;
  double train_acc = 0;
  double test_acc = 0;
  double lr_teacher = 0;
  double lr_student = 0;
};

// Everything the student loop needs from the teacher: its logits on every
// batch and its per-epoch loss and learning rate. The teacher's updates never
// depend on the student, so a trace recorded once can stand in for the
// teacher in any run whose key matches.
struct TeacherTrace {
  std::string key;
  std::vector<Tensor<float>> logits;  // one (B, K, 1, 1) tensor per iteration
  std::vector<double> epoch_loss;
  std::vector<double> epoch_lr;
};

// Identifies the inputs the teacher trajectory depends on.
std::string teacher_trace_key(const BackboneConfig& teacher, std::uint64_t teacher_seed, const TrainConfig& train,
                              const KdConfig& kd, const AugmenterConfig& aug, const Dataset& data);

struct RunResult {
  std::vector<EpochRecord> epochs;
  double final_test_acc = 0;
  double final_train_acc = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Online co-training. Per batch: teacher forward on its view, teacher CE step
// (AdamW, cosine per epoch); student forward on its view,
// L = CE + alpha * KD(s, t), student step (AdamW, onecycle per iteration).
// teacher may be null when kd.enabled is false or a trace is supplied. When
// record is non-null the teacher's contribution is appended to it.
RunResult train_online(Model<float>* teacher, Model<float>& student, const Dataset& train, const Dataset& test,
                       const KdConfig& kd, const TrainConfig& cfg, const AugmenterConfig& aug,
                       const TeacherTrace* trace = nullptr, TeacherTrace* record = nullptr,
                       const EpochCallback& on_epoch = {});

// Teacher-only pass that records the trace train_online would produce.
TeacherTrace record_teacher_trace(Model<float>& teacher, const Dataset& train, const KdConfig& kd,
                                  const TrainConfig& cfg, const AugmenterConfig& aug);

// Input batch for samples `idx`: preprocess, then the view's augmentation with
// per-sample generator Rng(hash_seed(seed, stream, epoch * count + idx)).
Tensor<float> make_batch(const Dataset& d, const std::vector<std::size_t>& idx, const AugmenterConfig& aug,
                         const View* view, std::uint64_t seed, int epoch);

// Eval-mode predictions over a dataset.
std::vector<int> predict(Model<float>& model, const Dataset& d, const PreprocessConfig& pre, int batch);

extern const char* const kCsvHeader;
std::string csv_row(const EpochRecord& r);
std::string format_number(double v);

}  // namespace fsce
