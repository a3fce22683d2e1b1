#include "fsce/distill.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fsce/parallel.hpp"

namespace fsce {

void KdConfig::validate() const {
  if (!(temperature > 0)) throw ConfigError("kd: temperature must be > 0, got " + std::to_string(temperature));
  if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("kd: alpha must be in [0, 1], got " + std::to_string(alpha));
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (eval_batch < 1) throw ConfigError("train: eval_batch must be >= 1");
  if (!(lr_teacher >= 0) || !(lr_student >= 0)) throw ConfigError("train: learning rates must be >= 0");
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
}

namespace {

void check_logits(const Shape& s, const char* what) {
  if (s.h != 1 || s.w != 1 || s.n < 1 || s.c < 1) throw ShapeError(std::string(what) + ": logits must be (N, K, 1, 1)");
}

// Row-wise log-softmax of z / temperature into out (double precision).
template <typename T>
void log_softmax_rows(const T* z, int K, double inv_t, double* out) {
  double mx = -INFINITY;
  for (int i = 0; i < K; ++i) mx = std::max(mx, z[i] * inv_t);
  double acc = 0;
  for (int i = 0; i < K; ++i) acc += std::exp(z[i] * inv_t - mx);
  const double lse = mx + std::log(acc);
  for (int i = 0; i < K; ++i) out[i] = z[i] * inv_t - lse;
}

}  // namespace

template <typename T>
Var<T> kd_loss(Tape<T>& tape, const Var<T>& s, const Tensor<T>& t, double temperature) {
  if (!(temperature > 0)) throw ConfigError("kd_loss: temperature must be > 0");
  const Shape sh = s->value.shape();
  check_logits(sh, "kd_loss");
  if (!(t.shape() == sh)) throw ShapeError("kd_loss: student " + sh.str() + " and teacher " + t.shape().str() + " differ");
  const int N = sh.n, K = sh.c;
  const double inv_t = 1.0 / temperature;
  std::vector<double> lp(K), lq(K);
  Tensor<T> diff(sh);  // q - p
  double total = 0;
  for (int n = 0; n < N; ++n) {
    log_softmax_rows(t.data() + static_cast<std::size_t>(n) * K, K, inv_t, lp.data());
    log_softmax_rows(s->value.data() + static_cast<std::size_t>(n) * K, K, inv_t, lq.data());
    double row = 0;
    for (int i = 0; i < K; ++i) {
      const double p = std::exp(lp[i]);
      if (p > 0) row += p * (lp[i] - lq[i]);
      diff[static_cast<std::size_t>(n) * K + i] = static_cast<T>(std::exp(lq[i]) - p);
    }
    total += row;
  }
  auto out = make_var(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(temperature * temperature * total / N)));
  if (needs_grad(tape, {&s})) {
    out->requires_grad = true;
    const T coef = static_cast<T>(temperature / N);
    tape.push("kd_loss", [s, out, diff = std::move(diff), coef]() {
      if (!out->has_grad()) return;
      const T g = out->grad[0] * coef;
      Tensor<T>& ds = s->grad_ref();
      for (std::size_t i = 0; i < diff.size(); ++i) ds[i] += g * diff[i];
    });
  }
  return out;
}

template <typename T>
Var<T> ce_loss(Tape<T>& tape, const Var<T>& s, const std::vector<int>& labels) {
  const Shape sh = s->value.shape();
  check_logits(sh, "ce_loss");
  const int N = sh.n, K = sh.c;
  if (static_cast<int>(labels.size()) != N) throw ShapeError("ce_loss: label count does not match the batch");
  std::vector<double> lq(K);
  Tensor<T> diff(sh);  // softmax - onehot
  double total = 0;
  for (int n = 0; n < N; ++n) {
    const int y = labels[n];
    if (y < 0 || y >= K) {
      throw DataError("ce_loss: sample " + std::to_string(n) + " has label " + std::to_string(y) + " outside [0, " +
                      std::to_string(K) + ")");
    }
    log_softmax_rows(s->value.data() + static_cast<std::size_t>(n) * K, K, 1.0, lq.data());
    total -= lq[y];
    for (int i = 0; i < K; ++i) {
      diff[static_cast<std::size_t>(n) * K + i] = static_cast<T>(std::exp(lq[i]) - (i == y ? 1.0 : 0.0));
    }
  }
  auto out = make_var(Tensor<T>(Shape{1, 1, 1, 1}, static_cast<T>(total / N)));
  if (needs_grad(tape, {&s})) {
    out->requires_grad = true;
    const T coef = static_cast<T>(1.0 / N);
    tape.push("ce_loss", [s, out, diff = std::move(diff), coef]() {
      if (!out->has_grad()) return;
      const T g = out->grad[0] * coef;
      Tensor<T>& ds = s->grad_ref();
      for (std::size_t i = 0; i < diff.size(); ++i) ds[i] += g * diff[i];
    });
  }
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  return std::string(buf, res.ptr);
}

const char* const kCsvHeader =
    "epoch,teacher_loss,student_ce,student_kd,student_total,train_acc,test_acc,lr_teacher,lr_student";

std::string csv_row(const EpochRecord& r) {
  std::string s = std::to_string(r.epoch);
  for (double v : {r.teacher_loss, r.student_ce, r.student_kd, r.student_total, r.train_acc, r.test_acc,
                   r.lr_teacher, r.lr_student}) {
    s += ',';
    s += format_number(v);
  }
  return s;
}

namespace {

constexpr std::uint64_t kOrderStream = 0x0D;
constexpr std::uint64_t kTeacherViewStream = 0x7A;
constexpr std::uint64_t kStudentViewStream = 0x5A;

std::vector<std::size_t> epoch_order(std::size_t count, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> perm(count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(hash_seed(seed, kOrderStream, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = count; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

int argmax_row(const float* z, int K) { return static_cast<int>(std::max_element(z, z + K) - z); }

void require_finite(double v, const char* what, int epoch, int step) {
  if (!std::isfinite(v)) {
    throw RuntimeFailure(std::string("non-finite ") + what + " at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(step));
  }
}

struct TeacherStepper {
  Model<float>& model;
  AdamW<float> opt;
  const KdConfig& kd;
  const TrainConfig& cfg;
  const AugmenterConfig& aug;

  TeacherStepper(Model<float>& m, const KdConfig& k, const TrainConfig& c, const AugmenterConfig& a)
      : model(m), opt(m.refs().params, AdamWConfig{0.9, 0.999, 1e-8, c.weight_decay}), kd(k), cfg(c), aug(a) {}

  // Forward, CE step; returns the pre-update logits and the batch loss.
  Tensor<float> step(const Dataset& train, const std::vector<std::size_t>& idx, const std::vector<int>& labels,
                     const Tensor<float>* student_view, double lr, int epoch, int it, double& loss) {
    static const View kTeacher = View::teacher;
    Tensor<float> x = (kd.same_view && student_view) ? *student_view
                                                     : make_batch(train, idx, aug, &kTeacher, cfg.seed, epoch);
    Tape<float> tape;
    auto logits = model.forward(tape, make_var(std::move(x)), Mode::train);
    auto l = ce_loss(tape, logits, labels);
    loss = l->value[0];
    require_finite(loss, "teacher loss", epoch, it);
    opt.zero_grad();
    tape.backward(l);
    opt.step(lr);
    return logits->value;
  }
};

ScheduleConfig schedule_cfg(double lr) {
  ScheduleConfig c;
  c.lr_max = lr;
  return c;
}

}  // namespace

std::string teacher_trace_key(const BackboneConfig& t, std::uint64_t teacher_seed, const TrainConfig& c,
                              const KdConfig& kd, const AugmenterConfig& a, const Dataset& d) {
  std::ostringstream os;
  os.precision(17);
  os << t.name << '|' << to_string(t.block) << '|';
  for (const auto& s : t.stages) os << s.blocks << 'x' << s.channels << ',';
  os << '|' << t.stage_stride << '|' << t.in_channels << '|' << t.num_classes << '|' << to_string(t.insertion);
  os << '|' << teacher_seed << '|' << c.epochs << '|' << c.batch << '|' << c.lr_teacher << '|' << c.weight_decay
     << '|' << c.seed << '|' << kd.same_view;
  const auto& ta = a.teacher;
  os << '|' << ta.hflip_p << ',' << ta.vflip_p << ',' << ta.rotation_deg << ',' << ta.translate_px << ','
     << ta.shear_deg << ',' << ta.perspective_p << ',' << ta.perspective << ',' << ta.erase_p << ',' << ta.erase_area
     << ',' << ta.erase_value;
  if (kd.same_view) {
    const auto& sa = a.student;
    os << '|' << sa.crop_scale_min << ',' << sa.crop_scale_max << ',' << sa.blur_p << ',' << sa.blur_sigma_min << ','
       << sa.blur_sigma_max << ',' << sa.grayscale_p;
  }
  os << '|' << a.preprocess.resize << ',' << a.preprocess.crop;
  // Dataset fingerprint (FNV-1a over labels and pixels).
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint8_t b) { h = (h ^ b) * 1099511628211ULL; };
  for (auto b : d.labels) mix(b);
  for (auto b : d.pixels) mix(b);
  os << '|' << d.count() << 'x' << d.height << 'x' << d.width << ':' << h;
  return os.str();
}

Tensor<float> make_batch(const Dataset& d, const std::vector<std::size_t>& idx, const AugmenterConfig& aug,
                         const View* view, std::uint64_t seed, int epoch) {
  const Image probe = preprocess(d.image(idx.empty() ? 0 : idx[0]), aug.preprocess);
  const int H = probe.h, W = probe.w;
  Tensor<float> out(Shape{static_cast<int>(idx.size()), 1, H, W});
  const std::uint64_t stream = view && *view == View::teacher ? kTeacherViewStream : kStudentViewStream;
  parallel_for(static_cast<int>(idx.size()), [&](int k) {
    Image img = preprocess(d.image(idx[k]), aug.preprocess);
    if (view) {
      Rng rng(hash_seed(seed, stream, static_cast<std::uint64_t>(epoch) * d.count() + idx[k]));
      img = augment(*view, img, aug, rng);
    }
    std::copy(img.px.begin(), img.px.end(), out.data() + static_cast<std::size_t>(k) * H * W);
  });
  return out;
}

std::vector<int> predict(Model<float>& model, const Dataset& d, const PreprocessConfig& pre, int batch) {
  AugmenterConfig aug;
  aug.preprocess = pre;
  std::vector<int> preds(d.count());
  Tape<float> tape(false);
  for (std::size_t b = 0; b < d.count(); b += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(d.count(), b + batch); ++i) idx.push_back(i);
    auto logits = model.forward(tape, make_var(make_batch(d, idx, aug, nullptr, 0, 0)), Mode::eval);
    const int K = logits->value.shape().c;
    for (std::size_t k = 0; k < idx.size(); ++k) preds[idx[k]] = argmax_row(logits->value.data() + k * K, K);
  }
  return preds;
}

RunResult train_online(Model<float>* teacher, Model<float>& student, const Dataset& train, const Dataset& test,
                       const KdConfig& kd, const TrainConfig& cfg, const AugmenterConfig& aug,
                       const TeacherTrace* trace, TeacherTrace* record, const EpochCallback& on_epoch) {
  kd.validate();
  cfg.validate();
  if (train.count() == 0 || test.count() == 0) throw DataError("train_online: empty dataset");
  const int K = student.config().num_classes;
  if (train.num_classes != K || test.num_classes != K) {
    throw ConfigError("train_online: student has " + std::to_string(K) + " classes, data has " +
                      std::to_string(train.num_classes) + "/" + std::to_string(test.num_classes));
  }
  if (kd.enabled && !trace && !teacher) throw ConfigError("train_online: KD needs a teacher or a teacher trace");
  if (teacher && teacher->config().num_classes != K) {
    throw ConfigError("train_online: teacher has " + std::to_string(teacher->config().num_classes) +
                      " classes, student has " + std::to_string(K));
  }
  const int per_epoch = static_cast<int>((train.count() + cfg.batch - 1) / cfg.batch);
  const std::int64_t total_steps = static_cast<std::int64_t>(per_epoch) * cfg.epochs;
  if (trace && static_cast<std::int64_t>(trace->logits.size()) != total_steps) {
    throw ConfigError("train_online: teacher trace has " + std::to_string(trace->logits.size()) + " steps, run needs " +
                      std::to_string(total_steps));
  }
  const bool live_teacher = kd.enabled && !trace;
  std::optional<TeacherStepper> tstep;
  if (live_teacher) tstep.emplace(*teacher, kd, cfg, aug);
  if (record) {
    record->logits.clear();
    record->epoch_loss.clear();
    record->epoch_lr.clear();
  }

  AdamW<float> opt(student.refs().params, AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  static const View kStudent = View::student;
  RunResult result;
  std::int64_t it = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.count(), cfg.seed, epoch);
    const double lr_t = scheduler_lr(Schedule::cosine, epoch, cfg.epochs, schedule_cfg(cfg.lr_teacher));
    double sum_t = 0, sum_ce = 0, sum_kd = 0, sum_total = 0, lr_s = 0;
    std::size_t correct = 0;
    for (int b = 0; b < per_epoch; ++b, ++it) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b) * cfg.batch,
                                   order.begin() + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(b + 1) * cfg.batch,
                                                                            static_cast<std::ptrdiff_t>(order.size())));
      std::vector<int> labels(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) labels[k] = train.labels[idx[k]];
      const double bsz = static_cast<double>(idx.size());
      Tensor<float> xs = make_batch(train, idx, aug, &kStudent, cfg.seed, epoch);

      Tensor<float> t_logits;
      if (kd.enabled) {
        if (trace) {
          t_logits = trace->logits[it];
        } else {
          double tl = 0;
          t_logits = tstep->step(train, idx, labels, &xs, lr_t, epoch, b, tl);
          sum_t += tl * bsz;
          if (record) record->logits.push_back(t_logits);
        }
      }

      lr_s = scheduler_lr(Schedule::onecycle, it, total_steps, schedule_cfg(cfg.lr_student));
      Tape<float> tape;
      auto logits = student.forward(tape, make_var(std::move(xs)), Mode::train);
      auto ce = ce_loss(tape, logits, labels);
      Var<float> loss = ce;
      double kd_value = 0;
      if (kd.enabled) {
        auto kl = kd_loss(tape, logits, t_logits, kd.temperature);
        kd_value = kl->value[0];
        loss = add(tape, ce, scale(tape, kl, static_cast<float>(kd.alpha)));
      }
      require_finite(loss->value[0], "student loss", epoch, b);
      opt.zero_grad();
      tape.backward(loss);
      opt.step(lr_s);

      sum_ce += ce->value[0] * bsz;
      sum_kd += kd_value * bsz;
      sum_total += loss->value[0] * bsz;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        correct += argmax_row(logits->value.data() + k * K, K) == labels[k];
      }
    }
    const double n = static_cast<double>(train.count());
    EpochRecord r;
    r.epoch = epoch + 1;
    if (!kd.enabled) {
      r.teacher_loss = NAN;
      r.lr_teacher = NAN;
      r.student_kd = NAN;
    } else if (trace) {
      r.teacher_loss = trace->epoch_loss[epoch];
      r.lr_teacher = trace->epoch_lr[epoch];
      r.student_kd = sum_kd / n;
    } else {
      r.teacher_loss = sum_t / n;
      r.lr_teacher = lr_t;
      r.student_kd = sum_kd / n;
      if (record) {
        record->epoch_loss.push_back(r.teacher_loss);
        record->epoch_lr.push_back(lr_t);
      }
    }
    r.student_ce = sum_ce / n;
    r.student_total = sum_total / n;
    r.train_acc = static_cast<double>(correct) / n;
    const auto preds = predict(student, test, aug.preprocess, cfg.eval_batch);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i] == test.labels[i];
    r.test_acc = static_cast<double>(ok) / static_cast<double>(test.count());
    r.lr_student = lr_s;
    result.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
  }
  result.final_test_acc = result.epochs.back().test_acc;
  result.final_train_acc = result.epochs.back().train_acc;
  return result;
}

TeacherTrace record_teacher_trace(Model<float>& teacher, const Dataset& train, const KdConfig& kd,
                                  const TrainConfig& cfg, const AugmenterConfig& aug) {
  kd.validate();
  cfg.validate();
  if (train.count() == 0) throw DataError("record_teacher_trace: empty dataset");
  TeacherStepper tstep(teacher, kd, cfg, aug);
  static const View kStudent = View::student;
  const int per_epoch = static_cast<int>((train.count() + cfg.batch - 1) / cfg.batch);
  TeacherTrace trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(train.count(), cfg.seed, epoch);
    const double lr_t = scheduler_lr(Schedule::cosine, epoch, cfg.epochs, schedule_cfg(cfg.lr_teacher));
    double sum_t = 0;
    for (int b = 0; b < per_epoch; ++b) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(b) * cfg.batch,
                                   order.begin() + std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(b + 1) * cfg.batch,
                                                                            static_cast<std::ptrdiff_t>(order.size())));
      std::vector<int> labels(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) labels[k] = train.labels[idx[k]];
      Tensor<float> xs;
      if (kd.same_view) xs = make_batch(train, idx, aug, &kStudent, cfg.seed, epoch);
      double tl = 0;
      trace.logits.push_back(tstep.step(train, idx, labels, kd.same_view ? &xs : nullptr, lr_t, epoch, b, tl));
      sum_t += tl * static_cast<double>(idx.size());
    }
    trace.epoch_loss.push_back(sum_t / static_cast<double>(train.count()));
    trace.epoch_lr.push_back(lr_t);
  }
  return trace;
}

template Var<float> kd_loss(Tape<float>&, const Var<float>&, const Tensor<float>&, double);
template Var<double> kd_loss(Tape<double>&, const Var<double>&, const Tensor<double>&, double);
template Var<float> ce_loss(Tape<float>&, const Var<float>&, const std::vector<int>&);
template Var<double> ce_loss(Tape<double>&, const Var<double>&, const std::vector<int>&);

}  // namespace fsce
