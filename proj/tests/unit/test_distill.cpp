#include <doctest.h>

#include <cmath>

#include "fsce/distill.hpp"
#include "helpers.hpp"

using namespace fsce;

namespace {

Tensor<double> logits(std::vector<double> v) {
  const int k = static_cast<int>(v.size());
  return Tensor<double>(Shape{1, k, 1, 1}, std::move(v));
}

double kd(const Tensor<double>& s, const Tensor<double>& t, double T) {
  Tape<double> tape(false);
  return kd_loss(tape, make_var(s), t, T)->value[0];
}

double ce(const Tensor<double>& s, const std::vector<int>& y) {
  Tape<double> tape(false);
  return ce_loss(tape, make_var(s), y)->value[0];
}

// Independent evaluation of T^2 * mean_n KL(softmax(t/T) || softmax(s/T)).
double kd_ref(const Tensor<double>& s, const Tensor<double>& t, double T) {
  const int N = s.shape().n, K = s.shape().c;
  double total = 0;
  for (int n = 0; n < N; ++n) {
    std::vector<double> p(K), q(K);
    double zp = 0, zq = 0;
    for (int k = 0; k < K; ++k) {
      p[k] = std::exp(t.at(n, k, 0, 0) / T);
      q[k] = std::exp(s.at(n, k, 0, 0) / T);
      zp += p[k];
      zq += q[k];
    }
    for (int k = 0; k < K; ++k) total += p[k] / zp * (std::log(p[k] / zp) - std::log(q[k] / zq));
  }
  return T * T * total / N;
}

struct Fixture {
  Dataset train, test;
  Fixture() {
    SceneConfig sc;
    sc.size = 16;
    sc.seed = 5;
    train = generate_dataset(sc, 6);
    sc.seed = 6;
    test = generate_dataset(sc, 2);
  }
};

BackboneConfig tiny(const std::string& name) {
  BackboneConfig c;
  c.name = name;
  c.block = BlockKind::plain;
  c.stages = {{1, 4}, {1, 8}};
  return c;
}

TrainConfig short_run() {
  TrainConfig t;
  t.epochs = 2;
  t.batch = 8;
  t.seed = 3;
  return t;
}

std::vector<Tensor<float>> param_values(Model<float>& m) {
  std::vector<Tensor<float>> out;
  for (auto* p : m.refs().params) out.push_back(p->value());
  for (auto* b : m.refs().buffers) out.push_back(b->value);
  return out;
}

}  // namespace

TEST_CASE("KD loss examples") {
  CHECK(kd(logits({std::log(3.0), 0}), logits({0, 0}), 1.0) == doctest::Approx(0.5 * std::log(4.0 / 3)).epsilon(1e-9));
  CHECK(std::abs(kd(logits({std::log(3.0), 0}), logits({0, 0}), 1.0) - 0.14384) <= 1e-5);
  const auto s = test::random_tensor<double>({5, 4, 1, 1}, 1, -4, 4);
  for (double T : {0.5, 1.0, 3.0, 9.0}) CHECK(std::abs(kd(s, s, T)) <= 1e-7);
  CHECK_THROWS_AS(kd(s, s, 0.0), ConfigError);
  CHECK_THROWS_AS(kd(s, s, -1.0), ConfigError);
  CHECK_THROWS_AS(kd(s, Tensor<double>(Shape{5, 3, 1, 1}), 1.0), ShapeError);
}

TEST_CASE("KD loss is nonnegative and obeys the temperature-squared identity") {
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    const double T = rng.uniform(0.2, 10.0);
    const auto s = test::random_tensor<double>({3, 5, 1, 1}, 2 * i + 1, -6, 6);
    const auto t = test::random_tensor<double>({3, 5, 1, 1}, 2 * i + 2, -6, 6);
    Tensor<double> sd(s.shape()), td(t.shape());
    for (std::size_t j = 0; j < s.size(); ++j) {
      sd[j] = s[j] / T;
      td[j] = t[j] / T;
    }
    const double at_T = kd(s, t, T);
    CHECK(at_T >= 0);
    CHECK(std::abs(at_T - T * T * kd(sd, td, 1.0)) <= 1e-6 * std::max(1.0, at_T));
    CHECK(std::abs(at_T - kd_ref(s, t, T)) <= 1e-9 * std::max(1.0, at_T));
  }
}

TEST_CASE("high temperature softens toward uniform") {
  const auto s = test::random_tensor<double>({4, 6, 1, 1}, 3, -5, 5);
  Tape<double> tape(false);
  auto q = softmax(tape, scale(tape, make_var(s), 1e-4));
  for (std::size_t i = 0; i < q->value.size(); ++i) CHECK(std::abs(q->value[i] - 1.0 / 6) <= 1e-3);
}

TEST_CASE("cross-entropy cases") {
  CHECK(ce(Tensor<double>(Shape{2, 5, 1, 1}, 0.7), {0, 3}) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  Tensor<double> conf(Shape{1, 4, 1, 1}, 0.0);
  conf[2] = 20;
  CHECK(ce(conf, {2}) < 1e-6);
  auto base = test::random_tensor<double>({1, 4, 1, 1}, 4);
  double prev = ce(base, {1});
  for (int i = 0; i < 5; ++i) {
    base[1] += 0.5;
    const double now = ce(base, {1});
    CHECK(now < prev);
    prev = now;
  }
  CHECK_THROWS_WITH_AS(ce(Tensor<double>(Shape{3, 4, 1, 1}), {0, 1, 4}), doctest::Contains("sample 2"), DataError);
}

TEST_CASE("total loss combines cross-entropy and weighted KD") {
  const auto s = test::random_tensor<double>({4, 3, 1, 1}, 5);
  const auto t = test::random_tensor<double>({4, 3, 1, 1}, 6);
  const std::vector<int> y{0, 2, 1, 1};
  Tape<double> tape(false);
  auto sv = make_var(s);
  const double alpha = 0.3;
  auto total = add(tape, ce_loss(tape, sv, y), scale(tape, kd_loss(tape, sv, t, 3.0), alpha));
  CHECK(std::abs(total->value[0] - (ce(s, y) + alpha * kd(s, t, 3.0))) <= 1e-6);
}

TEST_CASE("teacher parameters receive no gradient through the student loss") {
  Model<float> teacher(tiny("t"), 1), student(tiny("s"), 2);
  auto tr = teacher.refs();
  for (auto* p : tr.params) p->zero_grad();
  Tape<float> tape;
  const auto x = make_var(test::random_tensor<float>({4, 1, 16, 16}, 1));
  auto t = teacher.forward(tape, x, Mode::train);
  auto s = student.forward(tape, x, Mode::train);
  auto loss = add(tape, ce_loss(tape, s, {0, 1, 2, 3}), scale(tape, kd_loss(tape, s, t->value, 3.0), 0.5f));
  tape.backward(loss);
  for (auto* p : tr.params)
    for (std::size_t i = 0; i < p->numel(); ++i) REQUIRE(p->grad()[i] == 0.0f);
  bool student_moved = false;
  for (auto* p : student.refs().params)
    for (std::size_t i = 0; i < p->numel() && !student_moved; ++i) student_moved = p->grad()[i] != 0.0f;
  CHECK(student_moved);
}

TEST_CASE("alpha zero reproduces the teacher-free run bitwise") {
  Fixture f;
  const TrainConfig cfg = short_run();
  const AugmenterConfig aug;
  KdConfig off;
  off.enabled = false;
  KdConfig zero;
  zero.alpha = 0;
  Model<float> s1(tiny("s"), 9), s2(tiny("s"), 9), teacher(tiny("t"), 10);
  const auto a = train_online(nullptr, s1, f.train, f.test, off, cfg, aug);
  const auto b = train_online(&teacher, s2, f.train, f.test, zero, cfg, aug);
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) {
    CHECK(a.epochs[e].student_ce == b.epochs[e].student_ce);
    CHECK(a.epochs[e].train_acc == b.epochs[e].train_acc);
    CHECK(a.epochs[e].test_acc == b.epochs[e].test_acc);
    CHECK(a.epochs[e].lr_student == b.epochs[e].lr_student);
  }
  const auto pa = param_values(s1), pb = param_values(s2);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(test::bitwise_equal(pa[i], pb[i]));
  CHECK(std::isnan(a.epochs[0].teacher_loss));
  CHECK(std::isfinite(b.epochs[0].teacher_loss));
}

TEST_CASE("a recorded teacher trace stands in for the live teacher") {
  Fixture f;
  const TrainConfig cfg = short_run();
  const AugmenterConfig aug;
  const KdConfig kd;
  Model<float> t_live(tiny("t"), 10), t_rec(tiny("t"), 10), s_live(tiny("s"), 9), s_trace(tiny("s"), 9);
  TeacherTrace recorded;
  const auto live = train_online(&t_live, s_live, f.train, f.test, kd, cfg, aug, nullptr, &recorded);
  const auto trace = record_teacher_trace(t_rec, f.train, kd, cfg, aug);
  REQUIRE(trace.logits.size() == recorded.logits.size());
  for (std::size_t i = 0; i < trace.logits.size(); ++i) CHECK(test::bitwise_equal(trace.logits[i], recorded.logits[i]));
  const auto replay = train_online(nullptr, s_trace, f.train, f.test, kd, cfg, aug, &trace);
  for (std::size_t e = 0; e < live.epochs.size(); ++e) CHECK(csv_row(live.epochs[e]) == csv_row(replay.epochs[e]));
  const auto pa = param_values(s_live), pb = param_values(s_trace);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(test::bitwise_equal(pa[i], pb[i]));
}

TEST_CASE("training rejects inconsistent setups") {
  Fixture f;
  const TrainConfig cfg = short_run();
  const AugmenterConfig aug;
  auto five = tiny("s");
  five.num_classes = 5;
  Model<float> s(five, 1), ok(tiny("s"), 1);
  KdConfig off;
  off.enabled = false;
  CHECK_THROWS_AS(train_online(nullptr, s, f.train, f.test, off, cfg, aug), ConfigError);
  CHECK_THROWS_AS(train_online(nullptr, ok, f.train, f.test, KdConfig{}, cfg, aug), ConfigError);
  TrainConfig bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(train_online(nullptr, ok, f.train, f.test, off, bad, aug), ConfigError);
  KdConfig badkd;
  badkd.alpha = 1.5;
  CHECK_THROWS_AS(badkd.validate(), ConfigError);
}

TEST_CASE("epoch log rows") {
  CHECK(std::string(kCsvHeader) ==
        "epoch,teacher_loss,student_ce,student_kd,student_total,train_acc,test_acc,lr_teacher,lr_student");
  EpochRecord r;
  r.epoch = 3;
  r.teacher_loss = 1.25;
  r.student_ce = 0.5;
  r.student_kd = 0.0625;
  r.student_total = 0.53125;
  r.train_acc = 0.75;
  r.test_acc = 0.5;
  r.lr_teacher = 2.5e-4;
  r.lr_student = 2.5e-3;
  CHECK(csv_row(r) == "3,1.250000,0.500000,0.062500,0.531250,0.750000,0.500000,0.000250,0.002500");
  CHECK(format_number(std::nan("")) == "nan");
}
