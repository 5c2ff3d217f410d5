#pragma once

// Epoch loops for teacher (HVAT) and student training with early stopping on
// validation loss. The best-epoch system is restored at the end.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "radt/checkpoint.hpp"
#include "radt/dataset.hpp"
#include "radt/metrics.hpp"

namespace radt {

using EpochLogger = std::function<void(const nlohmann::ordered_json&)>;

struct EvalLosses {
  double loss = 0, ce = 0, giou = 0, mse = 0, accuracy = 0;
};

struct TrainSummary {
  std::size_t epochs_run = 0, best_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> chunks(std::size_t n, std::size_t b) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return batches(idx, b);
}

inline void accumulate_eval(EvalLosses& acc, const EvalLosses& part, double weight) {
  acc.loss += part.loss * weight;
  acc.ce += part.ce * weight;
  acc.giou += part.giou * weight;
  acc.mse += part.mse * weight;
  acc.accuracy += part.accuracy * weight;
}

inline double correct_fraction(const Tensor<float>& logits, const std::vector<std::size_t>& labels) {
  const std::size_t n = logits.dim(1);
  std::size_t hit = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const float* row = logits.data() + b * n;
    if (std::size_t(std::max_element(row, row + n) - row) == labels[b]) ++hit;
  }
  return double(hit) / double(labels.size());
}

}  // namespace detail

/// Eval-mode teacher losses over a dataset (clean images).
inline EvalLosses evaluate_teacher(Model<float>& teacher, const StudentTeacherConfig& cfg, const Dataset& d,
                                   std::size_t batch) {
  EvalLosses total;
  for (const auto& idx : detail::chunks(d.size(), batch)) {
    const auto images = d.gather(idx);
    const auto labels = d.gather_labels(idx);
    const auto regions = d.gather_regions(idx);
    Tape<float> tape;
    Binder<float> bind(tape, false);
    auto out = teacher_forward(bind, teacher, Views<float>{images, images}, false);
    EvalLosses e;
    e.ce = cross_entropy(out.logits, labels).value()[0];
    const auto target = regions_to_tensor<float>(regions);
    e.giou = giou_loss(out.region, target, nullptr).value()[0];
    e.mse = keypoint_mse(out.region, tape.constant(target)).value()[0];
    e.loss = e.ce + cfg.hvat_giou * e.giou + cfg.hvat_mse * e.mse;
    e.accuracy = detail::correct_fraction(out.logits.value(), labels);
    detail::accumulate_eval(total, e, double(idx.size()) / double(d.size()));
  }
  return total;
}

/// Eval-mode student losses: CE plus the weighted attention loss against the
/// teacher's region when a teacher is present.
inline EvalLosses evaluate_student(StudentTeacher<float>& sys, const Dataset& d, std::size_t batch) {
  const auto& cfg = sys.config();
  EvalLosses total;
  for (const auto& idx : detail::chunks(d.size(), batch)) {
    const auto images = d.gather(idx);
    const auto labels = d.gather_labels(idx);
    Tape<float> tape;
    Binder<float> bind(tape, false);
    const Views<float> v{images, images};
    std::optional<ModelOutput<float>> t_out;
    if (sys.has_teacher()) t_out = teacher_forward(bind, sys.teacher(), v, false);
    auto s = sys.student_forward(bind, v, t_out ? &t_out->features : nullptr, false);
    EvalLosses e;
    e.ce = cross_entropy(s.logits, labels).value()[0];
    e.loss = e.ce;
    if (t_out) {
      e.giou = giou_loss(s.region, t_out->region.value(), nullptr).value()[0];
      e.mse = keypoint_mse(s.region, tape.constant(t_out->region.value())).value()[0];
      e.loss += cfg.val_giou * e.giou + cfg.val_mse * e.mse;
    }
    e.accuracy = detail::correct_fraction(s.logits.value(), labels);
    detail::accumulate_eval(total, e, double(idx.size()) / double(d.size()));
  }
  return total;
}

struct TrainOptions {
  std::size_t epochs = 50, patience = 20, batch_size = 64;
  LrSchedule schedule{};
  std::uint64_t seed = 0;
  bool augment = true;
  /// Optional early exit after an epoch (e.g. target accuracy reached).
  std::function<bool(const EvalLosses& train_eval)> stop_when{};
  bool eval_train = false;  // also report eval-mode loss on the training set
};

inline TrainOptions options_from(const RunConfig& c) {
  TrainOptions o;
  o.epochs = c.epochs;
  o.patience = c.patience;
  o.batch_size = c.batch_size;
  o.schedule = c.schedule();
  o.seed = c.seed;
  o.augment = c.augment;
  return o;
}

namespace detail {

/// Shared loop: `step(idx, lr, aug)` trains one batch, `eval(d)` scores a set.
template <class Step, class Eval>
TrainSummary train_loop(StudentTeacher<float>& sys, AdamState& adam, const SplitData& data, const TrainOptions& o,
                        const char* phase, Step&& step, Eval&& eval, const EpochLogger& log) {
  const Dataset& val = data.val.size() ? data.val : data.train;
  TrainSummary sum;
  StudentTeacher<float> best = sys;
  std::size_t since_best = 0;
  const CounterRng aug_root = CounterRng(o.seed).split(0xa06);
  for (std::size_t epoch = 1; epoch <= o.epochs; ++epoch) {
    StepLosses mean{};
    double lr = 0;
    for (const auto& idx : batches(epoch_order(data.train.size(), o.seed, epoch), o.batch_size)) {
      lr = lr_at(o.schedule, adam.step);
      const auto aug = aug_root.split(adam.step);
      const auto r = step(idx, lr, o.augment ? &aug : nullptr);
      const double w = double(idx.size()) / double(data.train.size());
      mean.total += r.total * w, mean.ce += r.ce * w, mean.giou += r.giou * w, mean.mse += r.mse * w;
      mean.degenerate += r.degenerate;
    }
    if (!std::isfinite(mean.total)) throw Error(std::string(phase) + ": training loss diverged at epoch " + std::to_string(epoch));
    const auto v = eval(val);
    std::optional<EvalLosses> tr;
    if (o.eval_train || o.stop_when) tr = eval(data.train);
    sum.epochs_run = epoch;
    const bool improved = v.loss < sum.best_loss;
    if (improved) {
      sum.best_loss = v.loss, sum.best_epoch = epoch, since_best = 0;
      best = sys;
    } else {
      ++since_best;
    }
    if (log) {
      nlohmann::ordered_json j;
      j["phase"] = phase;
      j["epoch"] = epoch;
      j["step"] = adam.step;
      j["lr"] = lr;
      j["train_loss"] = mean.total;
      j["train_ce"] = mean.ce;
      j["train_giou"] = mean.giou;
      j["train_mse"] = mean.mse;
      j["degenerate_regions"] = mean.degenerate;
      if (tr) j["train_eval_loss"] = tr->loss, j["train_eval_ce"] = tr->ce, j["train_accuracy"] = tr->accuracy;
      j["val_loss"] = v.loss;
      j["val_ce"] = v.ce;
      j["val_accuracy"] = v.accuracy;
      j["best_epoch"] = sum.best_epoch;
      log(j);
    }
    if (o.stop_when && o.stop_when(*tr)) break;
    if (since_best >= o.patience) {
      sum.stopped_early = true;
      break;
    }
  }
  sys = std::move(best);
  return sum;
}

}  // namespace detail

/// HVAT: trains the teacher on labels and gaze regions.
inline TrainSummary train_teacher(StudentTeacher<float>& sys, const SplitData& data, const TrainOptions& o,
                                  const EpochLogger& log = {}) {
  // fail before any training if a region is missing
  for (const auto* d : {&data.train, &data.val})
    if (d->size()) (void)d->gather_regions(detail::chunks(d->size(), d->size()).front());
  const auto& cfg = sys.config();
  return detail::train_loop(
      sys, sys.teacher_adam(), data, o, "teacher",
      [&](const std::vector<std::size_t>& idx, double lr, const CounterRng* aug) {
        return hvat_train_step(sys.teacher(), sys.teacher_adam(), cfg, data.train.gather(idx), data.train.gather_labels(idx),
                               data.train.gather_regions(idx), lr, aug);
      },
      [&](const Dataset& d) { return evaluate_teacher(sys.teacher(), cfg, d, o.batch_size); }, log);
}

inline TrainSummary train_student(StudentTeacher<float>& sys, const SplitData& data, const TrainOptions& o,
                                  const EpochLogger& log = {}) {
  return detail::train_loop(
      sys, sys.student_adam(), data, o, "student",
      [&](const std::vector<std::size_t>& idx, double lr, const CounterRng* aug) {
        return student_train_step(sys, data.train.gather(idx), data.train.gather_labels(idx), lr, aug);
      },
      [&](const Dataset& d) { return evaluate_student(sys, d, o.batch_size); }, log);
}

/// Probabilities for every sample, in dataset order.
inline std::vector<EvalRecord> predict_records(StudentTeacher<float>& sys, const Dataset& d, std::size_t batch,
                                               std::vector<AttentionRegion>* regions = nullptr) {
  std::vector<EvalRecord> out;
  for (const auto& idx : detail::chunks(d.size(), batch)) {
    const auto p = predict(sys, d.gather(idx));
    const std::size_t n = p.probs.dim(1);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      EvalRecord r{d.labels.empty() ? 0 : d.labels[idx[b]], {}};
      for (std::size_t c = 0; c < n; ++c) r.probs.push_back(p.probs[b * n + c]);
      out.push_back(std::move(r));
      if (regions) regions->push_back(p.regions[b]);
    }
  }
  return out;
}

}  // namespace radt
