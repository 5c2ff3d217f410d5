#pragma once

// Student-teacher system. The teacher is a global-focal network with class and
// region heads, pre-trained on gaze-derived regions (HVAT). The student is a
// second global-focal network whose features are fused with the teacher's at
// both TWL points; its region prediction is pulled toward the teacher's by the
// visual attention loss.

#include <optional>
#include <string>
#include <vector>

#include "radt/augment.hpp"
#include "radt/functional.hpp"
#include "radt/global_focal.hpp"
#include "radt/losses.hpp"
#include "radt/optim.hpp"

namespace radt {

/// Weights of the student (first) and teacher (second) term of an
/// inter-network TWL connection.
struct InterWeights {
  double student = 0.5;
  double teacher = 0.5;
  friend bool operator==(const InterWeights&, const InterWeights&) = default;
};

struct StudentTeacherConfig {
  GlobalFocalConfig student = GlobalFocalConfig::standard();
  GlobalFocalConfig teacher = GlobalFocalConfig::standard();
  std::size_t n_classes = 2;
  std::size_t teacher_classes = 3;
  bool use_teacher = true;
  bool teacher_frozen = true;
  InterWeights inter_lambda_in{};
  InterWeights inter_lambda_out{};
  double val_giou = 1.0, val_mse = 1.0;    // student region vs teacher region
  double hvat_giou = 1.0, hvat_mse = 1.0;  // teacher region vs gaze region
  bool augment = true;
  AugmentProfile teacher_global = profiles::teacher_global;
  AugmentProfile teacher_focal = profiles::teacher_focal;
  AugmentProfile student_global = profiles::student_global;
  AugmentProfile student_focal = profiles::student_focal;

  void validate() const {
    student.validate();
    if (n_classes < 2) throw Error("StudentTeacherConfig: need at least 2 classes");
    for (double w : {val_giou, val_mse, hvat_giou, hvat_mse})
      if (!(std::isfinite(w) && w >= 0)) throw Error("StudentTeacherConfig: loss weights must be finite and >= 0");
    for (double w : {inter_lambda_in.student, inter_lambda_in.teacher, inter_lambda_out.student,
                     inter_lambda_out.teacher})
      if (!std::isfinite(w)) throw Error("StudentTeacherConfig: inter-network TWL weights must be finite");
    for (const auto& p : {teacher_global, teacher_focal, student_global, student_focal}) p.validate();
    if (use_teacher) {
      teacher.validate();
      if (teacher_classes < 1) throw Error("StudentTeacherConfig: teacher needs at least 1 class");
      if (teacher.dim != student.dim || teacher.window != student.window || teacher.patch != student.patch ||
          teacher.channels != student.channels)
        throw Error("StudentTeacherConfig: teacher and student must share dim, window, patch and channels");
    }
  }
};

/// Ablation presets. Single-pathway presets zero the other pathway's TWL
/// weights in both networks; presets without "hvat" have no teacher, presets
/// without "val" have zero VAL weights.
inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"focal-only",     "global-only",     "focal-hvat", "global-hvat",
                                              "focal-hvat-val", "global-hvat-val", "full"};
  return names;
}

inline StudentTeacherConfig apply_preset(StudentTeacherConfig c, const std::string& name) {
  const bool focal = name.starts_with("focal-");
  const bool global = name.starts_with("global-");
  const bool hvat = name.find("hvat") != std::string::npos || name == "full";
  const bool val = name.ends_with("-val") || name == "full";
  bool known = false;
  for (const auto& n : preset_names()) known |= n == name;
  if (!known) throw Error("unknown preset '" + name + "'");
  for (auto* net : {&c.student, &c.teacher}) {
    if (focal) net->lambda_in = net->lambda_out = {0.0, 1.0};
    if (global) net->lambda_in = net->lambda_out = {1.0, 0.0};
  }
  c.use_teacher = hvat;
  if (!val) c.val_giou = c.val_mse = 0.0;
  return c;
}

// ---------------------------------------------------------------------------
// Heads and models
// ---------------------------------------------------------------------------

template <class T>
struct Heads {
  LinearParams<T> cls, det;

  Heads() = default;
  Heads(std::size_t dim, std::size_t n_classes, CounterRng rng) : cls(dim, n_classes, rng), det(dim, 4, rng) {}

  /// Global average pool over tokens, then class logits (B, n) and a region
  /// (B, 4) in (0, 1) as (cx, cy, h, w).
  std::pair<Var<T>, Var<T>> operator()(Binder<T>& bind, const TokenGrid<T>& z) const {
    auto pooled = mean_axis(z.tokens, 1);
    return {cls(bind, pooled), sigmoid(det(bind, pooled))};
  }

  [[nodiscard]] std::size_t n_classes() const { return cls.bias.size(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    cls.visit(prefix + ".cls", f);
    det.visit(prefix + ".det", f);
  }
};

template <class T>
struct Model {
  GlobalFocalNet<T> net;
  Heads<T> heads;

  Model() = default;
  Model(const GlobalFocalConfig& cfg, std::size_t n_classes, CounterRng rng)
      : net(cfg, rng.split(0)), heads(cfg.dim, n_classes, rng.split(1)) {}

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    net.visit(prefix, f);
    heads.visit(prefix + ".head", f);
  }
  template <class F>
  void visit_buffers(const std::string& prefix, F&& f) {
    net.visit_buffers(prefix, f);
  }
};

template <class T>
struct ModelOutput {
  NetworkOutput<T> features;
  Var<T> logits, region;
};

/// Pathway inputs for one batch (B, H, W, C).
template <class T>
struct Views {
  Tensor<T> global, focal;
};

template <class T>
Views<T> make_views(const Tensor<T>& images, const AugmentProfile& g, const AugmentProfile& f,
                    const CounterRng* aug) {
  if (!aug) return {images, images};
  return {augment_batch(images, g, aug->split(0)), augment_batch(images, f, aug->split(1))};
}

/// Inter-network TWL: l_s * z_s + l_t * z_t, smoothed when training.
template <class T>
TokenGrid<T> inter_twl(const TokenGrid<T>& z_s, const TokenGrid<T>& z_t, const InterWeights& l, SemaState<T>& sema,
                       bool train) {
  auto z = twl_combine(z_s, z_t, l.student, l.teacher);
  return train ? sema_update(sema, z) : z;
}

/// Teacher forward on its own inputs; heads read the final fused feature.
template <class T>
ModelOutput<T> teacher_forward(Binder<T>& bind, Model<T>& m, const Views<T>& v, bool train) {
  auto xg = m.net.embed(bind, v.global);
  auto xf = m.net.embed(bind, v.focal);
  auto feats = m.net.forward(bind, xg, xf, train);
  auto [logits, region] = m.heads(bind, feats.z_out);
  return {feats, logits, region};
}

template <class T>
class StudentTeacher {
 public:
  StudentTeacher() = default;
  StudentTeacher(const StudentTeacherConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const CounterRng root(seed);
    student_ = Model<T>(cfg_.student, cfg_.n_classes, root.split(1));
    if (cfg_.use_teacher) teacher_ = Model<T>(cfg_.teacher, cfg_.teacher_classes, root.split(2));
  }

  [[nodiscard]] const StudentTeacherConfig& config() const { return cfg_; }
  [[nodiscard]] bool has_teacher() const { return teacher_.has_value(); }
  Model<T>& student() { return student_; }
  Model<T>& teacher() {
    if (!teacher_) throw Error("StudentTeacher: this configuration has no teacher");
    return *teacher_;
  }
  SemaState<T>& inter_sema_in() { return inter_in_; }
  SemaState<T>& inter_sema_out() { return inter_out_; }
  AdamState& student_adam() { return adam_student_; }
  AdamState& teacher_adam() { return adam_teacher_; }

  /// Student forward. With a teacher, the student's intermediate output is
  /// fused with the teacher's before the second stage, and the final outputs
  /// are fused before the heads.
  ModelOutput<T> student_forward(Binder<T>& bind, const Views<T>& v, const NetworkOutput<T>* taps, bool train) {
    auto& net = student_.net;
    auto xg = net.embed(bind, v.global);
    auto xf = net.embed(bind, v.focal);
    auto z_in = net.stage_in(bind, xg, xf, train);
    if (taps) z_in = inter_twl(z_in, taps->z_in, cfg_.inter_lambda_in, inter_in_, train);
    auto z_out = net.stage_out(bind, z_in, train);
    if (taps) z_out = inter_twl(z_out, taps->z_out, cfg_.inter_lambda_out, inter_out_, train);
    auto [logits, region] = student_.heads(bind, z_out);
    return {{z_in, z_out}, logits, region};
  }

  template <class F>
  void visit(F&& f) {
    student_.visit("student", f);
    if (teacher_) teacher_->visit("teacher", f);
  }
  template <class F>
  void visit_buffers(F&& f) {
    student_.visit_buffers("student", f);
    if (teacher_) teacher_->visit_buffers("teacher", f);
    f("inter.sema_in", inter_in_);
    f("inter.sema_out", inter_out_);
  }

 private:
  StudentTeacherConfig cfg_{};
  Model<T> student_{};
  std::optional<Model<T>> teacher_{};
  SemaState<T> inter_in_{}, inter_out_{};
  AdamState adam_student_{}, adam_teacher_{};
};

// ---------------------------------------------------------------------------
// Training steps and inference
// ---------------------------------------------------------------------------

struct StepLosses {
  double total = 0, ce = 0, giou = 0, mse = 0;
  std::size_t degenerate = 0;  // zero-area region pairs in the batch
};

template <class T>
void check_batch(const Tensor<T>& images, const std::vector<std::size_t>& labels, std::size_t n_classes,
                 const char* who) {
  if (images.rank() != 4) throw ShapeError(std::string(who) + ": images must be (B,H,W,C), got " + to_string(images.shape()));
  if (labels.size() != images.dim(0))
    throw ShapeError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(images.dim(0)) + " images");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= n_classes)
      throw Error(std::string(who) + ": label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                  " exceeds " + std::to_string(n_classes) + " classes");
}

template <class T, class Module>
void apply_adam(Module& m, const std::string& prefix, const Binder<T>& bind, const Gradients<T>& grads, AdamState& st,
                double lr) {
  std::vector<Tensor<T>*> params;
  std::vector<Tensor<T>> gs;
  m.visit(prefix, [&](const std::string&, Tensor<T>& t) {
    params.push_back(&t);
    gs.push_back(bind.grad(grads, t));
  });
  adam_step(params, gs, st, lr);
}

/// One teacher update on (images, labels, gaze regions):
/// CE + w_giou * GIoU + w_mse * MSE. `aug` selects the teacher augmentation
/// stream; nullptr trains on clean images.
template <class T>
StepLosses hvat_train_step(Model<T>& teacher, AdamState& adam, const StudentTeacherConfig& cfg, const Tensor<T>& images,
                           const std::vector<std::size_t>& labels, const std::vector<AttentionRegion>& regions, double lr,
                           const CounterRng* aug) {
  check_batch(images, labels, teacher.heads.n_classes(), "hvat_train_step");
  if (regions.size() != labels.size())
    throw Error("hvat_train_step: missing attention region (" + std::to_string(regions.size()) + " regions for " +
                std::to_string(labels.size()) + " samples)");
  Tape<T> tape;
  Binder<T> bind(tape, true);
  auto out = teacher_forward(bind, teacher, make_views(images, cfg.teacher_global, cfg.teacher_focal, aug), true);
  StepLosses r;
  auto ce = cross_entropy(out.logits, labels);
  auto target = regions_to_tensor<T>(regions);
  auto g = giou_loss(out.region, target, &r.degenerate);
  auto m = keypoint_mse(out.region, tape.constant(target));
  auto total = add(ce, add(scale(g, static_cast<T>(cfg.hvat_giou)), scale(m, static_cast<T>(cfg.hvat_mse))));
  auto grads = tape.backward(total);
  apply_adam(teacher, "teacher", bind, grads, adam, lr);
  r.total = total.value()[0];
  r.ce = ce.value()[0];
  r.giou = g.value()[0];
  r.mse = m.value()[0];
  return r;
}

/// One student update: CE on labels plus the visual attention loss against
/// the teacher's region. A frozen teacher runs in eval mode and is never
/// updated; otherwise both networks take an Adam step.
template <class T>
StepLosses student_train_step(StudentTeacher<T>& sys, const Tensor<T>& images, const std::vector<std::size_t>& labels,
                              double lr, const CounterRng* aug) {
  const auto& cfg = sys.config();
  check_batch(images, labels, cfg.n_classes, "student_train_step");
  Tape<T> tape;
  Binder<T> sbind(tape, true);
  const bool frozen = cfg.teacher_frozen;
  Binder<T> tbind(tape, !frozen);

  std::optional<ModelOutput<T>> t_out;
  if (sys.has_teacher()) {
    std::optional<CounterRng> t_aug;
    if (aug) t_aug = aug->split(10);
    t_out = teacher_forward(tbind, sys.teacher(),
                            make_views(images, cfg.teacher_global, cfg.teacher_focal, t_aug ? &*t_aug : nullptr),
                            !frozen);
  }
  std::optional<CounterRng> s_aug;
  if (aug) s_aug = aug->split(20);
  auto s_out = sys.student_forward(sbind, make_views(images, cfg.student_global, cfg.student_focal, s_aug ? &*s_aug : nullptr),
                                   t_out ? &t_out->features : nullptr, true);

  StepLosses r;
  auto ce = cross_entropy(s_out.logits, labels);
  auto total = ce;
  if (t_out) {
    auto target = detach(t_out->region);
    auto g = giou_loss(s_out.region, target.value(), &r.degenerate);
    auto m = keypoint_mse(s_out.region, target);
    r.giou = g.value()[0];
    r.mse = m.value()[0];
    if (cfg.val_giou > 0 || cfg.val_mse > 0)
      total = add(ce, add(scale(g, static_cast<T>(cfg.val_giou)), scale(m, static_cast<T>(cfg.val_mse))));
  }
  auto grads = tape.backward(total);
  apply_adam(sys.student(), "student", sbind, grads, sys.student_adam(), lr);
  if (t_out && !frozen) apply_adam(sys.teacher(), "teacher", tbind, grads, sys.teacher_adam(), lr);
  r.total = total.value()[0];
  r.ce = ce.value()[0];
  return r;
}

template <class T>
struct Prediction {
  Tensor<T> probs;                      // (B, n)
  std::vector<AttentionRegion> regions;  // one per image
};

/// Eval-mode forward of the whole system on clean images. No state changes.
template <class T>
Prediction<T> predict(StudentTeacher<T>& sys, const Tensor<T>& images) {
  Tape<T> tape;
  Binder<T> bind(tape, false);
  const Views<T> v{images, images};
  std::optional<ModelOutput<T>> t_out;
  if (sys.has_teacher()) t_out = teacher_forward(bind, sys.teacher(), v, false);
  auto s = sys.student_forward(bind, v, t_out ? &t_out->features : nullptr, false);
  return {softmax(s.logits, 1).value(), tensor_to_regions(s.region.value())};
}

/// Eval-mode teacher alone, as used after HVAT training.
template <class T>
Prediction<T> teacher_predict(Model<T>& teacher, const Tensor<T>& images) {
  Tape<T> tape;
  Binder<T> bind(tape, false);
  auto out = teacher_forward(bind, teacher, Views<T>{images, images}, false);
  return {softmax(out.logits, 1).value(), tensor_to_regions(out.region.value())};
}

}  // namespace radt
