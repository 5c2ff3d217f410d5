#pragma once

// Classification metrics from (true label, class probabilities) records:
// confusion matrix, accuracy, per-class / macro / micro precision, recall and
// F1, and one-vs-rest ROC AUC with tie-corrected ranks.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "radt/tensor.hpp"

namespace radt {

struct EvalRecord {
  std::size_t label = 0;
  std::vector<double> probs;
};

enum class Averaging { none, macro, micro };

inline std::size_t argmax(const std::vector<double>& v) {
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::size_t class_count(const std::vector<EvalRecord>& recs) {
  if (recs.empty()) throw Error("metrics: no records");
  const std::size_t n = recs.front().probs.size();
  if (n < 2) throw Error("metrics: need at least 2 classes");
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].probs.size() != n)
      throw ShapeError("metrics: record " + std::to_string(i) + " has " + std::to_string(recs[i].probs.size()) +
                       " probabilities, expected " + std::to_string(n));
    if (recs[i].label >= n) throw Error("metrics: record " + std::to_string(i) + " has label out of range");
  }
  return n;
}

/// counts[true][predicted], prediction = argmax (lowest index on ties).
inline std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<EvalRecord>& recs) {
  const std::size_t n = class_count(recs);
  std::vector<std::vector<std::size_t>> m(n, std::vector<std::size_t>(n, 0));
  for (const auto& r : recs) ++m[r.label][argmax(r.probs)];
  return m;
}

inline double accuracy(const std::vector<EvalRecord>& recs) {
  const auto m = confusion_matrix(recs);
  std::size_t hit = 0;
  for (std::size_t c = 0; c < m.size(); ++c) hit += m[c][c];
  return double(hit) / double(recs.size());
}

/// A metric summary. `per_class` is empty for micro averaging; classes whose
/// denominator is zero score 0 and are listed in `zero_division`.
struct Score {
  double value = 0;
  std::vector<double> per_class;
  std::vector<std::size_t> zero_division;
};

namespace detail {

struct Counts {
  std::vector<double> tp, fp, fn;
};

inline Counts counts(const std::vector<EvalRecord>& recs) {
  const auto m = confusion_matrix(recs);
  const std::size_t n = m.size();
  Counts c{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t p = 0; p < n; ++p) {
      if (t == p) c.tp[t] += double(m[t][p]);
      else c.fn[t] += double(m[t][p]), c.fp[p] += double(m[t][p]);
    }
  return c;
}

inline double ratio(double num, double den, std::size_t cls, std::vector<std::size_t>& flags) {
  if (den == 0) {
    flags.push_back(cls);
    return 0.0;
  }
  return num / den;
}

inline double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

enum class Kind { precision, recall, f1 };

inline Score score(const std::vector<EvalRecord>& recs, Averaging avg, Kind kind) {
  const auto c = counts(recs);
  const std::size_t n = c.tp.size();
  Score s;
  auto one = [&](double tp, double fp, double fn, std::size_t cls) {
    switch (kind) {
      case Kind::precision: return ratio(tp, tp + fp, cls, s.zero_division);
      case Kind::recall: return ratio(tp, tp + fn, cls, s.zero_division);
      default: return ratio(2 * tp, 2 * tp + fp + fn, cls, s.zero_division);
    }
  };
  if (avg == Averaging::micro) {
    const double tp = std::accumulate(c.tp.begin(), c.tp.end(), 0.0);
    const double fp = std::accumulate(c.fp.begin(), c.fp.end(), 0.0);
    const double fn = std::accumulate(c.fn.begin(), c.fn.end(), 0.0);
    s.value = one(tp, fp, fn, n);
    return s;
  }
  for (std::size_t k = 0; k < n; ++k) s.per_class.push_back(one(c.tp[k], c.fp[k], c.fn[k], k));
  s.value = mean(s.per_class);
  return s;
}

}  // namespace detail

/// With Averaging::none the per-class vector is the result and `value` is its
/// unweighted mean, which coincides with macro averaging.
inline Score precision(const std::vector<EvalRecord>& r, Averaging a) { return detail::score(r, a, detail::Kind::precision); }
inline Score recall(const std::vector<EvalRecord>& r, Averaging a) { return detail::score(r, a, detail::Kind::recall); }
inline Score f1(const std::vector<EvalRecord>& r, Averaging a) { return detail::score(r, a, detail::Kind::f1); }

/// Mann-Whitney AUC with average ranks for ties. Empty when either side has
/// no samples.
inline std::optional<double> binary_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0, P = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (double(i + 1) + double(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) pos_rank_sum += avg_rank, P += 1;
    i = j;
  }
  const double N = double(n) - P;
  if (P == 0 || N == 0) return std::nullopt;
  return (pos_rank_sum - P * (P + 1) / 2.0) / (P * N);
}

struct AucResult {
  std::optional<double> value;         // empty when no class could be scored
  std::vector<std::optional<double>> per_class;
  std::vector<std::size_t> excluded;   // classes lacking positives or negatives
};

/// One-vs-rest macro AUC. With two classes the AUC of class 1 is reported.
inline AucResult auc(const std::vector<EvalRecord>& recs) {
  const std::size_t n = class_count(recs);
  AucResult r;
  std::vector<double> s(recs.size());
  std::vector<bool> pos(recs.size());
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < recs.size(); ++i) s[i] = recs[i].probs[c], pos[i] = recs[i].label == c;
    r.per_class.push_back(binary_auc(s, pos));
    if (!r.per_class.back()) r.excluded.push_back(c);
  }
  if (n == 2) {
    r.value = r.per_class[1];
    return r;
  }
  double total = 0;
  std::size_t used = 0;
  for (const auto& v : r.per_class)
    if (v) total += *v, ++used;
  if (used) r.value = total / double(used);
  return r;
}

struct MetricsReport {
  double accuracy = 0;
  AucResult auc;
  Score precision_macro, recall_macro, f1_macro;  // per-class vectors live here
  Score precision_micro, recall_micro, f1_micro;
  std::vector<std::vector<std::size_t>> confusion;
};

inline MetricsReport evaluate_records(const std::vector<EvalRecord>& recs) {
  MetricsReport m;
  m.accuracy = accuracy(recs);
  m.auc = auc(recs);
  m.precision_macro = precision(recs, Averaging::macro);
  m.recall_macro = recall(recs, Averaging::macro);
  m.f1_macro = f1(recs, Averaging::macro);
  m.precision_micro = precision(recs, Averaging::micro);
  m.recall_micro = recall(recs, Averaging::micro);
  m.f1_micro = f1(recs, Averaging::micro);
  m.confusion = confusion_matrix(recs);
  return m;
}

/// Stable JSON field names: accuracy, auc, f1_per_class, f1_macro, f1_micro,
/// precision, recall (macro), plus per-class and micro extras.
inline nlohmann::ordered_json to_json(const MetricsReport& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
  nlohmann::ordered_json j;
  j["accuracy"] = m.accuracy;
  j["auc"] = opt(m.auc.value);
  j["f1_per_class"] = m.f1_macro.per_class;
  j["f1_macro"] = m.f1_macro.value;
  j["f1_micro"] = m.f1_micro.value;
  j["precision"] = m.precision_macro.value;
  j["recall"] = m.recall_macro.value;
  j["precision_per_class"] = m.precision_macro.per_class;
  j["recall_per_class"] = m.recall_macro.per_class;
  j["precision_micro"] = m.precision_micro.value;
  j["recall_micro"] = m.recall_micro.value;
  auto per = nlohmann::ordered_json::array();
  for (const auto& v : m.auc.per_class) per.push_back(opt(v));
  j["auc_per_class"] = per;
  j["auc_excluded_classes"] = m.auc.excluded;
  j["zero_division_classes"] = {{"precision", m.precision_macro.zero_division},
                                {"recall", m.recall_macro.zero_division},
                                {"f1", m.f1_macro.zero_division}};
  j["confusion"] = m.confusion;
  return j;
}

}  // namespace radt
