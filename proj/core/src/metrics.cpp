#include "nsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "nsd/error.hpp"

namespace nsd::metrics {

Confusion confusion_at(std::span<const float> scores, std::span<const int> labels,
                       double threshold) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kDimension, "confusion_at: scores and labels differ in length");
  }
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] > threshold;
    if (labels[i] == 1) {
      predicted ? ++c.tp : ++c.fn;
    } else {
      predicted ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::kDimension, "roc_auc: scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double pos = 0, neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error(ErrorKind::kData, "roc_auc: labels must be 0 or 1");
    y == 1 ? ++pos : ++neg;
  }
  if (pos == 0 || neg == 0) {
    throw Error(ErrorKind::kData, "roc_auc: undefined with a single class present");
  }
  // Trapezoids between distinct thresholds; a tied group forms one diagonal step.
  double area = 0, tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    double dtp = 0, dfp = 0;
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      labels[order[j]] == 1 ? ++dtp : ++dfp;
      ++j;
    }
    area += dfp * (tp + 0.5 * dtp);
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (pos * neg);
}

double roc_auc(std::span<const float> scores, std::span<const int> labels) {
  std::vector<double> d(scores.begin(), scores.end());
  return roc_auc(std::span<const double>(d), labels);
}

double cohen_kappa(const Confusion& c) {
  // Integer form (n * agree - chance) / (n^2 - chance) with a single rounding.
  using Wide = __int128;
  const Wide n = Wide(c.total());
  if (n == 0) return 0.0;
  const Wide agree = Wide(c.tp + c.tn);
  const Wide chance = Wide(c.tp + c.fn) * Wide(c.tp + c.fp) + Wide(c.fp + c.tn) * Wide(c.fn + c.tn);
  const Wide den = n * n - chance;
  if (den <= 0) return 0.0;
  return double(n * agree - chance) / double(den);
}

Rates precision_recall_accuracy(const Confusion& c) {
  Rates r;
  auto ratio = [&](std::size_t num, std::size_t den, const char* what) {
    if (den == 0) {
      r.warnings.push_back(std::string(what) + " undefined (0/0), reported as 0");
      return 0.0;
    }
    return double(num) / double(den);
  };
  r.precision = ratio(c.tp, c.tp + c.fp, "precision");
  r.recall = ratio(c.tp, c.tp + c.fn, "recall");
  r.accuracy = ratio(c.tp + c.tn, c.total(), "accuracy");
  return r;
}

FoldReport evaluate_fold(std::span<const float> scores, std::span<const int> labels,
                         std::size_t fold) {
  FoldReport f;
  f.fold = fold;
  f.confusion = confusion_at(scores, labels);
  Rates r = precision_recall_accuracy(f.confusion);
  f.accuracy = r.accuracy;
  f.precision = r.precision;
  f.recall = r.recall;
  f.warnings = std::move(r.warnings);
  f.kappa = cohen_kappa(f.confusion);
  try {
    f.auc = roc_auc(scores, labels);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kData) throw;
    f.auc_defined = false;
    f.auc = 0;
    f.warnings.emplace_back(e.what());
  }
  return f;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::kData, "quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = q * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(s.n);
  if (s.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / double(s.n - 1));
  }
  s.median = quantile(values, 0.5);
  s.q1 = quantile(values, 0.25);
  s.q3 = quantile(values, 0.75);
  return s;
}

EvalReport aggregate_folds(std::vector<FoldReport> folds) {
  if (folds.empty()) throw Error(ErrorKind::kData, "aggregate_folds: no folds");
  EvalReport r;
  std::vector<double> auc, acc, rec, prec, kap;
  for (const auto& f : folds) {
    if (f.auc_defined) auc.push_back(f.auc);
    acc.push_back(f.accuracy);
    rec.push_back(f.recall);
    prec.push_back(f.precision);
    kap.push_back(f.kappa);
  }
  r.auc = summarize(auc);
  r.accuracy = summarize(acc);
  r.recall = summarize(rec);
  r.precision = summarize(prec);
  r.kappa = summarize(kap);
  r.folds = std::move(folds);
  return r;
}

namespace {

nlohmann::json summary_json(const Summary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"median", s.median},
          {"q1", s.q1},     {"q3", s.q3},   {"n", s.n}};
}

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) {
    nlohmann::json fj = {{"fold", f.fold},
                         {"accuracy", f.accuracy},
                         {"recall", f.recall},
                         {"precision", f.precision},
                         {"kappa", f.kappa},
                         {"tp", f.confusion.tp},
                         {"fp", f.confusion.fp},
                         {"tn", f.confusion.tn},
                         {"fn", f.confusion.fn},
                         {"warnings", f.warnings}};
    fj["auc"] = f.auc_defined ? nlohmann::json(f.auc) : nlohmann::json(nullptr);
    j["folds"].push_back(std::move(fj));
  }
  j["aggregate"] = {{"auc", summary_json(auc)},
                    {"accuracy", summary_json(accuracy)},
                    {"recall", summary_json(recall)},
                    {"precision", summary_json(precision)},
                    {"kappa", summary_json(kappa)},
                    {"threshold", kThreshold}};
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  char buf[256];
  out << "fold,accuracy,auc,recall,precision,kappa,tp,fp,tn,fn\n";
  for (const auto& f : folds) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%s,%.6f,%.6f,%.6f,%zu,%zu,%zu,%zu\n", f.fold,
                  f.accuracy, f.auc_defined ? std::to_string(f.auc).c_str() : "",
                  f.recall, f.precision, f.kappa, f.confusion.tp, f.confusion.fp,
                  f.confusion.tn, f.confusion.fn);
    out << buf;
  }
  auto row = [&](const char* name, double Summary::*field) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,,,,\n", name,
                  accuracy.*field, auc.*field, recall.*field, precision.*field, kappa.*field);
    out << buf;
  };
  row("mean", &Summary::mean);
  row("std", &Summary::std);
  row("median", &Summary::median);
  row("q1", &Summary::q1);
  row("q3", &Summary::q3);
  return out.str();
}

}  // namespace nsd::metrics
