// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "pvtrace/verify/roc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pvtrace/util/error.hpp"

namespace pvtrace::verify {

namespace {

Json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "+inf" : "-inf";
  return t;
}

}  // namespace

Json RocCurve::to_json() const {
  Json pts = Json::array();
  for (const auto& p : points) pts.push_back(Json{{"threshold", threshold_json(p.threshold)}, {"tpr", p.tpr}, {"fpr", p.fpr}});
  return Json{{"points", pts},
              {"auc", auc},
              {"fsr", fsr},
              {"fsr_threshold", threshold_json(fsr_threshold)},
              {"fpr_at_threshold", fpr_at_threshold},
              {"fpr_budget", fpr_budget}};
}

bool membership_decision(double score, double threshold) {
  if (std::isnan(score) || std::isnan(threshold)) throw UsageError("membership decision on NaN");
  return score >= threshold;
}

RocCurve sweep(std::span<const double> member_scores, std::span<const double> unseen_scores, double fpr_budget) {
  if (member_scores.empty() || unseen_scores.empty()) throw UsageError("sweep needs member and unseen scores");
  if (!(fpr_budget > 0.0 && fpr_budget < 1.0)) throw UsageError("fpr budget must be in (0, 1)");
  for (auto list : {member_scores, unseen_scores}) {
    for (double s : list) {
      if (!std::isfinite(s)) throw NumericalError("numerical failure");
    }
  }

  std::vector<double> members(member_scores.begin(), member_scores.end());
  std::vector<double> unseen(unseen_scores.begin(), unseen_scores.end());
  std::sort(members.begin(), members.end(), std::greater<>());
  std::sort(unseen.begin(), unseen.end(), std::greater<>());
  std::vector<double> thresholds(members);
  thresholds.insert(thresholds.end(), unseen.begin(), unseen.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  thresholds.insert(thresholds.begin(), kInf);
  thresholds.push_back(-kInf);

  const double nm = static_cast<double>(members.size()), nu = static_cast<double>(unseen.size());
  // Count comparisons against the budget so that e.g. 1/20 <= 0.05 holds.
  const double max_fp = fpr_budget * nu + 1e-9;

  RocCurve roc;
  roc.fpr_budget = fpr_budget;
  roc.fsr_threshold = kInf;
  std::size_t tp = 0, fp = 0;
  for (double t : thresholds) {
    while (tp < members.size() && members[tp] >= t) ++tp;
    while (fp < unseen.size() && unseen[fp] >= t) ++fp;
    const RocPoint p{t, double(tp) / nm, double(fp) / nu};
    if (!roc.points.empty()) {
      const auto& q = roc.points.back();
      roc.auc += (p.fpr - q.fpr) * (p.tpr + q.tpr) / 2.0;
    }
    if (double(fp) <= max_fp) {
      roc.fsr = p.tpr;
      roc.fsr_threshold = t;
      roc.fpr_at_threshold = p.fpr;
    }
    roc.points.push_back(p);
  }
  return roc;
}

}  // namespace pvtrace::verify
