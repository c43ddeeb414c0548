// Copyright 2026 The pvtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "pvtrace/util/json_io.hpp"

namespace pvtrace::verify {

struct RocPoint {
  double threshold;
  double tpr;
  double fpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // descending threshold, +inf first, -inf last
  double auc = 0;
  double fsr = 0;                // tpr at fsr_threshold
  double fsr_threshold = 0;
  double fpr_at_threshold = 0;
  double fpr_budget = 0;

  // Infinite thresholds are written as "+inf" / "-inf".
  Json to_json() const;
};

// Predicts "member" when score >= threshold.
bool membership_decision(double score, double threshold);

// Exact ROC over every distinct observed score plus the two infinite
// sentinels. AUC is the trapezoid area under (fpr, tpr). The reported
// operating point is the lowest threshold whose false-positive rate stays
// within the budget, which is where the true-positive rate peaks among
// feasible thresholds.
RocCurve sweep(std::span<const double> member_scores, std::span<const double> unseen_scores, double fpr_budget);

}  // namespace pvtrace::verify
