#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dcpt {

/// Mann-Whitney AUC from mid-ranks; ties between a fake and a real score
/// count one half. labels are 0 (real) or 1 (fake). Throws DataError unless
/// both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// (fpr, tpr) points, one per distinct score threshold, from (0,0) to (1,1).
std::vector<std::pair<double, double>> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  double acc = 0;
  double auc = 0;
  std::vector<std::pair<double, double>> roc;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  std::vector<double> scores;

  std::string to_json() const;
};

/// score = fake probability; prediction is fake when the fake logit wins the
/// argmax (ties go to class 0).
EvalReport make_report(std::span<const double> scores, std::span<const int> predictions, std::span<const int> labels);

}  // namespace dcpt
