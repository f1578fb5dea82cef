#include "dcpt/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "dcpt/errors.hpp"

namespace dcpt {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
  for (auto l : labels) {
    if (l != 0 && l != 1) throw DataError("labels must be 0 or 1");
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto n_fake = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_real = labels.size() - n_fake;
  if (n_fake == 0 || n_real == 0) throw DataError("AUC needs both real and fake samples");

  // Twice the mid-rank keeps everything in integers: a tie group spanning
  // ranks i+1..j has doubled mid-rank i+j+1.
  const auto order = order_by_score(scores, false);
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_mid = i + j + 1;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) doubled_rank_sum += doubled_mid;
    }
    i = j;
  }
  // U = R_fake - n_fake(n_fake+1)/2, doubled.
  const std::uint64_t doubled_u = doubled_rank_sum - n_fake * (n_fake + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(n_fake) * static_cast<double>(n_real));
}

std::vector<std::pair<double, double>> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto n_fake = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_real = labels.size() - n_fake;
  if (n_fake == 0 || n_real == 0) throw DataError("ROC needs both real and fake samples");
  const auto order = order_by_score(scores, true);
  std::vector<std::pair<double, double>> roc{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == scores[order[i]]; ++j) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
    }
    roc.emplace_back(static_cast<double>(fp) / n_real, static_cast<double>(tp) / n_fake);
    i = j;
  }
  return roc;
}

EvalReport make_report(std::span<const double> scores, std::span<const int> predictions, std::span<const int> labels) {
  check_inputs(scores, labels);
  if (predictions.size() != labels.size()) throw DataError("predictions and labels differ in length");
  if (labels.empty()) throw DataError("nothing to evaluate");
  EvalReport r;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predictions[i] == labels[i];
  r.acc = static_cast<double>(correct) / static_cast<double>(labels.size());
  r.n_fake = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  r.n_real = labels.size() - r.n_fake;
  r.auc = auc(scores, labels);
  r.roc = roc_curve(scores, labels);
  r.scores.assign(scores.begin(), scores.end());
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["acc"] = acc;
  j["auc"] = auc;
  j["n_real"] = n_real;
  j["n_fake"] = n_fake;
  j["roc"] = nlohmann::json::array();
  for (const auto& [fpr, tpr] : roc) j["roc"].push_back({fpr, tpr});
  j["scores"] = scores;
  return j.dump(2) + "\n";
}

}  // namespace dcpt
