#include "dcpt/train.hpp"

#include <cmath>
#include <memory>
#include <numeric>
#include <optional>

#include <json.hpp>

#include "dcpt/augment.hpp"
#include "dcpt/image.hpp"

namespace dcpt {

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["mean_loss"] = mean_loss;
  j["train_acc"] = train_acc;
  return j.dump();
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

namespace {

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& images) {
  const Shape& s = images.front().shape();
  Shape shape{images.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  std::vector<T> data;
  data.reserve(shape_numel(shape));
  for (const auto& im : images) {
    if (im.shape() != s) throw DataError("images in a batch differ in shape");
    data.insert(data.end(), im.data().begin(), im.data().end());
  }
  return Tensor<T>::from_data(std::move(shape), std::move(data));
}

// Logits row -> (fake probability, argmax prediction).
template <typename T>
std::pair<double, int> score_row(const Tensor<T>& logits, std::size_t row) {
  const std::size_t k = logits.dim(1);
  const auto l = logits.data().subspan(row * k, k);
  double mx = l[0];
  int arg = 0;
  for (std::size_t c = 1; c < k; ++c) {
    if (l[c] > mx) {
      mx = l[c];
      arg = static_cast<int>(c);
    }
  }
  double z = 0;
  for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(l[c]) - mx);
  const double p1 = k > 1 ? std::exp(static_cast<double>(l[1]) - mx) / z : 0.0;
  return {p1, arg};
}

}  // namespace

template <typename T>
std::vector<EpochLog> train_model(Model<T>& model, std::size_t n, const SampleLoader<T>& load,
                                  std::span<const int> labels, const TrainOptions& options,
                                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (n == 0) throw DataError("training set is empty");
  if (labels.size() != n) throw DataError("label count does not match sample count");
  Adam<T> adam(parameters<T>(model), options.adam);
  const RandomSource root(options.seed);
  RandomSource shuffle_rng = root.fork(10);
  RandomSource augment_rng = root.fork(11);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> logs;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double loss_sum = 0;
    std::size_t correct = 0;
    for (const auto& [b0, b1] : batch_ranges(n, options.batch)) {
      std::vector<Tensor<T>> images;
      std::vector<int> targets;
      for (std::size_t i = b0; i < b1; ++i) {
        images.push_back(load(order[i], augment_rng));
        targets.push_back(labels[order[i]]);
      }
      adam.zero_grad();
      auto logits = model.forward(stack(images), Mode::train);
      auto loss = cross_entropy(logits, std::span<const int>(targets));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("training diverged: loss is " + std::to_string(value) + " at step " +
                           std::to_string(step) + " (epoch " + std::to_string(epoch) + ")");
      }
      for (std::size_t r = 0; r < targets.size(); ++r) correct += score_row(logits, r).second == targets[r];
      backward(loss);
      adam.step();
      loss_sum += value * static_cast<double>(targets.size());
      ++step;
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (options.stop_at_full_accuracy && correct == n) break;
  }
  return logs;
}

template <typename T>
EvalReport evaluate_model(Model<T>& model, std::size_t n, const SampleLoader<T>& load, std::span<const int> labels,
                          std::size_t batch) {
  if (n == 0) throw DataError("evaluation set is empty");
  if (labels.size() != n) throw DataError("label count does not match sample count");
  RandomSource unused(0);
  std::vector<double> scores;
  std::vector<int> predictions;
  for (std::size_t b0 = 0; b0 < n; b0 += batch) {
    const std::size_t b1 = std::min(n, b0 + batch);
    std::vector<Tensor<T>> images;
    for (std::size_t i = b0; i < b1; ++i) images.push_back(load(i, unused));
    auto logits = model.forward(stack(images), Mode::eval);
    for (std::size_t r = 0; r < b1 - b0; ++r) {
      auto [p, pred] = score_row(logits, r);
      scores.push_back(p);
      predictions.push_back(pred);
    }
  }
  return make_report(scores, predictions, labels);
}

template <typename T>
SampleLoader<T> manifest_loader(const Manifest& entries, std::size_t side, bool augment) {
  auto cache = std::make_shared<std::vector<std::optional<Tensor<T>>>>(entries.size());
  return [entries, side, augment, cache](std::size_t index, RandomSource& rng) {
    const auto& e = entries.at(index);
    auto& slot = (*cache)[index];
    if (!slot) slot = load_image<T>(e.image_path, side);
    if (augment && e.augment_copy > 0) return dcpt::augment(*slot, rng);
    return *slot;
  };
}

Manifest filter_split(const Manifest& manifest, Split split) {
  Manifest out;
  for (const auto& e : manifest) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

std::vector<int> manifest_labels(const Manifest& manifest) {
  std::vector<int> out;
  for (const auto& e : manifest) out.push_back(e.label);
  return out;
}

#define DCPT_INSTANTIATE_TRAIN(T)                                                                                  \
  template std::vector<EpochLog> train_model(Model<T>&, std::size_t, const SampleLoader<T>&, std::span<const int>, \
                                             const TrainOptions&, const std::function<void(const EpochLog&)>&);     \
  template EvalReport evaluate_model(Model<T>&, std::size_t, const SampleLoader<T>&, std::span<const int>,         \
                                     std::size_t);                                                                 \
  template SampleLoader<T> manifest_loader<T>(const Manifest&, std::size_t, bool);

DCPT_INSTANTIATE_TRAIN(float)
DCPT_INSTANTIATE_TRAIN(double)

}  // namespace dcpt
