#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dcpt/manifest.hpp"
#include "dcpt/metrics.hpp"
#include "dcpt/model.hpp"
#include "dcpt/optim.hpp"

namespace dcpt {

/// Produces sample `index` as a [3, S, S] tensor. The generator is the
/// training augmentation stream; loaders that do not augment ignore it.
template <typename T>
using SampleLoader = std::function<Tensor<T>(std::size_t index, RandomSource& rng)>;

struct TrainOptions {
  AdamOptions adam;
  std::size_t batch = 32;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  bool stop_at_full_accuracy = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0;  // average of the per-batch mean losses, weighted by batch size
  double train_acc = 0;  // from the train-mode predictions made during the epoch

  std::string to_json() const;
};

/// Batch boundaries for n samples. A trailing batch of one sample is folded
/// into the previous batch, since batch statistics need at least two values.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch);

/// Seeded mini-batch Adam on the mean cross-entropy. Throws NumericError
/// naming the step if the loss stops being finite.
template <typename T>
std::vector<EpochLog> train_model(Model<T>& model, std::size_t n, const SampleLoader<T>& load,
                                  std::span<const int> labels, const TrainOptions& options,
                                  const std::function<void(const EpochLog&)>& on_epoch = {});

template <typename T>
EvalReport evaluate_model(Model<T>& model, std::size_t n, const SampleLoader<T>& load, std::span<const int> labels,
                          std::size_t batch = 32);

/// Loader over manifest entries. Decoded frames are cached; entries with
/// augment_copy > 0 receive a fresh dihedral augmentation per load when
/// `augment` is set.
template <typename T>
SampleLoader<T> manifest_loader(const Manifest& entries, std::size_t side, bool augment);

Manifest filter_split(const Manifest& manifest, Split split);
std::vector<int> manifest_labels(const Manifest& manifest);

}  // namespace dcpt
