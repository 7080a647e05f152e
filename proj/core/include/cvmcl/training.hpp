#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cvmcl/siamese.hpp"

namespace cvmcl::embed {

struct TrainConfig {
  double margin = 8.0;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double neg_per_pos = 9.0;
  std::uint64_t seed = 5;

  void validate() const;
};

/// Adam with bias correction over one flat parameter vector.
class Adam {
public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
  void step(std::span<double> params, std::span<const double> grad);
  [[nodiscard]] std::size_t steps() const noexcept { return t_; }

private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

struct TrainResult {
  SiameseModel model;
  std::vector<double> epoch_loss;  // mean training loss per epoch
  std::vector<double> step_loss;   // mean minibatch loss per optimizer step
  std::vector<double> val_loss;    // per epoch, empty without validation
  std::size_t best_epoch = 0;
};

/// Mean contrastive loss of a model over every pair of a source.
double mean_loss(const SiameseModel& model, const PairSource& pairs, double margin);

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double val_loss)>;

/// Minibatch Adam on the mean contrastive loss. Per-sample gradients are
/// computed in parallel and reduced in sample order, so results do not
/// depend on the worker count. With a validation source the returned model
/// is the one with the lowest validation loss; otherwise the final one.
/// Throws Error when the loss becomes non-finite.
TrainResult train(const PairSource& pairs, SiameseModel model, const TrainConfig& config,
                  const PairSource* validation = nullptr, const EpochCallback& on_epoch = {});

/// Rounds every parameter and statistic to the nearest float, the precision
/// of the checkpoint format.
void round_to_float(SiameseModel& model);

}  // namespace cvmcl::embed
