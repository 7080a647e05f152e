#include "cvmcl/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cvmcl/parallel.hpp"

namespace cvmcl::embed {

void TrainConfig::validate() const {
  if (!(margin > 0.0)) {
    throw InvalidArgument("TrainConfig: margin must be positive");
  }
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw InvalidArgument("TrainConfig: Adam betas must lie in (0, 1)");
  }
  if (!(learning_rate >= 0.0) || !(adam_eps > 0.0)) {
    throw InvalidArgument("TrainConfig: learning_rate must be >= 0 and adam_eps > 0");
  }
  if (batch_size == 0) {
    throw InvalidArgument("TrainConfig: batch_size must be positive");
  }
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw InvalidArgument("Adam: size mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

double mean_loss(const SiameseModel& model, const PairSource& pairs, double margin) {
  if (pairs.size() == 0) {
    return 0.0;
  }
  std::vector<double> losses(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const LabeledPair p = pairs.pair(i);
    losses[i] = contrastive_loss(model.embed_ground(p.ground), model.embed_sat(p.sat), p.label, margin);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

TrainResult train(const PairSource& pairs, SiameseModel model, const TrainConfig& config,
                  const PairSource* validation, const EpochCallback& on_epoch) {
  config.validate();
  const std::size_t n = pairs.size();
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    n_pos += pairs.label(i) == 1 ? 1 : 0;
  }
  if (n == 0 || n_pos == 0 || n_pos == n) {
    throw InvalidArgument("train: need at least one positive and one negative pair");
  }

  Adam opt_ground(model.ground.values.size(), config.learning_rate, config.adam_beta1, config.adam_beta2,
                  config.adam_eps);
  Adam opt_sat(model.sat.values.size(), config.learning_rate, config.adam_beta1, config.adam_beta2,
               config.adam_eps);

  TrainResult result{model, {}, {}, {}, 0};
  double best_val = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(config.seed, 0x747261696e);  // "train"

  std::vector<PairGradients> sample_grads;
  std::vector<double> g_ground(model.ground.values.size());
  std::vector<double> g_sat(model.sat.values.size());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n - start);
      sample_grads.assign(count, {});
      parallel_for(count, [&](std::size_t k) {
        sample_grads[k] = backward(model, pairs.pair(order[start + k]), config.margin);
      });

      std::fill(g_ground.begin(), g_ground.end(), 0.0);
      std::fill(g_sat.begin(), g_sat.end(), 0.0);
      double batch_loss = 0.0;
      for (const PairGradients& g : sample_grads) {
        batch_loss += g.loss;
        for (std::size_t i = 0; i < g_ground.size(); ++i) {
          g_ground[i] += g.ground[i];
        }
        for (std::size_t i = 0; i < g_sat.size(); ++i) {
          g_sat[i] += g.sat[i];
        }
      }
      const double inv = 1.0 / static_cast<double>(count);
      batch_loss *= inv;
      if (!std::isfinite(batch_loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << ", step " << opt_ground.steps()
            << "; lower learning_rate (currently " << config.learning_rate << ") or check input standardization";
        throw Error(msg.str());
      }
      for (double& v : g_ground) {
        v *= inv;
      }
      for (double& v : g_sat) {
        v *= inv;
      }
      opt_ground.step(model.ground.values, g_ground);
      opt_sat.step(model.sat.values, g_sat);
      result.step_loss.push_back(batch_loss);
      epoch_sum += batch_loss * static_cast<double>(count);
    }
    const double train_loss = epoch_sum / static_cast<double>(n);
    result.epoch_loss.push_back(train_loss);

    double val = std::numeric_limits<double>::quiet_NaN();
    if (validation != nullptr && validation->size() > 0) {
      val = mean_loss(model, *validation, config.margin);
      result.val_loss.push_back(val);
      if (val < best_val) {
        best_val = val;
        result.model = model;
        result.best_epoch = epoch;
      }
    }
    if (on_epoch) {
      on_epoch(epoch, train_loss, val);
    }
  }
  if (validation == nullptr || validation->size() == 0 || config.epochs == 0) {
    result.model = std::move(model);
    result.best_epoch = config.epochs == 0 ? 0 : config.epochs - 1;
  }
  return result;
}

void round_to_float(SiameseModel& model) {
  const auto round = [](std::vector<double>& v) {
    for (double& x : v) {
      x = static_cast<double>(static_cast<float>(x));
    }
  };
  round(model.ground.values);
  round(model.sat.values);
  round(model.ground_stats.mean);
  round(model.ground_stats.stddev);
  round(model.sat_stats.mean);
  round(model.sat_stats.stddev);
}

}  // namespace cvmcl::embed
