#include "flowrecon/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowrecon/parallel.hpp"

namespace flowrecon {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("training.batch_size must be positive");
  if (dataset_size == 0) throw ConfigError("training.dataset_size must be positive");
  if (!(adam.learning_rate > 0)) throw ConfigError("training.learning_rate must be positive");
}

double nll(const MultiscaleFlow& flow, std::span<const Tensor> batch) {
  if (batch.empty()) throw ConfigError("nll: empty batch");
  std::vector<double> per(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) { per[i] = flow.nll_with_grad(batch[i], nullptr); });
  double sum = 0.0;
  for (std::size_t i = 0; i < per.size(); ++i) {
    if (!std::isfinite(per[i])) throw NumericError("nll: non-finite value for sample " + std::to_string(i));
    sum += per[i];
  }
  return sum / static_cast<double>(batch.size());
}

NllGradient nll_and_grad(MultiscaleFlow& flow, std::span<const Tensor> batch) {
  if (batch.empty()) throw ConfigError("nll: empty batch");
  std::vector<std::vector<std::vector<double>>> per_grads(batch.size());
  std::vector<double> per(batch.size());
  const auto zero = flow.zero_grads();
  const MultiscaleFlow& cflow = flow;
  parallel_for(batch.size(), [&](std::size_t i) {
    per_grads[i] = zero;
    per[i] = cflow.nll_with_grad(batch[i], &per_grads[i]);
  });
  NllGradient out{0.0, zero};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (!std::isfinite(per[i])) throw NumericError("nll: non-finite value for sample " + std::to_string(i));
    out.value += per[i] * scale;
    for (std::size_t a = 0; a < out.grads.size(); ++a) {
      auto& dst = out.grads[a];
      const auto& src = per_grads[i][a];
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k] * scale;
    }
  }
  return out;
}

TrainResult train(MultiscaleFlow& flow, const TrainConfig& config, const PhantomConfig& phantoms) {
  config.validate();
  PhantomConfig pc = phantoms;
  pc.extent = flow.config().image.height;
  const auto data = gen_dataset(pc, config.dataset_size, 0);
  return train(flow, config, data);
}

TrainResult train(MultiscaleFlow& flow, const TrainConfig& config, std::span<const Tensor> dataset) {
  config.validate();
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  TrainResult result;
  if (config.epochs == 0) {
    result.initial_nll = nll(flow, dataset);
    return result;
  }
  flow.initialize_actnorm(dataset.first(std::min(config.batch_size, dataset.size())));
  result.initial_nll = nll(flow, dataset);

  auto params = flow.parameters();
  std::vector<AdamState> states;
  for (const auto& p : params) states.emplace_back(p.values->size(), config.adam);

  std::vector<std::size_t> order(dataset.size());
  std::vector<Tensor> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)))]);
    }
    double epoch_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k) {
        batch.push_back(dataset[order[k]]);
      }
      NllGradient g;
      try {
        g = nll_and_grad(flow, batch);
        for (std::size_t a = 0; a < params.size(); ++a) adam_step(states[a], *params[a].values, g.grads[a]);
      } catch (const NumericError& e) {
        throw TrainingError("training diverged in epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
      epoch_sum += g.value;
      ++batches;
    }
    const double mean = epoch_sum / static_cast<double>(batches);
    if (!std::isfinite(mean)) {
      throw TrainingError("training diverged in epoch " + std::to_string(epoch + 1) + ": NLL is not finite");
    }
    result.epoch_nll.push_back(mean);
  }
  return result;
}

}  // namespace flowrecon
