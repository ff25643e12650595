#include "oba/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oba/autodiff.hpp"
#include "oba/errors.hpp"

namespace oba {

std::vector<std::size_t> TrainConfig::default_drops(std::size_t epochs) {
  return {epochs * 6 / 10, epochs * 8 / 10};
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !(momentum >= 0.0) || !(weight_decay >= 0.0) || batch_size == 0 || !(lr_drop_factor > 0.0)) {
    throw ConfigError("training configuration has a negative rate or zero batch size");
  }
}

TrainHistory sgd_train(NetworkGraph& g, const Dataset& ds, const TrainConfig& cfg, const PruneMask* mask) {
  cfg.validate();
  if (mask) enforce_mask(g, *mask);
  TrainHistory hist;
  ParamTensors velocity = zeros_like_params(g);
  double lr = cfg.lr;
  const std::size_t n = ds.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t d : cfg.lr_drop_epochs)
      if (d == epoch) lr /= cfg.lr_drop_factor;
    const auto order = epoch_order(n, cfg.seed, epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(start + count));
      const Batch b = make_batch(ds, idx);
      const ForwardCache cache = forward(g, b.inputs, b.targets);
      if (!std::isfinite(cache.loss)) {
        hist.diverged = true;
        return hist;
      }
      const GradientRecord gr = backward(g, cache);
      ParamTensors theta = params_of(g);
      const ParamTensors before = theta;
      for (std::size_t i : g.parameter_layers()) {
        for (int part = 0; part < 2; ++part) {
          Tensor& v = part == 0 ? velocity[i].weight : velocity[i].bias;
          const Tensor& grad = part == 0 ? gr.params[i].weight : gr.params[i].bias;
          Tensor& p = part == 0 ? theta[i].weight : theta[i].bias;
          for (std::size_t q = 0; q < p.size(); ++q) {
            v[q] = cfg.momentum * v[q] + grad[q] + cfg.weight_decay * p[q];
            p[q] -= lr * v[q];
          }
        }
      }
      bool finite = true;
      for (const auto& p : theta) finite = finite && all_finite(p.weight) && all_finite(p.bias);
      if (!finite) {
        set_params(g, before);
        hist.diverged = true;
        return hist;
      }
      set_params(g, theta);
      if (mask) enforce_mask(g, *mask);
      loss_sum += cache.loss * static_cast<double>(count);
      seen += count;
      const Tensor& logits = cache.nodes[g.loss_index()].inputs[0];
      if (g.node(g.loss_index()).kind == LayerKind::CrossEntropyLoss) {
        const std::size_t c = logits.dim(1);
        for (std::size_t s = 0; s < count; ++s) {
          const double* row = logits.data().data() + s * c;
          const auto arg = static_cast<std::size_t>(std::max_element(row, row + c) - row);
          if (static_cast<double>(arg) == b.targets[s]) ++correct;
        }
      }
    }
    hist.epochs.push_back({epoch, lr, loss_sum / static_cast<double>(seen),
                           static_cast<double>(correct) / static_cast<double>(seen)});
  }
  return hist;
}

EvalResult evaluate(const NetworkGraph& g, const Dataset& ds, std::size_t chunk) {
  if (ds.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  const bool classify = g.node(g.loss_index()).kind == LayerKind::CrossEntropyLoss;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    const std::size_t count = std::min(chunk, ds.size() - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(ds, idx);
    const ForwardCache cache = forward(g, b.inputs, b.targets);
    loss_sum += cache.loss * static_cast<double>(count);
    if (!classify) continue;
    const Tensor& logits = cache.nodes[g.loss_index()].inputs[0];
    const std::size_t c = logits.dim(1);
    for (std::size_t s = 0; s < count; ++s) {
      const double* row = logits.data().data() + s * c;
      const auto arg = static_cast<std::size_t>(std::max_element(row, row + c) - row);
      if (static_cast<double>(arg) == b.targets[s]) ++correct;
    }
  }
  return {static_cast<double>(correct) / static_cast<double>(ds.size()), loss_sum / static_cast<double>(ds.size())};
}

}  // namespace oba
