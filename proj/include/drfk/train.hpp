#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "drfk/data.hpp"
#include "drfk/losses.hpp"
#include "drfk/network.hpp"
#include "drfk/optim.hpp"

namespace drfk {

struct TrainConfig {
  int patch = 256;
  int batch = 4;
  long steps = 1000;
  double lr_max = 2e-4;
  double lr_min = 1e-6;
  std::uint64_t seed = 0;
  LossMode reduction = LossMode::pixel_mean;
  LossWeights loss;
  long save_every = 0;  // emit state every N steps; 0 = final only

  void validate(int levels) const {
    const int div = 1 << (levels - 1);
    require(patch >= div && patch % div == 0, "train: patch ", patch,
            " must be a positive multiple of 2^(levels-1) = ", div);
    require(batch >= 1, "train: batch must be >= 1, got ", batch);
    require(steps >= 0, "train: steps must be >= 0, got ", steps);
    require(lr_max >= 0 && lr_min >= 0 && lr_min <= lr_max,
            "train: need 0 <= lr_min <= lr_max, got [", lr_min, ", ", lr_max,
            "]");
    require(save_every >= 0, "train: save_every must be >= 0, got ",
            save_every);
    loss.validate();
  }
};

struct LogRow {
  long step = 0;
  double loss = 0;
  double lr = 0;
};

// Everything the optimizer needs to continue: parameters live in the model,
// first/second moments per parameter name, and the global step counter.
// Serializing this struct is what makes resume bit-exact.
template <class T>
struct TrainState {
  Model<T> model;
  std::map<std::string, AdamState<T>> opt;
  long step = 0;
};

// One (blurry, sharp) minibatch stacked along N. The batch seed alone fixes
// the pair choices, crop offsets, and flips; per-step seeds come from
// mix_seed(train seed, step), so a resumed run replays the same stream.
template <class T>
PatchPair<T> make_batch(const std::vector<ScenePair>& pairs, int patch,
                        int batch, std::uint64_t batch_seed) {
  require(!pairs.empty(), "make_batch: no training pairs");
  Rng rng(batch_seed);
  PatchPair<T> out;
  out.blurry = Tensor<T>(batch, 3, patch, patch);
  out.sharp = Tensor<T>(batch, 3, patch, patch);
  const std::size_t stride = std::size_t(3) * patch * patch;
  for (int n = 0; n < batch; ++n) {
    const int idx = rng.uniform_int(int(pairs.size()));
    const std::uint64_t ps = rng.bits();
    PatchPair<T> p = sample_patch<T>(pairs[std::size_t(idx)], patch, ps);
    std::copy(p.blurry.data(), p.blurry.data() + stride,
              out.blurry.data() + std::size_t(n) * stride);
    std::copy(p.sharp.data(), p.sharp.data() + stride,
              out.sharp.data() + std::size_t(n) * stride);
  }
  return out;
}

// One optimizer step at the state's current step index. The learning rate
// follows the cosine schedule over cfg.steps; lr == 0 (or an empty schedule)
// evaluates the loss but leaves parameters and moments untouched.
template <class T>
LogRow train_step(TrainState<T>& state, const std::vector<ScenePair>& pairs,
                  const TrainConfig& cfg) {
  const std::uint64_t bs = mix_seed(cfg.seed, std::uint64_t(state.step));
  PatchPair<T> batch = make_batch<T>(pairs, cfg.patch, cfg.batch, bs);

  LossWeights w = cfg.loss;
  w.levels = state.model.config().levels;

  Graph<T> g;
  std::vector<Value<T>> preds = state.model.forward(g, batch.blurry);
  std::vector<Value<T>> targets;
  for (Tensor<T>& t : image_pyramid(batch.sharp, w.levels))
    targets.push_back(g.input(std::move(t)));
  Value<T> loss = total_loss(g, preds, targets, w, cfg.reduction);

  const double lval = double(loss.val()[0]);
  require_numeric(std::isfinite(lval), "train: non-finite loss ", lval,
                  " at step ", state.step, " (batch seed ", bs, ")");

  const double lr =
      cfg.steps > 0 ? cosine_lr(state.step, cfg.steps, cfg.lr_max, cfg.lr_min)
                    : 0.0;
  if (lr > 0) {
    g.backward(loss);
    for (const auto& [name, id] : g.params()) {
      Tensor<T> grad = g.grad_of(Value<T>{&g, id});
      require_numeric(grad.all_finite(), "train: non-finite gradient for ",
                      name, " at step ", state.step, " (batch seed ", bs, ")");
      adam_step(state.model.param(name), grad, state.opt[name], lr);
    }
  }
  ++state.step;
  return LogRow{state.step - 1, lval, lr};
}

// Full loop from the state's current step up to cfg.steps. `snapshot`, when
// set, fires after every save_every-th step and once more at the end.
template <class T>
std::vector<LogRow> train(
    TrainState<T>& state, const std::vector<ScenePair>& pairs,
    const TrainConfig& cfg,
    const std::function<void(const TrainState<T>&)>& snapshot = {}) {
  cfg.validate(state.model.config().levels);
  std::vector<LogRow> log;
  while (state.step < cfg.steps) {
    log.push_back(train_step(state, pairs, cfg));
    if (snapshot && cfg.save_every > 0 && state.step % cfg.save_every == 0 &&
        state.step < cfg.steps)
      snapshot(state);
  }
  if (snapshot) snapshot(state);
  return log;
}

}  // namespace drfk
