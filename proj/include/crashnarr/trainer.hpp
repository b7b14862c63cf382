#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/transformer.hpp"

namespace crashnarr {

enum class TrainMode {
  Lora,     // decoder, frozen base, adapters on `projection_set`
  FullCls,  // encoder + CLS head, every parameter trainable
};

struct TrainConfig {
  TrainMode mode = TrainMode::Lora;
  std::vector<Projection> projection_set = {Projection::Q, Projection::K, Projection::V};
  int rank = 8;
  double alpha = 16.0;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;  // L2 penalty on trained parameters
  double grad_clip = 1.0;     // global L2 norm, 0 disables
  bool cosine_decay = true;  // learning rate follows a half cosine to 0 over `steps`
  int steps = 1000;
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool merge_after = false;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys raise InvalidConfig.
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// One training pair: input ids and the target (vocabulary id for the decoder,
/// category index for the CLS head).
struct TrainingItem {
  std::vector<int> tokens;
  int target = 0;
};

/// Replaces the model's adapters with fresh ones on every layer for each
/// projection in the set. A is Gaussian, B is zero, so the initial update is 0.
void install_adapters(TransformerModel& model, const TrainConfig& config);

void install_cls_head(TransformerModel& model, int categories, std::uint64_t seed);

/// SGD with momentum over the parameter groups the mode trains.
class Trainer {
 public:
  Trainer(TransformerModel& model, TrainConfig config, int cls_token_id = 2);

  /// One update on `batch`; returns the mean loss before the update.
  double step(std::span<const TrainingItem> batch);

  /// Learning rate used by update number `t` (0-based).
  double learning_rate_at(int t) const;

  /// Mean loss and gradients without updating.
  double loss_and_grad(std::span<const TrainingItem> batch, Gradients& grads) const;

  const TrainableSet& trainable() const { return which_; }

 private:
  void apply(const Gradients& grads, double lr);
  void add_decay(Gradients& grads) const;

  TransformerModel& model_;
  TrainConfig config_;
  int cls_token_id_;
  TrainableSet which_;
  Gradients velocity_;
  int updates_ = 0;
};

struct FineTuneResult {
  TransformerModel model;
  std::vector<double> loss_curve;  // mean batch loss per step
};

/// Trains a copy of `base` on `items`. Deterministic for a given seed.
FineTuneResult fine_tune(const TransformerModel& base, std::span<const TrainingItem> items,
                         const TrainConfig& config, int cls_token_id = 2);

/// Argmax over `allowed` vocabulary ids at the final decoder position.
int predict_constrained(const TransformerModel& model, std::span<const int> tokens,
                        std::span<const int> allowed);

int predict_cls(const TransformerModel& model, std::span<const int> tokens, int cls_token_id);

}  // namespace crashnarr
