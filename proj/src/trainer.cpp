#include "crashnarr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crashnarr/error.hpp"
#include "crashnarr/rng.hpp"

namespace crashnarr {

void TrainConfig::validate() const {
  if (mode == TrainMode::Lora && projection_set.empty()) {
    throw Error(Errc::InvalidConfig, "projection set must not be empty");
  }
  if (rank < 1) throw Error(Errc::InvalidConfig, "rank must be >= 1");
  if (steps < 0 || batch_size < 1) throw Error(Errc::InvalidConfig, "bad steps or batch size");
  if (!(learning_rate > 0.0)) throw Error(Errc::InvalidConfig, "learning rate must be positive");
  if (weight_decay < 0.0) throw Error(Errc::InvalidConfig, "weight decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw Error(Errc::InvalidConfig, "momentum must be in [0,1)");
}

nlohmann::json TrainConfig::to_json() const {
  std::string projections;
  for (Projection p : projection_set) projections += projection_letter(p);
  return {{"mode", mode == TrainMode::Lora ? "lora" : "full-cls"},
          {"projections", projections},
          {"rank", rank},
          {"alpha", alpha},
          {"learning_rate", learning_rate},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"grad_clip", grad_clip},
          {"cosine_decay", cosine_decay},
          {"steps", steps},
          {"batch_size", batch_size},
          {"seed", seed},
          {"merge_after", merge_after}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  static const std::vector<std::string> kKeys = {
      "mode",  "projections", "rank",  "alpha",      "learning_rate", "momentum",
      "weight_decay", "grad_clip", "cosine_decay", "steps", "batch_size", "seed",     "merge_after"};
  if (!doc.is_object()) throw Error(Errc::InvalidConfig, "train config must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(Errc::InvalidConfig, "unknown train key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    if (doc.contains("mode")) {
      const auto m = doc.at("mode").get<std::string>();
      if (m == "lora") {
        c.mode = TrainMode::Lora;
      } else if (m == "full-cls") {
        c.mode = TrainMode::FullCls;
      } else {
        throw Error(Errc::InvalidConfig, "unknown train mode '" + m + "'");
      }
    }
    if (doc.contains("projections")) {
      c.projection_set.clear();
      for (char ch : doc.at("projections").get<std::string>()) {
        c.projection_set.push_back(parse_projection(ch));
      }
    }
    c.rank = doc.value("rank", c.rank);
    c.alpha = doc.value("alpha", c.alpha);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.momentum = doc.value("momentum", c.momentum);
    c.weight_decay = doc.value("weight_decay", c.weight_decay);
    c.grad_clip = doc.value("grad_clip", c.grad_clip);
    c.cosine_decay = doc.value("cosine_decay", c.cosine_decay);
    c.steps = doc.value("steps", c.steps);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.seed = doc.value("seed", c.seed);
    c.merge_after = doc.value("merge_after", c.merge_after);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

void install_adapters(TransformerModel& model, const TrainConfig& config) {
  const int d = model.dims.d_model;
  const int k = model.dims.proj_width();
  if (2 * config.rank > std::min(d, k)) {
    throw Error(Errc::ShapeMismatch, "rank " + std::to_string(config.rank) +
                                         " too large for projections of " + std::to_string(d) +
                                         "x" + std::to_string(k));
  }
  Rng rng(mix_seed(config.seed, 0xADA97E5));
  model.adapters.clear();
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  for (int l = 0; l < model.dims.n_layers; ++l) {
    for (Projection p : config.projection_set) {
      LoraAdapter ad;
      ad.target = p;
      ad.layer = l;
      ad.alpha = config.alpha;
      ad.a.resize(d, config.rank);
      for (Eigen::Index j = 0; j < ad.a.cols(); ++j) {
        for (Eigen::Index i = 0; i < ad.a.rows(); ++i) ad.a(i, j) = rng.normal() * stddev;
      }
      ad.b = Mat::Zero(config.rank, k);
      model.adapters.push_back(std::move(ad));
    }
  }
}

void install_cls_head(TransformerModel& model, int categories, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xC15));
  ClsHead head;
  head.w.resize(categories, model.dims.d_model);
  const double stddev = 0.1 / std::sqrt(static_cast<double>(model.dims.d_model));
  for (Eigen::Index j = 0; j < head.w.cols(); ++j) {
    for (Eigen::Index i = 0; i < head.w.rows(); ++i) head.w(i, j) = rng.normal() * stddev;
  }
  head.b = Vec::Zero(categories);
  model.cls_head = std::move(head);
}

Trainer::Trainer(TransformerModel& model, TrainConfig config, int cls_token_id)
    : model_(model), config_(std::move(config)), cls_token_id_(cls_token_id) {
  config_.validate();
  if (config_.mode == TrainMode::Lora) {
    which_ = {.base = false, .adapters = true, .head = false};
    if (model_.adapters.empty()) {
      throw Error(Errc::InvalidConfig, "LoRA training needs installed adapters");
    }
  } else {
    if (!model_.cls_head) throw Error(Errc::InvalidConfig, "CLS training needs a head");
    which_ = {.base = true, .adapters = !model_.adapters.empty(), .head = true};
  }
  velocity_ = Gradients::zeros_like(model_, which_);
}

double Trainer::loss_and_grad(std::span<const TrainingItem> batch, Gradients& grads) const {
  grads = Gradients::zeros_like(model_, which_);
  double total = 0.0;
  for (const auto& item : batch) {
    total += config_.mode == TrainMode::Lora
                 ? decoder_loss_and_grad(model_, item.tokens, item.target, which_, grads)
                 : cls_loss_and_grad(model_, item.tokens, item.target, cls_token_id_, which_, grads);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  grads.scale(inv);
  return total * inv;
}

double Trainer::learning_rate_at(int t) const {
  if (!config_.cosine_decay || config_.steps <= 0) return config_.learning_rate;
  const double progress = std::min(1.0, static_cast<double>(t) / config_.steps);
  return 0.5 * config_.learning_rate * (1.0 + std::cos(M_PI * progress));
}

void Trainer::add_decay(Gradients& grads) const {
  const double wd = config_.weight_decay;
  if (which_.adapters) {
    for (std::size_t i = 0; i < model_.adapters.size(); ++i) {
      grads.adapter_a[i] += wd * model_.adapters[i].a;
      grads.adapter_b[i] += wd * model_.adapters[i].b;
    }
  }
  if (which_.base) {
    grads.embed += wd * model_.embed;
    grads.positional += wd * model_.positional;
    grads.unembed += wd * model_.unembed;
    for (std::size_t l = 0; l < model_.layers.size(); ++l) {
      grads.layers[l].wq += wd * model_.layers[l].wq;
      grads.layers[l].wk += wd * model_.layers[l].wk;
      grads.layers[l].wv += wd * model_.layers[l].wv;
      grads.layers[l].wo += wd * model_.layers[l].wo;
    }
  }
  if (which_.head) {
    grads.head_w += wd * model_.cls_head->w;
    grads.head_b += wd * model_.cls_head->b;
  }
}

void Trainer::apply(const Gradients& grads, double lr) {
  velocity_.scale(config_.momentum);
  velocity_.add_scaled(grads, 1.0);
  if (which_.adapters) {
    for (std::size_t i = 0; i < model_.adapters.size(); ++i) {
      model_.adapters[i].a -= lr * velocity_.adapter_a[i];
      model_.adapters[i].b -= lr * velocity_.adapter_b[i];
    }
  }
  if (which_.base) {
    model_.embed -= lr * velocity_.embed;
    model_.positional -= lr * velocity_.positional;
    model_.unembed -= lr * velocity_.unembed;
    for (std::size_t l = 0; l < model_.layers.size(); ++l) {
      model_.layers[l].wq -= lr * velocity_.layers[l].wq;
      model_.layers[l].wk -= lr * velocity_.layers[l].wk;
      model_.layers[l].wv -= lr * velocity_.layers[l].wv;
      model_.layers[l].wo -= lr * velocity_.layers[l].wo;
    }
  }
  if (which_.head) {
    model_.cls_head->w -= lr * velocity_.head_w;
    model_.cls_head->b -= lr * velocity_.head_b;
  }
}

double Trainer::step(std::span<const TrainingItem> batch) {
  if (batch.empty()) throw Error(Errc::InvalidConfig, "empty batch");
  Gradients grads;
  const double loss = loss_and_grad(batch, grads);
  const double norm2 = grads.squared_norm();
  if (!std::isfinite(loss) || !std::isfinite(norm2)) {
    throw Error(Errc::NonFiniteLoss, "non-finite loss " + std::to_string(loss) +
                                         " (gradient norm^2 " + std::to_string(norm2) + ")");
  }
  if (config_.grad_clip > 0.0) {
    const double norm = std::sqrt(norm2);
    if (norm > config_.grad_clip) grads.scale(config_.grad_clip / norm);
  }
  if (config_.weight_decay > 0.0) add_decay(grads);
  apply(grads, learning_rate_at(updates_++));
  return loss;
}

FineTuneResult fine_tune(const TransformerModel& base, std::span<const TrainingItem> items,
                         const TrainConfig& config, int cls_token_id) {
  if (items.empty()) throw Error(Errc::InvalidConfig, "no training examples");
  config.validate();
  FineTuneResult result{base, {}};
  TransformerModel& model = result.model;
  if (config.mode == TrainMode::Lora) install_adapters(model, config);
  Trainer trainer(model, config, cls_token_id);

  Rng rng(mix_seed(config.seed, 0xBA7C4));
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  std::vector<TrainingItem> batch;
  result.loss_curve.reserve(static_cast<std::size_t>(config.steps));
  for (int s = 0; s < config.steps; ++s) {
    batch.clear();
    while (batch.size() < static_cast<std::size_t>(config.batch_size)) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(items[order[cursor++]]);
      if (batch.size() == items.size()) break;
    }
    result.loss_curve.push_back(trainer.step(batch));
  }
  if (config.merge_after && config.mode == TrainMode::Lora) model = merge_all(model);
  return result;
}

int predict_constrained(const TransformerModel& model, std::span<const int> tokens,
                        std::span<const int> allowed) {
  const Vec logits = decoder_logits(model, tokens);
  int best = allowed.front();
  for (int id : allowed) {
    if (logits[id] > logits[best]) best = id;
  }
  return best;
}

int predict_cls(const TransformerModel& model, std::span<const int> tokens, int cls_token_id) {
  const Vec p = cls_forward(model, tokens, *model.cls_head, cls_token_id);
  Eigen::Index best = 0;
  p.maxCoeff(&best);
  return static_cast<int>(best);
}

}  // namespace crashnarr
