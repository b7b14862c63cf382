#pragma once

#include <cstdint>
#include <vector>

#include "crashnarr/checkpoint.hpp"
#include "crashnarr/ingest.hpp"
#include "crashnarr/metrics.hpp"
#include "crashnarr/robustness.hpp"
#include "crashnarr/taxonomy.hpp"
#include "crashnarr/trainer.hpp"

namespace crashnarr {

/// Allowed answers for an example: the MANCOLL space, or the candidate set of
/// the vehicle's crash configuration.
std::vector<LabelToken> allowed_labels(const Taxonomy& taxonomy, const LabeledExample& ex);

/// Every label of the task, in taxonomy order.
std::vector<LabelToken> task_label_space(const Taxonomy& taxonomy, Task task);

struct MicroSetup {
  ModelDims dims;
  TrainConfig train;
  std::uint64_t model_seed = 0;  // frozen base initialization
};

struct TrainedModel {
  LocalModel model;
  std::vector<double> loss_curve;
};

/// Builds the vocabulary from the training summaries, initializes the base
/// model and fine-tunes it (LoRA decoder, or CLS head end to end).
TrainedModel train_local_model(Task task, const std::vector<LabeledExample>& train,
                               const MicroSetup& setup, const Taxonomy& taxonomy,
                               const std::string& template_version = "");

/// The untrained base with the same vocabulary; the "original model" baseline.
LocalModel untuned_local_model(Task task, const std::vector<LabeledExample>& train,
                               const MicroSetup& setup, const Taxonomy& taxonomy);

/// Greedy constrained answers; equivalent to the local backend at temperature 0.
std::vector<Prediction> predict_examples(const LocalModel& model,
                                         const std::vector<LabeledExample>& examples,
                                         const Taxonomy& taxonomy);

std::vector<LabelToken> gold_labels(const std::vector<LabeledExample>& examples);

/// Sweep entry point backed by the micro model: trains with `setup` (seed
/// replaced by the sweep's training seed) and scores the clean test pool.
/// Unknown-class test cases are kept; macro F1 averages over gold-present labels.
TrainEvalFn micro_train_eval(Task task, const MicroSetup& setup, const Taxonomy& taxonomy);

}  // namespace crashnarr
