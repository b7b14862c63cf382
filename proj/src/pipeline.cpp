#include "crashnarr/pipeline.hpp"

#include <algorithm>

#include "crashnarr/error.hpp"
#include "crashnarr/metrics.hpp"
#include "crashnarr/tokenizer.hpp"

namespace crashnarr {
namespace {

LocalModel base_model(Task task, const std::vector<LabeledExample>& train, const MicroSetup& setup,
                      const Taxonomy& taxonomy) {
  if (train.empty()) throw Error(Errc::InvalidConfig, "no training examples");
  std::vector<std::string> texts;
  texts.reserve(train.size());
  for (const auto& ex : train) texts.push_back(ex.summary);
  LocalModel lm;
  lm.vocab = Vocabulary::build(texts, setup.dims.vocab_size);
  lm.model = init_model(setup.dims, setup.model_seed);
  lm.task = task;
  lm.taxonomy_version = taxonomy.version();
  if (setup.train.mode == TrainMode::FullCls) {
    lm.head = ModelHead::Cls;
    lm.cls_labels = task_label_space(taxonomy, task);
    install_cls_head(lm.model, static_cast<int>(lm.cls_labels.size()), setup.model_seed);
  }
  return lm;
}

std::vector<int> encode_example(const LocalModel& lm, const LabeledExample& ex) {
  const bool encoder = lm.head == ModelHead::Cls;
  return encoder ? encode_encoder_input(lm.vocab, ex.task, ex.summary, ex.vehicle_index,
                                        ex.crashconf, lm.model.dims.max_seq)
                 : encode_decoder_input(lm.vocab, ex.task, ex.summary, ex.vehicle_index,
                                        ex.crashconf, lm.model.dims.max_seq);
}

int label_index(const std::vector<LabelToken>& labels, const LabelToken& t) {
  const auto it = std::find(labels.begin(), labels.end(), t);
  if (it == labels.end()) throw Error(Errc::UnknownLabel, "label " + t.str() + " not in label space");
  return static_cast<int>(it - labels.begin());
}

}  // namespace

std::vector<LabelToken> allowed_labels(const Taxonomy& taxonomy, const LabeledExample& ex) {
  if (ex.task == Task::Mancoll) return taxonomy.mancoll_tokens();
  if (!ex.crashconf) throw Error(Errc::InvalidRecord, ex.id() + ": missing crash configuration");
  std::vector<LabelToken> out;
  for (const auto& c : taxonomy.candidate_set_for(*ex.crashconf)) out.push_back(c.code);
  return out;
}

std::vector<LabelToken> task_label_space(const Taxonomy& taxonomy, Task task) {
  if (task == Task::Mancoll) return taxonomy.mancoll_tokens();
  std::vector<LabelToken> out;
  for (const auto& c : taxonomy.all_crash_types()) out.push_back(c.code);
  return out;
}

TrainedModel train_local_model(Task task, const std::vector<LabeledExample>& train,
                               const MicroSetup& setup, const Taxonomy& taxonomy,
                               const std::string& template_version) {
  LocalModel lm = base_model(task, train, setup, taxonomy);
  lm.template_version = template_version;
  std::vector<TrainingItem> items;
  items.reserve(train.size());
  for (const auto& ex : train) {
    if (ex.task != task) throw Error(Errc::InvalidRecord, ex.id() + ": task mismatch");
    const int target = lm.head == ModelHead::Cls ? label_index(lm.cls_labels, ex.gold)
                                                 : lm.vocab.label_id(ex.gold);
    items.push_back({encode_example(lm, ex), target});
  }
  FineTuneResult r = fine_tune(lm.model, items, setup.train, Vocabulary::kCls);
  lm.model = std::move(r.model);
  return {std::move(lm), std::move(r.loss_curve)};
}

LocalModel untuned_local_model(Task task, const std::vector<LabeledExample>& train,
                               const MicroSetup& setup, const Taxonomy& taxonomy) {
  return base_model(task, train, setup, taxonomy);
}

std::vector<Prediction> predict_examples(const LocalModel& lm,
                                         const std::vector<LabeledExample>& examples,
                                         const Taxonomy& taxonomy) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto allowed = allowed_labels(taxonomy, ex);
    const auto tokens = encode_example(lm, ex);
    if (lm.head == ModelHead::Decoder) {
      std::vector<int> ids;
      for (const auto& t : allowed) ids.push_back(lm.vocab.label_id(t));
      const int best = predict_constrained(lm.model, tokens, ids);
      out.emplace_back(allowed[static_cast<std::size_t>(
          std::find(ids.begin(), ids.end(), best) - ids.begin())]);
    } else {
      const Vec p = cls_forward(lm.model, tokens, *lm.model.cls_head, Vocabulary::kCls);
      std::optional<LabelToken> best;
      double best_p = -1.0;
      for (const auto& t : allowed) {
        const double v = p[label_index(lm.cls_labels, t)];
        if (v > best_p) {
          best_p = v;
          best = t;
        }
      }
      out.push_back(best);
    }
  }
  return out;
}

std::vector<LabelToken> gold_labels(const std::vector<LabeledExample>& examples) {
  std::vector<LabelToken> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(ex.gold);
  return out;
}

TrainEvalFn micro_train_eval(Task task, const MicroSetup& setup, const Taxonomy& taxonomy) {
  return [task, setup, &taxonomy](const std::vector<LabeledExample>& train,
                                  const std::vector<LabeledExample>& test, std::uint64_t seed) {
    MicroSetup s = setup;
    s.train.seed = seed;
    const TrainedModel tm = train_local_model(task, train, s, taxonomy);
    const auto pred = predict_examples(tm.model, test, taxonomy);
    const auto gold = gold_labels(test);
    return PointMetrics{accuracy(pred, gold), macro_f1(pred, gold)};
  };
}

}  // namespace crashnarr
