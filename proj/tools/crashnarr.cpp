// crashnarr: command-line front end for the crash-narrative pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/analysis.hpp"
#include "crashnarr/backend.hpp"
#include "crashnarr/checkpoint.hpp"
#include "crashnarr/error.hpp"
#include "crashnarr/ingest.hpp"
#include "crashnarr/jsonl.hpp"
#include "crashnarr/metrics.hpp"
#include "crashnarr/pipeline.hpp"
#include "crashnarr/prompt.hpp"
#include "crashnarr/records.hpp"
#include "crashnarr/robustness.hpp"
#include "crashnarr/synth.hpp"
#include "crashnarr/taxonomy.hpp"

using namespace crashnarr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Keys accepted in the --config file.
const std::vector<std::string> kConfigKeys = {"taxonomy", "templates", "seed",  "model_seed",
                                              "backend",  "train",     "dims",  "sweep",
                                              "runs"};

struct Config {
  fs::path taxonomy = default_taxonomy_path();
  std::optional<fs::path> templates;
  std::uint64_t seed = 0;
  std::uint64_t model_seed = 0;
  BackendConfig backend;
  TrainConfig train;
  ModelDims dims;
  std::optional<SweepSpec> sweep;
  int runs = 1;
};

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  for (const auto& [k, v] : j.items()) {
    if (k == "vocab_size") d.vocab_size = v.get<int>();
    else if (k == "d_model") d.d_model = v.get<int>();
    else if (k == "n_heads") d.n_heads = v.get<int>();
    else if (k == "head_dim") d.head_dim = v.get<int>();
    else if (k == "n_layers") d.n_layers = v.get<int>();
    else if (k == "max_seq") d.max_seq = v.get<int>();
    else throw Error(Errc::InvalidConfig, "unknown dims key '" + k + "'");
  }
  d.validate();
  return d;
}

json dims_to_json(const ModelDims& d) {
  return {{"vocab_size", d.vocab_size}, {"d_model", d.d_model}, {"n_heads", d.n_heads},
          {"head_dim", d.head_dim},     {"n_layers", d.n_layers}, {"max_seq", d.max_seq}};
}

Config load_config(const std::string& path) {
  Config c;
  if (path.empty()) return c;
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, path + ": " + e.what());
  }
  for (const auto& [k, v] : doc.items()) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), k) == kConfigKeys.end()) {
      throw Error(Errc::InvalidConfig, "unknown config key '" + k + "'");
    }
  }
  if (doc.contains("taxonomy")) c.taxonomy = doc["taxonomy"].get<std::string>();
  if (doc.contains("templates")) c.templates = doc["templates"].get<std::string>();
  if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("model_seed")) c.model_seed = doc["model_seed"].get<std::uint64_t>();
  if (doc.contains("backend")) c.backend = BackendConfig::from_json(doc["backend"]);
  if (doc.contains("train")) c.train = TrainConfig::from_json(doc["train"]);
  if (doc.contains("dims")) c.dims = dims_from_json(doc["dims"]);
  if (doc.contains("sweep")) c.sweep = SweepSpec::from_json(doc["sweep"]);
  if (doc.contains("runs")) c.runs = doc["runs"].get<int>();
  return c;
}

TemplateSet load_templates(const Config& c) {
  return c.templates ? TemplateSet::load(*c.templates) : TemplateSet::load_default();
}

Prompt prompt_for(const LabeledExample& ex, const Taxonomy& tax, const TemplateSet& tpl) {
  if (ex.task == Task::Mancoll) return build_mancoll_prompt(ex.summary, tax, tpl);
  return build_crashtype_prompt(ex.summary, ex.vehicle_index.value_or(0), ex.crashconf.value_or(""),
                                tax, tpl);
}

std::vector<Projection> parse_projections(const std::string& s) {
  std::vector<Projection> out;
  for (char ch : s) out.push_back(parse_projection(ch));
  if (out.empty()) throw Error(Errc::UsageError, "empty projection set");
  return out;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

Task task_of(const json& meta, const std::string& override_task) {
  if (!override_task.empty()) return parse_task(override_task);
  if (meta.contains("task")) return parse_task(meta["task"].get<std::string>());
  throw Error(Errc::UsageError, "task unknown: pass --task");
}

int emit_error(const std::string& code, const std::string& module, const std::string& message) {
  std::cerr << json{{"error", code}, {"module", module}, {"message", message}}.dump() << "\n";
  return 2;
}

// ---------------------------------------------------------------- commands

struct Common {
  std::string config_path;
  std::string taxonomy;
  std::string templates;
  std::optional<std::uint64_t> seed;
};

Config resolve(const Common& common) {
  Config c = load_config(common.config_path);
  if (!common.taxonomy.empty()) c.taxonomy = common.taxonomy;
  if (!common.templates.empty()) c.templates = common.templates;
  if (common.seed) c.seed = *common.seed;
  return c;
}

json stamp(const Config& c, const Taxonomy& tax) {
  return {{"taxonomy_version", tax.version()}, {"seed", c.seed}};
}

struct IngestArgs {
  std::string data, mapping, task = "mancoll", out, rejects, train_out, test_out, dev_out;
  int train_year = 0, test_year = 0;
  std::size_t dev_count = 0;
  bool strict = false;
};

void cmd_ingest(const Common& common, const IngestArgs& a) {
  const Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const ColumnMapping mapping = a.mapping.empty() ? ColumnMapping{} : load_column_mapping(a.mapping);
  const CaseSet cases = load_case_set(a.data, mapping, a.strict);
  const Task task = parse_task(a.task);
  const BuildResult built = build_examples(cases, task, tax);
  json meta = stamp(c, tax);
  meta["task"] = task_name(task);
  meta["source"] = a.data;
  if (!a.out.empty()) write_examples(a.out, built.examples, meta);
  if (!a.rejects.empty()) write_rejects(a.rejects, built.rejects);
  for (const auto& issue : cases.issues) {
    std::cerr << json{{"warning", issue.reason}, {"table", issue.table}, {"row", issue.row},
                      {"detail", issue.detail}}
                     .dump()
              << "\n";
  }
  if (a.train_year != 0 || a.test_year != 0) {
    if (a.train_out.empty() || a.test_out.empty()) {
      throw Error(Errc::UsageError, "--train-year/--test-year need --train-out and --test-out");
    }
    const Split s = split_by_year(built.examples, a.train_year, a.test_year, a.dev_count, c.seed);
    write_examples(a.train_out, s.train, meta);
    write_examples(a.test_out, s.test, meta);
    if (!a.dev_out.empty()) write_examples(a.dev_out, s.dev, meta);
  }
  std::cout << json{{"examples", built.examples.size()},
                    {"rejects", built.rejects.size()},
                    {"issues", cases.issues.size()}}
                   .dump()
            << "\n";
}

struct SynthArgs {
  std::string task = "mancoll", difficulty = "plain", prefix = "SYN", out;
  std::size_t n = 100;
  int year = 2022;
};

void cmd_synth(const Common& common, const SynthArgs& a) {
  const Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  SynthOptions o;
  o.difficulty = parse_difficulty(a.difficulty);
  o.year = a.year;
  o.id_prefix = a.prefix;
  const Task task = parse_task(a.task);
  const auto xs = generate(task, a.n, c.seed, o);
  json meta = stamp(c, tax);
  meta["task"] = task_name(task);
  meta["generator"] = {{"difficulty", difficulty_name(o.difficulty)}, {"year", o.year}, {"n", a.n}};
  write_examples(a.out, xs, meta);
}

struct PromptArgs {
  std::string examples, out;
};

void cmd_build_prompts(const Common& common, const PromptArgs& a) {
  const Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const TemplateSet tpl = load_templates(c);
  json meta_in;
  const auto xs = read_examples(a.examples, &meta_in);
  std::vector<json> recs;
  for (const auto& ex : xs) {
    const Prompt p = prompt_for(ex, tax, tpl);
    json allowed = json::array();
    for (const auto& t : p.allowed_tokens) allowed.push_back(t.str());
    recs.push_back({{"example_id", ex.id()}, {"prompt", p.text}, {"allowed", allowed}});
  }
  json meta = stamp(c, tax);
  meta["template_version"] = tpl.version();
  write_jsonl(a.out, meta, recs);
}

struct InferArgs {
  std::string examples, out, latency, endpoint, checkpoint, model, backend_id, policy;
  std::optional<int> runs, concurrency;
  std::optional<double> temperature;
};

void cmd_infer(const Common& common, const InferArgs& a) {
  Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const TemplateSet tpl = load_templates(c);
  BackendConfig& b = c.backend;
  if (!a.endpoint.empty()) b.endpoint = a.endpoint;
  if (!a.checkpoint.empty()) b.checkpoint = a.checkpoint;
  if (!a.model.empty()) b.model = a.model;
  if (!a.backend_id.empty()) b.backend_id = a.backend_id;
  if (!a.policy.empty()) b.invalid_policy = parse_invalid_policy(a.policy);
  if (a.concurrency) b.concurrency_limit = *a.concurrency;
  if (a.temperature) b.temperature = *a.temperature;
  if (!b.seed) b.seed = c.seed;
  b.apply_environment();
  b.validate();
  const int runs = a.runs.value_or(c.runs);
  if (runs < 1) throw Error(Errc::UsageError, "--runs must be at least 1");

  json meta_in;
  const auto xs = read_examples(a.examples, &meta_in);
  std::vector<BatchItem> items;
  items.reserve(xs.size());
  for (const auto& ex : xs) items.push_back({ex.id(), prompt_for(ex, tax, tpl), ex.gold});
  auto backend = make_backend(b);
  const auto recs = run_batch(*backend, b, items, runs);

  json meta = stamp(c, tax);
  meta["template_version"] = tpl.version();
  meta["backend"] = b.to_json();
  meta["runs"] = runs;
  if (meta_in.contains("task")) meta["task"] = meta_in["task"];
  write_predictions(a.out, recs, meta);
  if (!a.latency.empty()) write_latencies(a.latency, recs);
}

struct FinetuneArgs {
  std::string task = "mancoll", train, out, mode, projections, loss_out;
  std::optional<int> steps, rank, batch;
  std::optional<double> lr, weight_decay;
  bool merge = false;
};

void cmd_finetune(const Common& common, const FinetuneArgs& a) {
  Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  TrainConfig& t = c.train;
  if (a.steps) t.steps = *a.steps;
  if (a.rank) t.rank = *a.rank;
  if (a.batch) t.batch_size = *a.batch;
  if (a.lr) t.learning_rate = *a.lr;
  if (a.weight_decay) t.weight_decay = *a.weight_decay;
  if (!a.projections.empty()) t.projection_set = parse_projections(a.projections);
  if (!a.mode.empty()) {
    if (a.mode == "lora") t.mode = TrainMode::Lora;
    else if (a.mode == "cls") t.mode = TrainMode::FullCls;
    else throw Error(Errc::UsageError, "--mode must be lora or cls");
  }
  if (a.merge) t.merge_after = true;
  t.seed = c.seed;
  t.validate();

  const auto train = read_examples(a.train);
  MicroSetup setup{c.dims, t, c.model_seed};
  const TrainedModel tm =
      train_local_model(parse_task(a.task), train, setup, tax, load_templates(c).version());
  save_checkpoint(a.out, tm.model);
  if (!a.loss_out.empty()) {
    std::ostringstream os;
    os << "# " << json{{"train", t.to_json()}, {"dims", dims_to_json(c.dims)},
                       {"model_seed", c.model_seed}}
                      .dump()
       << "\nstep\tloss\n";
    for (std::size_t i = 0; i < tm.loss_curve.size(); ++i) {
      os << i << "\t" << format_metric(tm.loss_curve[i]) << "\n";
    }
    write_text(a.loss_out, os.str());
  }
}

struct EvaluateArgs {
  std::string predictions, examples, out, model, task;
  bool exclude_unknown = false;
  int run = 1;
};

void add_rows(std::vector<MetricRow>& rows, const std::string& task, const std::string& model,
              const std::string& subgroup, const std::vector<PredictionRecord>& recs,
              const LabelSet& exclude, const std::string& exclusion) {
  try {
    rows.push_back({task, model, subgroup, exclusion, "accuracy", accuracy(recs, exclude)});
    rows.push_back({task, model, subgroup, exclusion, "macro_f1", macro_f1(recs, exclude)});
  } catch (const Error& e) {
    if (e.code() != Errc::EmptyAfterExclusion) throw;
  }
}

void cmd_evaluate(const Common& common, const EvaluateArgs& a) {
  const Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  json meta;
  const auto all = read_predictions(a.predictions, &meta);
  const auto recs = select_run(all, a.run);
  const Task task = task_of(meta, a.task);
  const std::string model =
      !a.model.empty() ? a.model : (recs.empty() ? std::string("model") : recs.front().backend_id);
  const std::string tname(task_name(task));

  LabelSet unknown;
  for (const auto& t : tax.excludable_mancoll_tokens()) unknown.insert(t);

  std::vector<MetricRow> rows;
  const bool paired = a.exclude_unknown && task == Task::Mancoll;
  add_rows(rows, tname, model, "All", recs, {}, "none");
  if (paired) add_rows(rows, tname, model, "All", recs, unknown, "-Unknown");

  if (!a.examples.empty()) {
    std::map<std::string, int> counts;
    for (const auto& ex : read_examples(a.examples)) counts[ex.id()] = ex.vehicle_count;
    std::array<std::vector<PredictionRecord>, 4> buckets;
    for (const auto& r : recs) {
      const auto it = counts.find(r.example_id);
      if (it == counts.end()) {
        throw Error(Errc::LengthMismatch, "prediction " + r.example_id + " has no example");
      }
      buckets[vehicle_bucket(it->second)].push_back(r);
    }
    for (std::size_t i = 0; i < buckets.size(); ++i) {
      if (buckets[i].empty()) continue;
      add_rows(rows, tname, model, kVehicleBucketNames[i], buckets[i], {}, "none");
      if (paired) add_rows(rows, tname, model, kVehicleBucketNames[i], buckets[i], unknown, "-Unknown");
    }
  }
  const EvalReport report{meta.value("template_version", ""), tax.version(), rows};
  write_out(a.out, report.to_tsv());
}

struct ConsistencyArgs {
  std::vector<std::string> predictions;
  std::string out;
  bool with_gt = false;
};

void cmd_consistency(const Common& common, const ConsistencyArgs& a) {
  (void)resolve(common);
  std::vector<Participant> ps;
  std::vector<std::string> ids;
  std::optional<std::vector<LabelToken>> gt;
  for (const auto& path : a.predictions) {
    const auto all = read_predictions(path);
    const auto r1 = select_run(all, 1);
    const auto r2 = select_run(all, 2);
    Participant p;
    p.id = r1.empty() ? fs::path(path).stem().string() : r1.front().backend_id;
    std::vector<std::string> these;
    for (const auto& r : r1) {
      p.run1.push_back(r.predicted);
      these.push_back(r.example_id);
    }
    for (const auto& r : r2) p.run2.push_back(r.predicted);
    if (ids.empty()) {
      ids = these;
      if (a.with_gt) {
        gt.emplace();
        for (const auto& r : r1) gt->push_back(r.gold);
      }
    } else if (these != ids) {
      throw Error(Errc::LengthMismatch, path + ": example list differs from the first file");
    }
    ps.push_back(std::move(p));
  }
  const auto m = consistency_matrix(ps, gt);
  std::ostringstream os;
  os << matrix_to_tsv(m);
  os << "# overall_models_only\t" << format_metric(m.overall(false)) << "\n";
  if (m.has_ground_truth) os << "# overall_including_gt\t" << format_metric(m.overall(true)) << "\n";
  write_out(a.out, os.str());
}

struct SweepArgs {
  std::string train, test, out, journal, axis, task = "mancoll";
  std::vector<double> points;
  std::optional<int> reps, steps;
};

void cmd_sweep(const Common& common, const SweepArgs& a) {
  Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  SweepSpec spec = c.sweep.value_or(SweepSpec{});
  if (!c.sweep) spec.train = c.train;
  if (!a.axis.empty()) spec.axis = parse_sweep_axis(a.axis);
  if (!a.points.empty()) spec.points = a.points;
  if (a.reps) spec.repetitions = *a.reps;
  if (a.steps) spec.train.steps = *a.steps;
  if (common.seed || !c.sweep) spec.seed = c.seed;
  spec.validate();
  const auto train = read_examples(a.train);
  const auto test = read_examples(a.test);
  MicroSetup setup{c.dims, spec.train, c.model_seed};
  SweepOptions opts;
  if (!a.journal.empty()) opts.journal = fs::path(a.journal);
  const auto curve = run_sweep(spec, train, test, micro_train_eval(parse_task(a.task), setup, tax),
                               tax, opts);
  std::ostringstream os;
  os << "# " << json{{"spec", spec.to_json()}, {"dims", dims_to_json(c.dims)},
                     {"model_seed", c.model_seed}, {"taxonomy_version", tax.version()}}
                    .dump()
     << "\n"
     << curve.to_tsv();
  write_out(a.out, os.str());
}

struct AnalyzeArgs {
  std::string predictions, examples, out;
  int run = 1;
  int support_first = 1, support_last = 16;
};

void cmd_analyze_unknown(const Common& common, const AnalyzeArgs& a) {
  const Config c = resolve(common);
  const Taxonomy tax = load_taxonomy(c.taxonomy);
  const auto recs = select_run(read_predictions(a.predictions), a.run);
  LabelSet unknown;
  for (const auto& t : tax.excludable_mancoll_tokens()) unknown.insert(t);
  const auto r = analyze_unknown(recs, tax.mancoll_tokens(), unknown);
  write_out(a.out, r.to_tsv());
}

void cmd_analyze_distributions(const Common& common, const AnalyzeArgs& a) {
  (void)resolve(common);
  const auto recs = select_run(read_predictions(a.predictions), a.run);
  std::vector<LabelToken> gt;
  std::vector<Prediction> pred;
  for (const auto& r : recs) {
    if (r.dropped) continue;
    gt.push_back(r.gold);
    pred.push_back(r.predicted);
  }
  const auto r = analyze_distributions(gt, pred, numeric_support(a.support_first, a.support_last));
  write_out(a.out, r.to_tsv());
}

void cmd_analyze_pairs(const Common& common, const AnalyzeArgs& a) {
  (void)resolve(common);
  if (a.examples.empty()) throw Error(Errc::UsageError, "analyze-pairs needs --examples");
  std::map<std::string, const PredictionRecord*> by_id;
  const auto recs = select_run(read_predictions(a.predictions), a.run);
  for (const auto& r : recs) by_id[r.example_id] = &r;
  std::map<std::string, std::map<int, LabeledExample>> cases;
  for (const auto& ex : read_examples(a.examples)) {
    if (ex.task == Task::CrashType && ex.vehicle_count == 2 && ex.vehicle_index) {
      cases[ex.case_id][*ex.vehicle_index] = ex;
    }
  }
  std::vector<VehiclePairRow> rows;
  for (const auto& [id, vs] : cases) {
    if (vs.size() != 2 || !vs.count(1) || !vs.count(2)) continue;
    const auto p1 = by_id.find(vs.at(1).id());
    const auto p2 = by_id.find(vs.at(2).id());
    if (p1 == by_id.end() || p2 == by_id.end()) continue;
    if (!p1->second->valid() || !p2->second->valid()) continue;
    const auto num = [](const LabelToken& t) {
      const auto v = t.as_int();
      if (!v) throw Error(Errc::UnknownLabel, "non-numeric code " + t.str());
      return static_cast<double>(*v);
    };
    rows.push_back({num(vs.at(1).gold), num(vs.at(2).gold), num(*p1->second->predicted),
                    num(*p2->second->predicted)});
  }
  write_out(a.out, analyze_pairs(rows).to_tsv());
}

struct ReportArgs {
  bool against_baselines = false, lint = false;
  std::string baselines, out;
  std::vector<std::string> runs;
};

int cmd_report(const Common& common, const ReportArgs& a) {
  (void)resolve(common);
  const fs::path path = a.baselines.empty() ? default_baselines_path() : fs::path(a.baselines);
  const auto rows = load_baselines(path);
  if (a.lint) {
    const auto issues = lint_baselines(rows);
    for (const auto& m : issues) std::cerr << m << "\n";
    if (!issues.empty()) {
      return emit_error("UsageError", "cli_reporting",
                        std::to_string(issues.size()) + " baseline row(s) failed lint");
    }
    if (!a.against_baselines) return 0;
  }
  if (!a.against_baselines) throw Error(Errc::UsageError, "report needs --against-baselines or --lint");
  std::vector<MetricRow> run_rows;
  for (const auto& r : a.runs) {
    const auto more = read_metric_rows(r);
    run_rows.insert(run_rows.end(), more.begin(), more.end());
  }
  write_out(a.out, baseline_comparison_tsv(rows, run_rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crash-narrative classification pipeline", "crashnarr"};
  app.set_version_flag("--version", CRASHNARR_VERSION);
  app.require_subcommand(1);

  Common common;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", common.config_path, "JSON config; flags override its values");
  app.add_option("--taxonomy", common.taxonomy, "Taxonomy JSON");
  app.add_option("--templates", common.templates, "Template directory with manifest.json");
  app.add_option("--seed", seed, "Master seed");

  int status = 0;
  std::function<void()> action;

  IngestArgs ing;
  auto* c_ingest = app.add_subcommand("ingest", "Join CRASH/GV extracts into labeled examples");
  c_ingest->add_option("--data", ing.data, "Directory with the CSV extracts")->required();
  c_ingest->add_option("--mapping", ing.mapping, "Column mapping JSON");
  c_ingest->add_option("--task", ing.task, "mancoll or crashtype");
  c_ingest->add_option("--out", ing.out, "Examples JSONL");
  c_ingest->add_option("--rejects", ing.rejects, "Rejected examples JSONL");
  c_ingest->add_option("--train-year", ing.train_year);
  c_ingest->add_option("--test-year", ing.test_year);
  c_ingest->add_option("--dev-count", ing.dev_count);
  c_ingest->add_option("--train-out", ing.train_out);
  c_ingest->add_option("--test-out", ing.test_out);
  c_ingest->add_option("--dev-out", ing.dev_out);
  c_ingest->add_flag("--strict", ing.strict, "Fail on orphan or invalid rows");
  c_ingest->callback([&] { action = [&] { cmd_ingest(common, ing); }; });

  SynthArgs syn;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus");
  c_synth->add_option("--task", syn.task);
  c_synth->add_option("--n", syn.n)->required();
  c_synth->add_option("--difficulty", syn.difficulty, "plain or intertwined");
  c_synth->add_option("--year", syn.year);
  c_synth->add_option("--prefix", syn.prefix, "Case id prefix");
  c_synth->add_option("--out", syn.out)->required();
  c_synth->callback([&] { action = [&] { cmd_synth(common, syn); }; });

  PromptArgs pr;
  auto* c_prompts = app.add_subcommand("build-prompts", "Render prompts for an examples file");
  c_prompts->add_option("--examples", pr.examples)->required();
  c_prompts->add_option("--out", pr.out)->required();
  c_prompts->callback([&] { action = [&] { cmd_build_prompts(common, pr); }; });

  InferArgs inf;
  auto* c_infer = app.add_subcommand("infer", "Run a backend over an examples file");
  c_infer->add_option("--examples", inf.examples)->required();
  c_infer->add_option("--out", inf.out, "Predictions JSONL")->required();
  c_infer->add_option("--latency", inf.latency, "Latency sidecar TSV");
  c_infer->add_option("--endpoint", inf.endpoint, "\"local\" or a chat-completion base URL");
  c_infer->add_option("--checkpoint", inf.checkpoint, "Local model checkpoint");
  c_infer->add_option("--model", inf.model, "Remote model name");
  c_infer->add_option("--backend-id", inf.backend_id);
  c_infer->add_option("--runs", inf.runs, "Repeated runs per example");
  c_infer->add_option("--concurrency", inf.concurrency);
  c_infer->add_option("--temperature", inf.temperature);
  c_infer->add_option("--invalid-policy", inf.policy, "treat-as-wrong, retry-once or drop");
  c_infer->callback([&] { action = [&] { cmd_infer(common, inf); }; });

  FinetuneArgs ft;
  auto* c_ft = app.add_subcommand("finetune", "Train the local micro model");
  c_ft->add_option("--task", ft.task);
  c_ft->add_option("--train", ft.train, "Training examples JSONL")->required();
  c_ft->add_option("--out", ft.out, "Checkpoint JSON")->required();
  c_ft->add_option("--mode", ft.mode, "lora or cls");
  c_ft->add_option("--projections", ft.projections, "Adapted projections, e.g. QKV");
  c_ft->add_option("--steps", ft.steps);
  c_ft->add_option("--rank", ft.rank);
  c_ft->add_option("--batch", ft.batch);
  c_ft->add_option("--lr", ft.lr);
  c_ft->add_option("--weight-decay", ft.weight_decay);
  c_ft->add_flag("--merge", ft.merge, "Fold adapters into the base after training");
  c_ft->add_option("--loss-out", ft.loss_out, "Loss curve TSV");
  c_ft->callback([&] { action = [&] { cmd_finetune(common, ft); }; });

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Accuracy and macro F1 report");
  c_eval->add_option("--predictions", ev.predictions)->required();
  c_eval->add_option("--examples", ev.examples, "Adds vehicle-count subgroup rows");
  c_eval->add_option("--task", ev.task);
  c_eval->add_option("--model", ev.model, "Model name in the report");
  c_eval->add_option("--run", ev.run);
  c_eval->add_flag("--exclude-unknown", ev.exclude_unknown, "Add rows without the Unknown class");
  c_eval->add_option("--out", ev.out, "Report TSV (stdout when omitted)");
  c_eval->callback([&] { action = [&] { cmd_evaluate(common, ev); }; });

  ConsistencyArgs cons;
  auto* c_cons = app.add_subcommand("consistency", "Pairwise agreement matrix");
  c_cons->add_option("--predictions", cons.predictions, "One predictions file per model")
      ->required();
  c_cons->add_flag("--with-gt", cons.with_gt, "Append the ground truth as a participant");
  c_cons->add_option("--out", cons.out);
  c_cons->callback([&] { action = [&] { cmd_consistency(common, cons); }; });

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Noise or training-size sweep with the micro model");
  c_sweep->add_option("--train", sw.train)->required();
  c_sweep->add_option("--test", sw.test)->required();
  c_sweep->add_option("--task", sw.task);
  c_sweep->add_option("--axis", sw.axis, "noise_ratio or train_size");
  c_sweep->add_option("--points", sw.points);
  c_sweep->add_option("--reps", sw.reps);
  c_sweep->add_option("--steps", sw.steps);
  c_sweep->add_option("--journal", sw.journal, "Resume journal JSONL");
  c_sweep->add_option("--out", sw.out);
  c_sweep->callback([&] { action = [&] { cmd_sweep(common, sw); }; });

  AnalyzeArgs an;
  auto* c_unk = app.add_subcommand("analyze-unknown", "Predictions over gold-Unknown cases");
  c_unk->add_option("--predictions", an.predictions)->required();
  c_unk->add_option("--run", an.run);
  c_unk->add_option("--out", an.out);
  c_unk->callback([&] { action = [&] { cmd_analyze_unknown(common, an); }; });

  auto* c_dist = app.add_subcommand("analyze-distributions", "GT vs predicted histograms and JSD");
  c_dist->add_option("--predictions", an.predictions)->required();
  c_dist->add_option("--run", an.run);
  c_dist->add_option("--support-first", an.support_first);
  c_dist->add_option("--support-last", an.support_last);
  c_dist->add_option("--out", an.out);
  c_dist->callback([&] { action = [&] { cmd_analyze_distributions(common, an); }; });

  auto* c_pairs = app.add_subcommand("analyze-pairs", "Kendall tau between two vehicles' codes");
  c_pairs->add_option("--predictions", an.predictions)->required();
  c_pairs->add_option("--examples", an.examples)->required();
  c_pairs->add_option("--run", an.run);
  c_pairs->add_option("--out", an.out);
  c_pairs->callback([&] { action = [&] { cmd_analyze_pairs(common, an); }; });

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "Compare run metrics with reference baselines");
  c_rep->add_flag("--against-baselines", rep.against_baselines);
  c_rep->add_flag("--lint", rep.lint, "Fail when a baseline row lacks a citation or value");
  c_rep->add_option("--baselines", rep.baselines, "Baseline TSV");
  c_rep->add_option("--run", rep.runs, "EvalReport TSV files");
  c_rep->add_option("--out", rep.out);
  c_rep->callback([&] { action = [&] { status = cmd_report(common, rep); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return emit_error("UsageError", "cli_reporting", e.what());
  }
  common.seed = seed;

  try {
    action();
  } catch (const Error& e) {
    return emit_error(std::string(errc_name(e.code())), std::string(errc_module(e.code())),
                      e.what());
  } catch (const std::exception& e) {
    return emit_error("IoError", "cli_reporting", e.what());
  }
  return status;
}
