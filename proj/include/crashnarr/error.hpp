#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace crashnarr {

enum class Errc {
  // label_taxonomy
  MalformedTaxonomy,
  PartitionViolation,
  OversizeCandidateSet,
  UnknownConfiguration,
  // ciss_ingest
  MissingTable,
  MissingColumn,
  JoinOrphan,
  InvalidRecord,
  EmptySplit,
  // prompt_builder
  EmptySummary,
  InvalidOutput,
  TemplateError,
  // inference_backend
  Timeout,
  TransportError,
  RemoteRefusal,
  InvalidConfig,
  // micro_transformer
  ShapeMismatch,
  NonFiniteInput,
  SequenceTooLong,
  IndexOutOfRange,
  NonFiniteLoss,
  MissingClsToken,
  CheckpointMismatch,
  // eval_metrics
  EmptyAfterExclusion,
  LengthMismatch,
  UnknownLabel,
  SupportMismatch,
  TooFewPairs,
  DegenerateVariance,
  // robustness_harness
  RatioOutOfRange,
  SampleTooLarge,
  // synth_corpus
  UnknownTask,
  // cli / io
  UsageError,
  IoError,
};

std::string_view errc_name(Errc code);

/// Module that raised an error; surfaced by the CLI in its error record.
std::string_view errc_module(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace crashnarr
