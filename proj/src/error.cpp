#include "crashnarr/error.hpp"

namespace crashnarr {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::MalformedTaxonomy: return "MalformedTaxonomy";
    case Errc::PartitionViolation: return "PartitionViolation";
    case Errc::OversizeCandidateSet: return "OversizeCandidateSet";
    case Errc::UnknownConfiguration: return "UnknownConfiguration";
    case Errc::MissingTable: return "MissingTable";
    case Errc::MissingColumn: return "MissingColumn";
    case Errc::JoinOrphan: return "JoinOrphan";
    case Errc::InvalidRecord: return "InvalidRecord";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::EmptySummary: return "EmptySummary";
    case Errc::InvalidOutput: return "InvalidOutput";
    case Errc::TemplateError: return "TemplateError";
    case Errc::Timeout: return "Timeout";
    case Errc::TransportError: return "TransportError";
    case Errc::RemoteRefusal: return "RemoteRefusal";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::SequenceTooLong: return "SequenceTooLong";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::MissingClsToken: return "MissingClsToken";
    case Errc::CheckpointMismatch: return "CheckpointMismatch";
    case Errc::EmptyAfterExclusion: return "EmptyAfterExclusion";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::SupportMismatch: return "SupportMismatch";
    case Errc::TooFewPairs: return "TooFewPairs";
    case Errc::DegenerateVariance: return "DegenerateVariance";
    case Errc::RatioOutOfRange: return "RatioOutOfRange";
    case Errc::SampleTooLarge: return "SampleTooLarge";
    case Errc::UnknownTask: return "UnknownTask";
    case Errc::UsageError: return "UsageError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

std::string_view errc_module(Errc code) {
  switch (code) {
    case Errc::MalformedTaxonomy:
    case Errc::PartitionViolation:
    case Errc::OversizeCandidateSet:
    case Errc::UnknownConfiguration:
      return "label_taxonomy";
    case Errc::MissingTable:
    case Errc::MissingColumn:
    case Errc::JoinOrphan:
    case Errc::InvalidRecord:
    case Errc::EmptySplit:
      return "ciss_ingest";
    case Errc::EmptySummary:
    case Errc::InvalidOutput:
    case Errc::TemplateError:
      return "prompt_builder";
    case Errc::Timeout:
    case Errc::TransportError:
    case Errc::RemoteRefusal:
    case Errc::InvalidConfig:
      return "inference_backend";
    case Errc::ShapeMismatch:
    case Errc::NonFiniteInput:
    case Errc::SequenceTooLong:
    case Errc::IndexOutOfRange:
    case Errc::NonFiniteLoss:
    case Errc::MissingClsToken:
    case Errc::CheckpointMismatch:
      return "micro_transformer";
    case Errc::EmptyAfterExclusion:
    case Errc::LengthMismatch:
    case Errc::UnknownLabel:
    case Errc::SupportMismatch:
    case Errc::TooFewPairs:
    case Errc::DegenerateVariance:
      return "eval_metrics";
    case Errc::RatioOutOfRange:
    case Errc::SampleTooLarge:
      return "robustness_harness";
    case Errc::UnknownTask:
      return "synth_corpus";
    case Errc::UsageError:
    case Errc::IoError:
      return "cli_reporting";
  }
  return "unknown";
}

}  // namespace crashnarr
