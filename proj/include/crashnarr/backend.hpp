#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/checkpoint.hpp"
#include "crashnarr/prompt.hpp"
#include "crashnarr/records.hpp"

namespace crashnarr {

/// What run_batch does with an answer that does not parse to an allowed token.
enum class InvalidPolicy { TreatAsWrong, RetryOnce, Drop };

std::string_view invalid_policy_name(InvalidPolicy p);
InvalidPolicy parse_invalid_policy(std::string_view name);

inline constexpr const char* kApiKeyEnv = "CRASHNARR_API_KEY";
inline constexpr const char* kEndpointEnv = "CRASHNARR_ENDPOINT";

struct BackendConfig {
  std::string backend_id = "local";
  std::string endpoint = "local";  // "local" or an http(s) base URL
  std::string model;               // remote model name
  std::filesystem::path checkpoint;  // local backend
  double temperature = 0.2;
  int max_output_tokens = 4;
  int timeout_ms = 30000;
  int max_retries = 3;
  int retry_base_ms = 250;  // first backoff; doubles per retry
  int concurrency_limit = 4;
  std::optional<std::uint64_t> seed;
  std::string api_key;
  InvalidPolicy invalid_policy = InvalidPolicy::RetryOnce;

  bool is_local() const { return endpoint == "local"; }
  void validate() const;

  /// Known keys only; unknown keys raise InvalidConfig.
  static BackendConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;  // without the API key
  /// Fills the API key, and the endpoint when unset, from the environment.
  void apply_environment();
};

/// Prompt in, raw text out. Implementations are safe for concurrent calls.
class Backend {
 public:
  virtual ~Backend() = default;
  /// `attempt` is 0 for the first try and 1 for the retry-once policy.
  virtual RawOutput complete(const Prompt& prompt, int run_index, int attempt) = 0;
  virtual std::string id() const = 0;
};

/// Answers with the micro transformer. Temperature 0 takes the argmax over the
/// allowed tokens; otherwise it samples with a seed derived from the prompt,
/// the run and the attempt.
class LocalBackend final : public Backend {
 public:
  LocalBackend(std::shared_ptr<const LocalModel> model, BackendConfig config);
  RawOutput complete(const Prompt& prompt, int run_index, int attempt) override;
  std::string id() const override { return config_.backend_id; }

  /// Probabilities over `prompt.allowed_tokens`, in that order.
  std::vector<double> label_probabilities(const Prompt& prompt) const;

 private:
  std::shared_ptr<const LocalModel> model_;
  BackendConfig config_;
};

/// Chat-completion client: POST {endpoint}/v1/chat/completions with a single
/// user message; reads choices[0].message.content.
class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(BackendConfig config);
  RawOutput complete(const Prompt& prompt, int run_index, int attempt) override;
  std::string id() const override { return config_.backend_id; }

  nlohmann::json request_body(const Prompt& prompt) const;

 private:
  BackendConfig config_;
  std::string origin_;  // scheme://host:port
  std::string path_;
};

/// Wraps a callable; used for stubs and tests.
class CallbackBackend final : public Backend {
 public:
  using Fn = std::function<RawOutput(const Prompt&, int run_index, int attempt)>;
  CallbackBackend(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}
  RawOutput complete(const Prompt& prompt, int run_index, int attempt) override {
    return fn_(prompt, run_index, attempt);
  }
  std::string id() const override { return id_; }

 private:
  std::string id_;
  Fn fn_;
};

/// Local backends load `config.checkpoint`.
std::unique_ptr<Backend> make_backend(const BackendConfig& config);

/// One-shot completion through the backend named by `config`.
RawOutput complete(const BackendConfig& config, const Prompt& prompt);

struct BatchItem {
  std::string example_id;
  Prompt prompt;
  LabelToken gold;
};

/// |items| x runs records in canonical order (item, then run). At most
/// `config.concurrency_limit` calls are in flight. A failing call becomes an
/// invalid record; the batch never aborts.
std::vector<PredictionRecord> run_batch(Backend& backend, const BackendConfig& config,
                                        const std::vector<BatchItem>& items, int runs);

}  // namespace crashnarr
