#include "crashnarr/backend.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "crashnarr/error.hpp"
#include "crashnarr/rng.hpp"
#include "crashnarr/tokenizer.hpp"

namespace crashnarr {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

}  // namespace

std::string_view invalid_policy_name(InvalidPolicy p) {
  switch (p) {
    case InvalidPolicy::TreatAsWrong: return "treat-as-wrong";
    case InvalidPolicy::RetryOnce: return "retry-once";
    case InvalidPolicy::Drop: return "drop";
  }
  return "?";
}

InvalidPolicy parse_invalid_policy(std::string_view name) {
  if (name == "treat-as-wrong") return InvalidPolicy::TreatAsWrong;
  if (name == "retry-once") return InvalidPolicy::RetryOnce;
  if (name == "drop") return InvalidPolicy::Drop;
  throw Error(Errc::InvalidConfig, "unknown invalid-output policy '" + std::string(name) + "'");
}

void BackendConfig::validate() const {
  if (!(temperature >= 0.0)) throw Error(Errc::InvalidConfig, "temperature must be >= 0");
  if (concurrency_limit < 1) throw Error(Errc::InvalidConfig, "concurrency_limit must be >= 1");
  if (max_retries < 0) throw Error(Errc::InvalidConfig, "max_retries must be >= 0");
  if (max_output_tokens < 1) throw Error(Errc::InvalidConfig, "max_output_tokens must be >= 1");
  if (timeout_ms < 1) throw Error(Errc::InvalidConfig, "timeout_ms must be >= 1");
  if (retry_base_ms < 0) throw Error(Errc::InvalidConfig, "retry_base_ms must be >= 0");
  if (backend_id.empty()) throw Error(Errc::InvalidConfig, "backend_id must not be empty");
  if (!is_local() && endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0) {
    throw Error(Errc::InvalidConfig, "endpoint must be 'local' or an http(s) URL");
  }
}

BackendConfig BackendConfig::from_json(const json& doc) {
  static const std::vector<std::string> kKeys = {
      "backend_id", "endpoint",    "model",         "checkpoint",        "temperature",
      "max_output_tokens", "timeout_ms", "max_retries", "retry_base_ms", "concurrency_limit",
      "seed",       "invalid_policy"};
  if (!doc.is_object()) throw Error(Errc::InvalidConfig, "backend config must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw Error(Errc::InvalidConfig, "unknown backend key '" + key + "'");
    }
  }
  BackendConfig c;
  try {
    c.backend_id = doc.value("backend_id", c.backend_id);
    c.endpoint = doc.value("endpoint", c.endpoint);
    c.model = doc.value("model", c.model);
    c.checkpoint = doc.value("checkpoint", std::string());
    c.temperature = doc.value("temperature", c.temperature);
    c.max_output_tokens = doc.value("max_output_tokens", c.max_output_tokens);
    c.timeout_ms = doc.value("timeout_ms", c.timeout_ms);
    c.max_retries = doc.value("max_retries", c.max_retries);
    c.retry_base_ms = doc.value("retry_base_ms", c.retry_base_ms);
    c.concurrency_limit = doc.value("concurrency_limit", c.concurrency_limit);
    if (doc.contains("seed") && !doc.at("seed").is_null()) c.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("invalid_policy")) {
      c.invalid_policy = parse_invalid_policy(doc.at("invalid_policy").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("backend config: ") + e.what());
  }
  c.validate();
  return c;
}

json BackendConfig::to_json() const {
  json j = {{"backend_id", backend_id},
            {"endpoint", endpoint},
            {"model", model},
            {"checkpoint", checkpoint.string()},
            {"temperature", temperature},
            {"max_output_tokens", max_output_tokens},
            {"timeout_ms", timeout_ms},
            {"max_retries", max_retries},
            {"retry_base_ms", retry_base_ms},
            {"concurrency_limit", concurrency_limit},
            {"invalid_policy", std::string(invalid_policy_name(invalid_policy))}};
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

void BackendConfig::apply_environment() {
  if (const char* key = std::getenv(kApiKeyEnv)) api_key = key;
  if (const char* ep = std::getenv(kEndpointEnv); ep && is_local() && checkpoint.empty()) {
    endpoint = ep;
  }
}

LocalBackend::LocalBackend(std::shared_ptr<const LocalModel> model, BackendConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  config_.validate();
  if (!model_) throw Error(Errc::InvalidConfig, "local backend needs a model");
}

std::vector<double> LocalBackend::label_probabilities(const Prompt& prompt) const {
  const LocalModel& lm = *model_;
  if (prompt.task != lm.task) {
    throw Error(Errc::InvalidConfig, "checkpoint was trained for " + std::string(task_name(lm.task)) +
                                         ", prompt is " + std::string(task_name(prompt.task)));
  }
  const auto& allowed = prompt.allowed_tokens;
  std::vector<double> scores(allowed.size(), -std::numeric_limits<double>::infinity());
  if (lm.head == ModelHead::Decoder) {
    const auto tokens = encode_prompt(lm.vocab, prompt, lm.model.dims.max_seq);
    const Vec logits = decoder_logits(lm.model, tokens);
    for (std::size_t i = 0; i < allowed.size(); ++i) scores[i] = logits[lm.vocab.label_id(allowed[i])];
  } else {
    const auto tokens = encode_prompt(lm.vocab, prompt, lm.model.dims.max_seq, /*encoder=*/true);
    const Vec p = cls_forward(lm.model, tokens, *lm.model.cls_head, Vocabulary::kCls);
    for (std::size_t i = 0; i < allowed.size(); ++i) {
      const auto it = std::find(lm.cls_labels.begin(), lm.cls_labels.end(), allowed[i]);
      if (it != lm.cls_labels.end()) scores[i] = std::log(p[it - lm.cls_labels.begin()]);
    }
  }
  const double temp = config_.temperature > 0.0 ? config_.temperature : 1.0;
  const double top = *std::max_element(scores.begin(), scores.end());
  if (!std::isfinite(top)) throw Error(Errc::InvalidConfig, "no allowed token is known to the model");
  std::vector<double> probs(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    probs[i] = std::exp((scores[i] - top) / temp);
    total += probs[i];
  }
  for (auto& p : probs) p /= total;
  return probs;
}

RawOutput LocalBackend::complete(const Prompt& prompt, int run_index, int attempt) {
  const auto start = Clock::now();
  const auto probs = label_probabilities(prompt);
  std::size_t choice = 0;
  if (config_.temperature == 0.0) {
    choice = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  } else {
    Rng rng(mix_seed(config_.seed.value_or(0), fnv1a(prompt.text),
                     static_cast<std::uint64_t>(run_index) * 16 + static_cast<std::uint64_t>(attempt)));
    double u = rng.uniform();
    choice = probs.size() - 1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (u < probs[i]) {
        choice = i;
        break;
      }
      u -= probs[i];
    }
  }
  return {prompt.allowed_tokens[choice].str(), config_.backend_id, elapsed_ms(start)};
}

RemoteBackend::RemoteBackend(BackendConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.is_local()) throw Error(Errc::InvalidConfig, "remote backend needs a URL endpoint");
  const std::string& url = config_.endpoint;
  const auto scheme_end = url.find("://");
  const auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  std::string base = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  const std::string suffix = "/chat/completions";
  if (base.size() >= suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    path_ = base;
  } else if (base.size() >= 3 && base.compare(base.size() - 3, 3, "/v1") == 0) {
    path_ = base + suffix;
  } else {
    path_ = base + "/v1" + suffix;
  }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (url.rfind("https://", 0) == 0) {
    throw Error(Errc::InvalidConfig, "built without TLS support; https endpoints are unavailable");
  }
#endif
}

json RemoteBackend::request_body(const Prompt& prompt) const {
  json body = {{"model", config_.model},
               {"messages", json::array({{{"role", "user"}, {"content", prompt.text}}})},
               {"temperature", config_.temperature},
               {"max_tokens", config_.max_output_tokens}};
  if (config_.seed) body["seed"] = *config_.seed;
  return body;
}

RawOutput RemoteBackend::complete(const Prompt& prompt, int /*run_index*/, int /*attempt*/) {
  const auto start = Clock::now();
  const std::string body = request_body(prompt).dump();
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto timeout = std::chrono::milliseconds(config_.timeout_ms);
  Errc last_kind = Errc::TransportError;
  std::string last_detail;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0 && config_.retry_base_ms > 0) {
      const int shift = std::min(attempt - 1, 10);
      std::this_thread::sleep_for(std::chrono::milliseconds(config_.retry_base_ms << shift));
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      last_kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                      ? Errc::Timeout
                      : Errc::TransportError;
      last_detail = httplib::to_string(err);
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_kind = Errc::RemoteRefusal;
      last_detail = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(Errc::RemoteRefusal, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      const json doc = json::parse(res->body);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      return {content.is_null() ? std::string() : content.get<std::string>(), config_.backend_id,
              elapsed_ms(start)};
    } catch (const json::exception& e) {
      throw Error(Errc::TransportError, std::string("malformed completion response: ") + e.what());
    }
  }
  throw Error(last_kind, config_.endpoint + ": " + last_detail + " after " +
                             std::to_string(config_.max_retries) + " retries");
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  config.validate();
  if (!config.is_local()) return std::make_unique<RemoteBackend>(config);
  if (config.checkpoint.empty()) throw Error(Errc::InvalidConfig, "local backend needs a checkpoint");
  auto model = std::make_shared<const LocalModel>(load_checkpoint(config.checkpoint));
  return std::make_unique<LocalBackend>(std::move(model), config);
}

RawOutput complete(const BackendConfig& config, const Prompt& prompt) {
  return make_backend(config)->complete(prompt, 1, 0);
}

std::vector<PredictionRecord> run_batch(Backend& backend, const BackendConfig& config,
                                        const std::vector<BatchItem>& items, int runs) {
  config.validate();
  if (runs < 1) throw Error(Errc::InvalidConfig, "runs must be >= 1");
  const std::size_t total = items.size() * static_cast<std::size_t>(runs);
  std::vector<PredictionRecord> out(total);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t slot = next++; slot < total; slot = next++) {
      const auto& item = items[slot / static_cast<std::size_t>(runs)];
      const int run = static_cast<int>(slot % static_cast<std::size_t>(runs)) + 1;
      PredictionRecord& rec = out[slot];
      rec.example_id = item.example_id;
      rec.backend_id = backend.id();
      rec.run_index = run;
      rec.gold = item.gold;
      const auto start = Clock::now();
      const int attempts = config.invalid_policy == InvalidPolicy::RetryOnce ? 2 : 1;
      for (int attempt = 0; attempt < attempts && !rec.predicted; ++attempt) {
        try {
          const RawOutput raw = backend.complete(item.prompt, run, attempt);
          const LabelParse parsed = parse_label(raw, item.prompt.allowed_tokens);
          rec.predicted = parsed.token;
          rec.raw_output = parsed.offending;
        } catch (const Error& e) {
          rec.raw_output = "error[" + std::string(errc_name(e.code())) + "]: " + e.what();
          break;
        } catch (const std::exception& e) {
          rec.raw_output = std::string("error: ") + e.what();
          break;
        }
      }
      if (!rec.predicted && config.invalid_policy == InvalidPolicy::Drop) rec.dropped = true;
      rec.latency_ms = elapsed_ms(start);
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(config.concurrency_limit), total);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(work);
  }
  return out;
}

}  // namespace crashnarr
