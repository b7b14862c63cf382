#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "crashnarr/backend.hpp"
#include "crashnarr/error.hpp"
#include "crashnarr/pipeline.hpp"
#include "crashnarr/synth.hpp"

// after Eigen: httplib pulls in system headers that define macros Eigen uses as names
#include <httplib.h>

using namespace crashnarr;
using nlohmann::json;

namespace {

const Taxonomy& tax() {
  static const Taxonomy t = load_taxonomy(default_taxonomy_path());
  return t;
}

const TemplateSet& templates() {
  static const TemplateSet t = TemplateSet::load_default();
  return t;
}

Prompt mancoll_prompt(const std::string& summary = "V1 struck a tree.") {
  return build_mancoll_prompt(summary, tax(), templates());
}

/// Chat-completion stub on 127.0.0.1 with a handler chosen per test.
class StubServer {
 public:
  explicit StubServer(httplib::Server::Handler handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}
      .dump();
}

BackendConfig remote_config(const std::string& url) {
  BackendConfig c;
  c.backend_id = "stub";
  c.endpoint = url;
  c.model = "stub-model";
  c.max_retries = 2;
  c.retry_base_ms = 1;
  c.timeout_ms = 2000;
  return c;
}

std::shared_ptr<const LocalModel> tiny_local_model() {
  static const auto model = [] {
    MicroSetup s;
    s.dims.vocab_size = 200;
    s.dims.d_model = 16;
    s.dims.n_heads = 2;
    s.dims.head_dim = 8;
    s.dims.max_seq = 64;
    s.train.rank = 2;
    s.train.steps = 20;
    const auto train = generate(Task::Mancoll, 60, 4);
    return std::make_shared<const LocalModel>(
        train_local_model(Task::Mancoll, train, s, tax()).model);
  }();
  return model;
}

std::vector<BatchItem> batch_items(int n) {
  const auto xs = generate(Task::Mancoll, static_cast<std::size_t>(n), 9);
  std::vector<BatchItem> items;
  for (const auto& ex : xs) items.push_back({ex.id(), mancoll_prompt(ex.summary), ex.gold});
  return items;
}

}  // namespace

TEST(BackendConfig, JsonAndEnvironment) {
  BackendConfig c;
  c.endpoint = "http://example.invalid";
  c.api_key = "secret";
  const auto j = c.to_json();
  EXPECT_FALSE(j.contains("api_key"));
  EXPECT_EQ(BackendConfig::from_json(j).endpoint, c.endpoint);
  EXPECT_THROW(BackendConfig::from_json({{"endpoitn", "x"}}), Error);
  BackendConfig bad;
  bad.concurrency_limit = 0;
  EXPECT_THROW(bad.validate(), Error);

  ::setenv(kApiKeyEnv, "env-key", 1);
  BackendConfig e;
  e.apply_environment();
  EXPECT_EQ(e.api_key, "env-key");
  ::unsetenv(kApiKeyEnv);
}

TEST(RemoteBackend, StubReturnsLabel) {
  std::atomic<int> calls{0};
  std::string seen_auth, seen_body;
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    res.set_content(completion("4"), "application/json");
  });
  auto cfg = remote_config(server.url());
  cfg.api_key = "k123";
  cfg.seed = 5;
  RemoteBackend backend(cfg);
  const auto out = backend.complete(mancoll_prompt(), 1, 0);
  EXPECT_EQ(out.text, "4");
  EXPECT_EQ(out.backend_id, "stub");
  EXPECT_EQ(calls.load(), 1);
  EXPECT_EQ(seen_auth, "Bearer k123");
  const auto body = json::parse(seen_body);
  EXPECT_EQ(body["model"], "stub-model");
  EXPECT_EQ(body["messages"][0]["role"], "user");
  EXPECT_EQ(body["seed"], 5);
  EXPECT_EQ(body["messages"][0]["content"], mancoll_prompt().text);
}

TEST(RemoteBackend, RetriesServerErrors) {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    if (++calls < 3) {
      res.status = 503;
      return;
    }
    res.set_content(completion(" 6\n"), "application/json");
  });
  RemoteBackend backend(remote_config(server.url()));
  EXPECT_EQ(backend.complete(mancoll_prompt(), 1, 0).text, " 6\n");
  EXPECT_EQ(calls.load(), 3);
}

TEST(RemoteBackend, ExhaustedRetriesAndClientErrors) {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    res.status = json::parse(req.body)["max_tokens"] == 4 ? 500 : 401;
  });
  auto cfg = remote_config(server.url());
  try {
    RemoteBackend(cfg).complete(mancoll_prompt(), 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RemoteRefusal);
  }
  EXPECT_EQ(calls.load(), 3);
  cfg.max_output_tokens = 5;  // stub answers 401: no retry
  calls = 0;
  EXPECT_THROW(RemoteBackend(cfg).complete(mancoll_prompt(), 1, 0), Error);
  EXPECT_EQ(calls.load(), 1);
}

TEST(RemoteBackend, UnreachableEndpoint) {
  std::string url;
  {
    StubServer closed([](const httplib::Request&, httplib::Response&) {});
    url = closed.url();
  }
  try {
    RemoteBackend(remote_config(url)).complete(mancoll_prompt(), 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TransportError);
    EXPECT_NE(std::string(e.what()).find("after 2 retries"), std::string::npos);
  }
}

TEST(RemoteBackend, EndpointPathForms) {
  std::atomic<int> calls{0};
  StubServer server([&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.set_content(completion("1"), "application/json");
  });
  for (const std::string suffix : {"", "/", "/v1", "/v1/chat/completions"}) {
    RemoteBackend backend(remote_config(server.url() + suffix));
    EXPECT_EQ(backend.complete(mancoll_prompt(), 1, 0).text, "1") << suffix;
  }
  EXPECT_EQ(calls.load(), 4);
}

TEST(LocalBackend, GreedyIsDeterministic) {
  BackendConfig cfg;
  cfg.temperature = 0.0;
  LocalBackend backend(tiny_local_model(), cfg);
  const auto p = mancoll_prompt("V1 was traveling behind V2 and struck the rear of V2.");
  const auto a = backend.complete(p, 1, 0);
  for (int run = 1; run <= 3; ++run) EXPECT_EQ(backend.complete(p, run, 0).text, a.text);
  const auto probs = backend.label_probabilities(p);
  double sum = 0.0;
  for (double x : probs) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-12);
  EXPECT_TRUE(parse_label(a, p.allowed_tokens).ok());
}

TEST(LocalBackend, SamplingIsSeeded) {
  BackendConfig cfg;
  cfg.temperature = 1.0;
  cfg.seed = 3;
  LocalBackend a(tiny_local_model(), cfg);
  LocalBackend b(tiny_local_model(), cfg);
  const auto p = mancoll_prompt("V1 was traveling behind V2 and struck the rear of V2.");
  for (int run = 1; run <= 5; ++run) EXPECT_EQ(a.complete(p, run, 0).text, b.complete(p, run, 0).text);
}

TEST(RunBatch, RunsAndCanonicalOrder) {
  auto items = batch_items(10);
  BackendConfig cfg;
  cfg.temperature = 0.7;
  cfg.seed = 1;
  LocalBackend backend(tiny_local_model(), cfg);
  cfg.concurrency_limit = 1;
  const auto serial = run_batch(backend, cfg, items, 2);
  ASSERT_EQ(serial.size(), 20u);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].run_index, static_cast<int>(i % 2) + 1);
    EXPECT_EQ(serial[i].example_id, items[i / 2].example_id);
  }
  cfg.concurrency_limit = 4;
  const auto parallel = run_batch(backend, cfg, items, 2);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].predicted, parallel[i].predicted);
    EXPECT_EQ(serial[i].example_id, parallel[i].example_id);
  }
}

TEST(RunBatch, FailureOnThirdPromptIsIsolated) {
  const auto items = batch_items(20);
  const std::string bad = items[2].prompt.text;
  CallbackBackend stub("stub", [&](const Prompt& p, int, int) -> RawOutput {
    if (p.text == bad) throw Error(Errc::TransportError, "connection reset");
    return {"4", "stub", 0.0};
  });
  BackendConfig cfg;
  const auto recs = run_batch(stub, cfg, items, 1);
  ASSERT_EQ(recs.size(), 20u);
  int valid = 0;
  for (const auto& r : recs) valid += r.valid();
  EXPECT_EQ(valid, 19);
  EXPECT_FALSE(recs[2].valid());
  EXPECT_EQ(recs[2].raw_output.rfind("error[TransportError]", 0), 0u);
}

TEST(RunBatch, InvalidOutputPolicies) {
  const auto items = batch_items(3);
  std::atomic<int> calls{0};
  CallbackBackend stub("stub", [&](const Prompt&, int, int attempt) -> RawOutput {
    ++calls;
    return {attempt == 0 ? "angle" : "5", "stub", 0.0};
  });
  BackendConfig cfg;
  cfg.invalid_policy = InvalidPolicy::RetryOnce;
  auto recs = run_batch(stub, cfg, items, 1);
  for (const auto& r : recs) EXPECT_EQ(r.predicted->str(), "5");
  EXPECT_EQ(calls.load(), 6);

  cfg.invalid_policy = InvalidPolicy::TreatAsWrong;
  recs = run_batch(stub, cfg, items, 1);
  for (const auto& r : recs) {
    EXPECT_FALSE(r.valid());
    EXPECT_FALSE(r.dropped);
    EXPECT_EQ(r.raw_output, "angle");
  }
  cfg.invalid_policy = InvalidPolicy::Drop;
  recs = run_batch(stub, cfg, items, 1);
  for (const auto& r : recs) EXPECT_TRUE(r.dropped);
}
