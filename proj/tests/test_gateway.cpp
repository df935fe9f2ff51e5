#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "mark/gateway.hpp"
#include "mark/mock_backend.hpp"
#include "support.hpp"

using namespace mark;
using testing_support::fast_config;

namespace {

std::vector<ChatMessage> basic_messages() { return {{Role::System, "sys"}, {Role::User, "hello"}}; }

SchemaSpec answer_schema() { return schemas::single_answer(); }

}  // namespace

TEST(ExtractJson, Direct) { EXPECT_EQ((*extract_json(R"J({"a":1})J"))["a"], 1); }

TEST(ExtractJson, Fenced) {
  const auto v = extract_json("Sure!\n```json\n[1, 2]\n```\nDone.");
  ASSERT_TRUE(v);
  EXPECT_EQ(v->size(), 2u);
}

TEST(ExtractJson, ProseWrapped) {
  const auto v = extract_json(R"J(Here you go: {"answer": "(A) x {y}"} hope it helps)J");
  ASSERT_TRUE(v);
  EXPECT_EQ((*v)["answer"], "(A) x {y}");
}

TEST(ExtractJson, ArrayInProse) {
  const auto v = extract_json(R"J(Result: [{"a": "]"}, {"b": 2}] end)J");
  ASSERT_TRUE(v);
  EXPECT_EQ(v->size(), 2u);
}

TEST(ExtractJson, Garbage) {
  EXPECT_FALSE(extract_json("no json here").has_value());
  EXPECT_FALSE(extract_json("{broken").has_value());
  EXPECT_FALSE(extract_json("").has_value());
}

TEST(Schema, RequiredFieldKinds) {
  const auto s = schemas::stress_scoring();
  EXPECT_FALSE(validate(Json::parse(R"J({"features":[{"features":"Age","stress_level":25,"explanation":"x"}]})J"), s));
  EXPECT_TRUE(validate(Json::parse(R"J({"features":[{"features":"Age","stress_level":"25","explanation":"x"}]})J"), s));
  EXPECT_TRUE(validate(Json::parse(R"J({"features":[{"features":"Age","stress_level":25.5,"explanation":"x"}]})J"), s));
  EXPECT_FALSE(validate(Json::parse(R"J({"features":[{"features":"Age","stress_level":25.0,"explanation":"x"}]})J"), s));
  EXPECT_TRUE(validate(Json::parse(R"J([])J"), s));
}

TEST(Schema, MinItems) {
  EXPECT_TRUE(validate(Json::array(), schemas::synthesis()));
  EXPECT_FALSE(validate(Json::parse(R"J([{"conclusion":"(A)"}])J"), schemas::synthesis()));
}

TEST(Gateway, ReturnsRawText) {
  auto mock = std::make_shared<MockBackend>();
  mock->on("t", "plain text");
  Gateway g(mock);
  EXPECT_EQ(g.complete(basic_messages(), fast_config(), "t"), "plain text");
  ASSERT_EQ(g.log().lines().size(), 1u);
  const Json rec = Json::parse(g.log().lines()[0]);
  EXPECT_EQ(rec["stage_tag"], "t");
  EXPECT_EQ(rec["raw_response"], "plain text");
  EXPECT_EQ(rec["parsed_ok"], true);
  EXPECT_EQ(rec["messages"].size(), 2u);
  EXPECT_TRUE(rec.contains("timestamp"));
}

TEST(Gateway, RetriesTransientFailures) {
  auto mock = std::make_shared<MockBackend>();
  mock->add({"t", std::nullopt, {MockReply::transient(503), MockReply::transient(429), MockReply::ok("ok")}});
  Gateway g(mock);
  EXPECT_EQ(g.complete(basic_messages(), fast_config(3), "t"), "ok");
  EXPECT_EQ(mock->calls(), 3u);
}

TEST(Gateway, TransportErrorCarriesAttempts) {
  auto mock = std::make_shared<MockBackend>();
  mock->add({"t", std::nullopt, {MockReply::transient(500)}});
  Gateway g(mock);
  try {
    g.complete(basic_messages(), fast_config(2), "t");
    FAIL() << "expected TransportError";
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempts(), 3);
  }
  EXPECT_EQ(mock->calls(), 3u);
}

TEST(Gateway, RefusalIsNotRetried) {
  auto mock = std::make_shared<MockBackend>();
  mock->add({"t", std::nullopt, {MockReply::refusal(400, "bad request")}});
  Gateway g(mock);
  try {
    g.complete(basic_messages(), fast_config(3), "t");
    FAIL() << "expected BackendRefusal";
  } catch (const BackendRefusal& e) {
    EXPECT_EQ(e.status(), 400);
    EXPECT_EQ(e.body(), "bad request");
  }
  EXPECT_EQ(mock->calls(), 1u);
}

TEST(Gateway, PreconditionsOnMessages) {
  auto mock = std::make_shared<MockBackend>();
  mock->on("t", "x");
  Gateway g(mock);
  EXPECT_THROW(g.complete({}, fast_config(), "t"), PreconditionError);
  EXPECT_THROW(g.complete({{Role::User, "hi"}}, fast_config(), "t"), PreconditionError);
  EXPECT_THROW(g.complete({{Role::System, "s"}, {Role::User, ""}}, fast_config(), "t"), PreconditionError);
  EXPECT_THROW(Gateway(nullptr), PreconditionError);
}

TEST(Gateway, StructuredRepairsFences) {
  auto mock = std::make_shared<MockBackend>();
  mock->on("t", "```json\n{\"answer\": \"(A)\"}\n```");
  Gateway g(mock);
  EXPECT_EQ(g.complete_structured(basic_messages(), fast_config(), answer_schema(), "t")["answer"], "(A)");
  EXPECT_EQ(mock->calls(), 1u);
}

TEST(Gateway, StructuredReprompsOnceThenSucceeds) {
  auto mock = std::make_shared<MockBackend>();
  mock->sequence("t", {"not json at all", R"J({"answer": "(B)"})J"});
  Gateway g(mock);
  EXPECT_EQ(g.complete_structured(basic_messages(), fast_config(), answer_schema(), "t")["answer"], "(B)");
  const auto lines = g.log().lines();
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(Json::parse(lines[0])["parsed_ok"], false);
  const Json second = Json::parse(lines[1]);
  EXPECT_EQ(second["parsed_ok"], true);
  // corrective turn appended: original two + assistant + user
  ASSERT_EQ(second["messages"].size(), 4u);
  EXPECT_EQ(second["messages"][2]["role"], "assistant");
  EXPECT_EQ(second["messages"][2]["content"], "not json at all");
  EXPECT_EQ(second["messages"][3]["role"], "user");
}

TEST(Gateway, StructuredGivesUpWithSchemaViolation) {
  auto mock = std::make_shared<MockBackend>();
  mock->on("t", R"J({"wrong": 1})J");
  Gateway g(mock);
  try {
    g.complete_structured(basic_messages(), fast_config(2), answer_schema(), "t");
    FAIL() << "expected SchemaViolation";
  } catch (const SchemaViolation& e) {
    EXPECT_EQ(e.last_raw(), R"J({"wrong": 1})J");
  }
  EXPECT_EQ(mock->calls(), 3u);
}

TEST(Gateway, ExtraValidatorParticipates) {
  auto mock = std::make_shared<MockBackend>();
  mock->sequence("t", {R"J({"answer": "(Z)"})J", R"J({"answer": "(A)"})J"});
  Gateway g(mock);
  const Validator only_a = [](const Json& v) -> std::optional<std::string> {
    if (v["answer"] == "(A)") return std::nullopt;
    return "answer must be (A)";
  };
  EXPECT_EQ(g.complete_structured(basic_messages(), fast_config(), answer_schema(), "t", only_a)["answer"], "(A)");
}

TEST(Gateway, FoldsToolMessages) {
  const auto folded = Gateway::fold_tools({{Role::System, "s"}, {Role::User, "u"}, {Role::Tool, "t1"},
                                           {Role::Assistant, "a"}, {Role::Tool, "t2"}});
  ASSERT_EQ(folded.size(), 4u);
  EXPECT_EQ(folded[1].content, "u\n\n[Tool output]\nt1");
  EXPECT_EQ(folded[3].role, Role::User);
  EXPECT_EQ(folded[3].content, "[Tool output]\nt2");
}

TEST(Gateway, FoldingReachesBackend) {
  struct Capture : Backend {
    std::vector<ChatMessage> seen;
    std::string chat(const ChatRequest& r) override {
      seen = r.messages;
      return "x";
    }
  };
  auto cap = std::make_shared<Capture>();
  Gateway g(cap);
  auto cfg = fast_config();
  cfg.fold_tool_messages = true;
  g.complete({{Role::System, "s"}, {Role::User, "u"}, {Role::Tool, "t"}}, cfg, "x");
  ASSERT_EQ(cap->seen.size(), 2u);
  EXPECT_EQ(cap->seen[1].role, Role::User);
}

TEST(Gateway, ParallelismBoundsInFlightCalls) {
  struct Slow : Backend {
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};
    std::string chat(const ChatRequest&) override {
      const int now = ++in_flight;
      int p = peak.load();
      while (now > p && !peak.compare_exchange_weak(p, now)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(15));
      --in_flight;
      return "x";
    }
  };
  auto slow = std::make_shared<Slow>();
  Gateway g(slow, 2);
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { g.complete(basic_messages(), fast_config(), "t"); });
  for (auto& t : threads) t.join();
  EXPECT_LE(slow->peak.load(), 2);
  EXPECT_EQ(g.log().lines().size(), 8u);
}

TEST(RequestLog, WritesJsonLinesWithInjectedClock) {
  testing_support::TempDir dir;
  const auto path = (dir / "requests.jsonl").string();
  {
    auto log = std::make_shared<RequestLog>(path, [] { return std::string("2024-01-01T00:00:00Z"); });
    auto mock = std::make_shared<MockBackend>();
    mock->on("t", "x");
    Gateway g(mock, 4, log);
    g.complete(basic_messages(), fast_config(), "t");
  }
  const auto lines = read_jsonl(path);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0]["timestamp"], "2024-01-01T00:00:00Z");
}

TEST(MockBackend, SubstringRulesWin) {
  MockBackend mock;
  mock.on("t", "generic");
  mock.on("t", "family", "specific");
  EXPECT_EQ(mock.chat({"t", {{Role::User, "about family"}}, {}}), "specific");
  EXPECT_EQ(mock.chat({"t", {{Role::User, "about work"}}, {}}), "generic");
}

TEST(MockBackend, SequenceRepeatsLast) {
  MockBackend mock;
  mock.sequence("t", {"one", "two"});
  const ChatRequest r{"t", {{Role::User, "x"}}, {}};
  EXPECT_EQ(mock.chat(r), "one");
  EXPECT_EQ(mock.chat(r), "two");
  EXPECT_EQ(mock.chat(r), "two");
}

TEST(MockBackend, UnscriptedStageThrows) {
  MockBackend mock;
  mock.on("a", "x");
  EXPECT_THROW(mock.chat({"b", {{Role::User, "x"}}, {}}), UnscriptedRequest);
}

TEST(MockBackend, ScriptFormat) {
  auto mock = MockBackend::from_json(Json::parse(R"J([
    {"stage": "s", "responses": ["text", {"answer": "(A)"}, {"error": "transient", "status": 502}]},
    {"stage": "r", "responses": [{"error": "refusal", "status": 401, "body": "denied"}]}
  ])J"));
  const ChatRequest s{"s", {{Role::User, "x"}}, {}};
  EXPECT_EQ(mock->chat(s), "text");
  EXPECT_EQ(Json::parse(mock->chat(s))["answer"], "(A)");
  EXPECT_THROW(mock->chat(s), TransientFailure);
  EXPECT_THROW(mock->chat({"r", {{Role::User, "x"}}, {}}), BackendRefusal);
  EXPECT_THROW(MockBackend::from_json(Json::object()), PreconditionError);
}

TEST(Endpoint, SplitsBaseUrl) {
  const auto [host, prefix] = Endpoint{"https://api.example.com/v1/", "X"}.split();
  EXPECT_EQ(host, "https://api.example.com");
  EXPECT_EQ(prefix, "/v1");
  const auto [h2, p2] = Endpoint{"http://localhost:8000", "X"}.split();
  EXPECT_EQ(h2, "http://localhost:8000");
  EXPECT_EQ(p2, "");
}

TEST(HttpBackend, UnreachableHostIsTransportError) {
  auto backend = std::make_shared<HttpBackend>(Endpoint{"http://127.0.0.1:9", "MARK_TEST_NO_KEY"});
  Gateway g(backend);
  auto cfg = fast_config(1);
  cfg.request_timeout = std::chrono::seconds(1);
  EXPECT_THROW(g.complete(basic_messages(), cfg, "t"), TransportError);
}
