#include <gtest/gtest.h>

#include "sparkles/error.hpp"
#include "sparkles/llm_client.hpp"
#include "sparkles/mock.hpp"
#include "support.hpp"

using namespace sparkles;
using namespace std::chrono_literals;

namespace {

ChatRequest hello(const ChatClient& c) {
  return c.make_request("sys", {{"user", {ContentPart::text("hello")}}},
                        default_generation_config(ClientRole::data_llm));
}

struct Scripted {
  std::vector<HttpResponse> replies;  // served in order, last repeats
  std::shared_ptr<CallbackTransport> transport;
  explicit Scripted(std::vector<HttpResponse> r) : replies(std::move(r)) {
    transport = std::make_shared<CallbackTransport>([this](const HttpRequest&) {
      const int n = transport->calls() - 1;
      return replies[std::min<std::size_t>(n, replies.size() - 1)];
    });
  }
};

}  // namespace

TEST(Serialize, ByteStableAndKeyFree) {
  Endpoint ep{"http://a.invalid/v1", "gpt-4", "KEY", "sk-secret"};
  ChatClient c(ep, std::make_shared<CallbackTransport>([](const HttpRequest&) {
    return test::ok_reply("x");
  }));
  const ChatRequest req = hello(c);
  EXPECT_EQ(serialize_request(req), serialize_request(req));
  EXPECT_EQ(serialize_request(req).find("sk-secret"), std::string::npos);
  ChatRequest other = req;
  other.endpoint.base_url = "http://b.invalid";
  other.endpoint.api_key = "different";
  EXPECT_EQ(request_hash(other), request_hash(req));
  other.messages[0].parts[0].value = "hello!";
  EXPECT_NE(request_hash(other), request_hash(req));
}

TEST(Serialize, ImagePartsBecomeImageUrls) {
  ChatRequest req;
  req.endpoint.model = "m";
  req.messages = {{"user", {ContentPart::text("a"), ContentPart::image("http://x/1.jpg")}}};
  const Json body = Json::parse(serialize_request(req));
  const Json& content = body["messages"].back()["content"];
  ASSERT_EQ(content.size(), 2u);
  EXPECT_EQ(content[1]["type"], "image_url");
  EXPECT_EQ(content[1]["image_url"]["url"], "http://x/1.jpg");
}

TEST(Client, RetriesTransientStatusesThenSucceeds) {
  Scripted s({{503, "busy"}, {429, "slow down"}, test::ok_reply("done")});
  std::vector<std::chrono::milliseconds> sleeps;
  ChatClient c(Endpoint{"http://x.invalid", "m", "", ""}, s.transport, RetryPolicy{},
               [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  const ChatResponse r = c.complete_chat(hello(c));
  EXPECT_EQ(r.content, "done");
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{1000ms, 2000ms}));
}

TEST(Client, GivesUpAfterMaxAttempts) {
  Scripted s({{500, "err"}});
  const ChatClient c = test::client_for(s.transport, "m");
  EXPECT_THROW(c.complete_chat(hello(c)), TransportError);
  EXPECT_EQ(s.transport->calls(), 3);
}

TEST(Client, TransportFailuresAreRetried) {
  int calls = 0;
  auto t = std::make_shared<CallbackTransport>([&](const HttpRequest&) -> HttpResponse {
    if (++calls < 3) throw TransportError("connection refused");
    return test::ok_reply("ok");
  });
  const ChatClient c = test::client_for(t, "m");
  EXPECT_EQ(c.complete_chat(hello(c)).content, "ok");
}

TEST(Client, AuthFailureIsNotRetried) {
  for (int status : {401, 403}) {
    Scripted s({{status, "no"}});
    const ChatClient c = test::client_for(s.transport, "m");
    EXPECT_THROW(c.complete_chat(hello(c)), AuthError);
    EXPECT_EQ(s.transport->calls(), 1);
  }
}

TEST(Client, OtherClientErrorsAndBadBodiesAreProtocolErrors) {
  Scripted bad_request({{400, "bad"}});
  const ChatClient c1 = test::client_for(bad_request.transport, "m");
  EXPECT_THROW(c1.complete_chat(hello(c1)), ProtocolError);
  EXPECT_EQ(bad_request.transport->calls(), 1);

  Scripted garbage({{200, "{\"choices\": []}"}});
  const ChatClient c2 = test::client_for(garbage.transport, "m");
  EXPECT_THROW(c2.complete_chat(hello(c2)), ProtocolError);
}

TEST(Client, SendsBearerKeyAndChatPath) {
  HttpRequest seen;
  auto t = std::make_shared<CallbackTransport>([&](const HttpRequest& r) {
    seen = r;
    return test::ok_reply("ok");
  });
  ChatClient c(Endpoint{"http://x.invalid/v1/", "m", "K", "sk-1"}, t, {}, test::no_sleep());
  c.complete_chat(hello(c));
  EXPECT_EQ(seen.url, "http://x.invalid/v1/chat/completions");
  bool found = false;
  for (const auto& [k, v] : seen.headers) found |= (k == "Authorization" && v == "Bearer sk-1");
  EXPECT_TRUE(found);
}

TEST(Retry, DelaysAreNonDecreasingAndCapped) {
  RetryPolicy p;
  p.max_delay = 5000ms;
  std::chrono::milliseconds prev{0};
  for (int i = 1; i < 12; ++i) {
    const auto d = p.delay_before_retry(i);
    EXPECT_GE(d, prev);
    EXPECT_LE(d, p.max_delay);
    prev = d;
  }
}

TEST(Response, ParsesFinishReasonAndUsage) {
  const ChatResponse r = parse_response_body(chat_completion_body("hi", "length", {3, 4, 7}));
  EXPECT_EQ(r.content, "hi");
  EXPECT_EQ(r.finish_reason, FinishReason::length);
  EXPECT_EQ(r.usage.total_tokens, 7);
}

TEST(Generation, ConfigChecks) {
  GenerationConfig g;
  g.top_p = 0;
  EXPECT_THROW(g.check(), ConfigError);
  g = {};
  g.max_tokens = 0;
  EXPECT_THROW(g.check(), ConfigError);
  const GenerationConfig m = default_generation_config(ClientRole::model_under_test);
  EXPECT_EQ(m.top_p, 0.9);
  EXPECT_EQ(m.max_tokens, 300);
  EXPECT_EQ(demo_generation_config().beam_size, 2);
}

TEST(Replay, ServesByHashInSequenceLastRepeats) {
  auto rec = std::make_shared<RecordingTransport>(
      std::make_shared<CallbackTransport>([](const HttpRequest&) { return test::ok_reply("x"); }));
  const ChatClient probe = test::client_for(rec, "m");
  const std::string hash = request_hash(hello(probe));
  auto replay = std::make_shared<ReplayTransport>(std::vector<FixtureEntry>{
      {hash, chat_completion_body("first"), 200}, {hash, chat_completion_body("second"), 200}});
  const ChatClient c = test::client_for(replay, "m");
  EXPECT_EQ(c.complete_chat(hello(c)).content, "first");
  EXPECT_EQ(c.complete_chat(hello(c)).content, "second");
  EXPECT_EQ(c.complete_chat(hello(c)).content, "second");
  EXPECT_EQ(replay->served().at(hash), 3);
}

TEST(Replay, MissIsNotRetried) {
  auto replay = std::make_shared<ReplayTransport>(std::vector<FixtureEntry>{});
  const ChatClient c = test::client_for(replay, "m");
  EXPECT_THROW(c.complete_chat(hello(c)), FixtureMiss);
}

TEST(Replay, WildcardAnswersEverything) {
  auto replay = ReplayTransport::from_file(test::data("fixtures/always_prose.jsonl"));
  const ChatClient c = test::client_for(replay, "m");
  EXPECT_NE(c.complete_chat(hello(c)).content.find("glad"), std::string::npos);
}

TEST(Replay, RecordedEntriesRoundTripThroughJsonl) {
  auto rec = std::make_shared<RecordingTransport>(
      std::make_shared<CallbackTransport>([](const HttpRequest&) { return test::ok_reply("r"); }));
  const ChatClient c = test::client_for(rec, "m");
  c.complete_chat(hello(c));
  const auto dir = test::scratch_dir("replay");
  write_file(dir / "f.jsonl", fixture_to_jsonl(rec->entries()));
  const auto entries = read_fixture(dir / "f.jsonl");
  ASSERT_EQ(entries.size(), 1u);
  EXPECT_EQ(entries[0].request_hash, request_hash(hello(c)));
}

TEST(MockServer, ServesFixturesOverHttp) {
  auto rec = std::make_shared<RecordingTransport>(
      std::make_shared<CallbackTransport>([](const HttpRequest&) { return test::ok_reply("x"); }));
  const ChatClient probe = test::client_for(rec, "m");
  const std::string hash = request_hash(hello(probe));
  auto replay = std::make_shared<ReplayTransport>(
      std::vector<FixtureEntry>{{hash, chat_completion_body("over the wire"), 200}});
  MockServer server(replay);
  ChatClient c(Endpoint{server.base_url(), "m", "", ""}, std::make_shared<HttpTransport>(),
               test::fast_retry(1), test::no_sleep());
  EXPECT_EQ(c.complete_chat(hello(c)).content, "over the wire");
}

TEST(MockServer, UnreachableHostIsATransportError) {
  ChatClient c(Endpoint{"http://127.0.0.1:1/v1", "m", "", ""},
               std::make_shared<HttpTransport>(std::chrono::seconds(2)), test::fast_retry(2),
               test::no_sleep());
  EXPECT_THROW(c.complete_chat(hello(c)), TransportError);
}

TEST(RateLimiter, SleepsWhenBucketIsEmpty) {
  RateLimiter limiter(6000.0);  // one per 10 ms
  std::chrono::milliseconds slept{0};
  auto sleep = [&](std::chrono::milliseconds d) {
    slept += d;
    real_sleeper()(d);
  };
  limiter.acquire(sleep);
  limiter.acquire(sleep);
  EXPECT_GT(slept.count(), 0);
}
