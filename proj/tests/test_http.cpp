// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "support.hpp"

using namespace datg;
using namespace datg::testing;

namespace {

/// Local server standing in for remote classifier/embedder/completion hosts.
class FakeServer {
 public:
  FakeServer() {
    server_.Post("/classify", [this](const httplib::Request& req, httplib::Response& res) {
      track([&] {
        const auto body = nlohmann::json::parse(req.body);
        const std::string text = body.at("text");
        if (text == "explode") {
          res.status = 500;
          return;
        }
        if (text == "out of range") {
          res.set_content(R"({"score": 1.5})", "application/json");
          return;
        }
        res.set_content(nlohmann::json{{"score", text.size() % 2 ? 0.25 : 0.75}}.dump(), "application/json");
      });
    });
    server_.Post("/embed", [](const httplib::Request& req, httplib::Response& res) {
      const std::string text = nlohmann::json::parse(req.body).at("text");
      res.set_content(nlohmann::json{{"vector", {double(text.size()), 1.0, 0.0}}}.dump(), "application/json");
    });
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_completion_request = nlohmann::json::parse(req.body);
      const std::size_t n = last_completion_request.value("n", 1);
      nlohmann::json choices = nlohmann::json::array();
      // Reverse order on purpose; the client must sort by index.
      for (std::size_t i = n; i-- > 0;) choices.push_back({{"index", i}, {"text", " choice " + std::to_string(i)}});
      res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~FakeServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  template <class Fn>
  void track(Fn&& fn) {
    const int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    fn();
    --in_flight;
  }

  std::atomic<int> in_flight{0}, peak{0};
  nlohmann::json last_completion_request;

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Http, ClassifierContract) {
  FakeServer server;
  HttpClassifier c({server.url()});
  EXPECT_DOUBLE_EQ(c.classify("ab"), 0.75);
  EXPECT_DOUBLE_EQ(c.classify("abc"), 0.25);
  try {
    c.classify("explode");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::backend_unreachable);
  }
  try {
    c.classify("out of range");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::classifier_failed);
  }
}

TEST(Http, EmbedderContract) {
  FakeServer server;
  HttpEmbedder e({server.url()});
  EXPECT_EQ(e.embed("four"), (std::vector<double>{4.0, 1.0, 0.0}));
}

TEST(Http, UnreachableHostIsReported) {
  // Grab a free port, then close it so nothing listens there.
  int port;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  HttpClassifier c({"http://127.0.0.1:" + std::to_string(port), 1, 1, 1});
  try {
    c.classify("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::backend_unreachable);
  }
}

TEST(Http, InFlightRequestsAreBounded) {
  FakeServer server;
  HttpClassifier c({server.url(), 2});
  parallel_for(8, 8, [&](std::size_t) { c.classify("ab"); });
  EXPECT_LE(server.peak.load(), 2);
  EXPECT_GE(server.peak.load(), 1);
}

TEST(Http, GeneratorRequestShapeAndChoiceOrder) {
  FakeServer server;
  auto vocab = std::make_shared<const VocabularyTable>(
      VocabularyTable(std::unordered_map<std::string, TokenId>{{"hello", 0}, {"\xC4\xA0world", 1}}));
  HttpGenerator g({{server.url()}, "tiny-model"}, vocab);
  GenerationConfig cfg;
  cfg.seed = 9;
  const auto out = g.generate("Once upon", cfg, {{1, 4.0}, {0, -6.0}}, 3);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0], " choice 0");
  EXPECT_EQ(out[2], " choice 2");
  const auto& req = server.last_completion_request;
  EXPECT_EQ(req.at("prompt"), "Once upon");
  EXPECT_EQ(req.at("max_tokens"), 32);
  EXPECT_DOUBLE_EQ(req.at("temperature").get<double>(), 0.7);
  EXPECT_DOUBLE_EQ(req.at("top_p").get<double>(), 0.9);
  EXPECT_EQ(req.at("n"), 3);
  EXPECT_EQ(req.at("seed"), 9);
  EXPECT_EQ(req.at("model"), "tiny-model");
  EXPECT_DOUBLE_EQ(req.at("logit_bias").at("1").get<double>(), 4.0);
  EXPECT_DOUBLE_EQ(req.at("logit_bias").at("0").get<double>(), -6.0);

  cfg.do_sample = false;
  g.generate("x", cfg);
  EXPECT_DOUBLE_EQ(server.last_completion_request.at("temperature").get<double>(), 0.0);
  EXPECT_FALSE(server.last_completion_request.contains("logit_bias"));
}

TEST(Http, GeneratorCapabilitiesDegradeGracefully) {
  HttpGenerator g({{"http://127.0.0.1:1"}, ""});
  EXPECT_TRUE(g.capabilities().supports_logit_bias);
  EXPECT_FALSE(g.capabilities().supports_full_distribution);
  EXPECT_FALSE(g.capabilities().supports_sequence_scoring);
  try {
    g.next_token_distribution("x");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability_missing);
  }
  try {
    perplexity("x", "y", g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability_missing);
  }
}

TEST(Http, VocabularyMapperMatchesLeadingSpaceVariants) {
  VocabularyTable t(std::unordered_map<std::string, TokenId>{
      {"word", 0}, {"\xC4\xA0word", 1}, {"\xE2\x96\x81Word", 2}, {" word", 3}, {"words", 4}, {"\xC4\xA0", 5}});
  VocabularyFileMapper m(t);
  auto ids = m.ids_for("word");
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<TokenId>{0, 1, 2, 3}));
  EXPECT_TRUE(m.ids_for("nothing").empty());
}

TEST(Http, VocabularyFileLoads) {
  const auto dir = fresh_dir("vocab");
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "vocab.json", R"({"a": 0, "Ġb": 2})");
  const auto t = VocabularyTable::load((dir / "vocab.json").string());
  EXPECT_EQ(t.size(), 3u);
  EXPECT_EQ(*t.text(2), "\xC4\xA0" "b");
  EXPECT_FALSE(t.text(1).has_value());
}
