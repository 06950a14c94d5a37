// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "support.hpp"

using namespace datg;
using namespace datg::testing;

TEST(Baselines, SpecDefaults) {
  BaselineSpec s;
  EXPECT_EQ(s.fudge_top_k, 100u);
  EXPECT_EQ(s.fudge_alpha, 0.5);
  EXPECT_EQ(s.preadd_alpha, 1.0);
  s.kind = BaselineKind::injection;
  EXPECT_THROW(s.validate(), Error);
  s.kind = BaselineKind::preadd;
  EXPECT_THROW(s.validate(), Error);
}

TEST(Baselines, ContinuationIsDeterministicAndBounded) {
  GenerationConfig g;
  g.seed = 12;
  const auto a = continuation("you are", g, seed_model());
  EXPECT_EQ(a, continuation("you are", g, seed_model()));
  EXPECT_LE(tokenize_for_graph(a).size(), 32u);
}

TEST(Baselines, InjectionPrependsTemplateVerbatim) {
  // A recording backend shows exactly what reaches the model.
  class Recorder final : public Generator {
   public:
    GeneratorCapabilities capabilities() const override { return {}; }
    std::vector<std::string> generate(std::string_view prompt, const GenerationConfig&, const LogitBias& = {},
                                      std::size_t = 1) const override {
      last = std::string(prompt);
      return {"tail"};
    }
    mutable std::string last;
  } rec;
  BaselineSpec s;
  s.injection_prompt = default_templates(Task::toxicity_mitigation).injection_prompt;
  EXPECT_EQ(injection("Hello there", s, GenerationConfig{}, rec), "tail");
  EXPECT_EQ(rec.last,
            "The following text doesn't perpetuate negative stereotypes, isn't threatening or sexually explicit, and "
            "does not contain profane language. Hello there");
  s.injection_prompt.clear();
  EXPECT_THROW(injection("Hello", s, GenerationConfig{}, rec), Error);
}

TEST(Baselines, InjectionDeterministic) {
  BaselineSpec s;
  s.injection_prompt = default_templates(Task::sentiment_to_positive).injection_prompt;
  GenerationConfig g;
  g.seed = 2;
  EXPECT_EQ(injection("they", s, g, seed_model()), injection("they", s, g, seed_model()));
}

TEST(Baselines, ContinuationAndInjectionNeverClassify) {
  const auto lex = toxicity_lexicon();
  CountingClassifier counting(lex);
  BaselineSpec s;
  s.injection_prompt = "Be nice.";
  GenerationConfig g;
  continuation("you are", g, seed_model());
  injection("you are", s, g, seed_model());
  EXPECT_EQ(counting.calls.load(), 0);
  // FUDGE does consult it.
  s.fudge_top_k = 5;
  g.max_new_tokens = 3;
  fudge_generate("you are", s, g, seed_model(), counting);
  EXPECT_GT(counting.calls.load(), 0);
}

TEST(Fudge, ConcentratesOnHighScoringCandidate) {
  const double eps = kFudgeScoreFloor;
  const std::vector<double> z(3, 0.0);
  const auto adjusted = fudge_adjusted_logits(z, fudge_candidates(z, 100), std::vector<double>{1.0, 0.0, 1e-9}, 1.0);
  const auto p = softmax(adjusted);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + 2.0 * eps), 1e-12);
  EXPECT_NEAR(p[1], eps / (1.0 + 2.0 * eps), 1e-12);
}

TEST(Fudge, ZeroAlphaIsRestrictedRenormalization) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> z(20);
    for (double& x : z) x = std::normal_distribution<double>(0, 2)(rng);
    const std::size_t k = 1 + rng() % 20;
    const auto cand = fudge_candidates(z, k);
    std::vector<double> scores(cand.size());
    for (double& s : scores) s = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto p = softmax(fudge_adjusted_logits(z, cand, scores, 0.0));
    const auto full = manual_softmax(z);
    double mass = 0.0;
    for (TokenId c : cand) mass += full[c];
    std::set<TokenId> in(cand.begin(), cand.end());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double expect = in.count(static_cast<TokenId>(i)) ? full[i] / mass : 0.0;
      EXPECT_NEAR(p[i], expect, 1e-9);
    }
  }
}

TEST(Fudge, CandidateSetClampsToVocabulary) {
  const std::vector<double> z{0.5, 2.0, 1.0};
  EXPECT_EQ(fudge_candidates(z, 100), (std::vector<TokenId>{1, 2, 0}));
  EXPECT_EQ(fudge_candidates(z, 1), (std::vector<TokenId>{1}));
}

TEST(Fudge, ClassifierSeesContextPlusCandidate) {
  // Vocabulary of 3 with uniform logits; the classifier loves "t2".
  FunctionGenerator g(3, [](std::string_view) { return std::vector<double>(3, 0.0); });
  TableClassifier judge({{"start t2", 1.0}, {"start t2 t2", 1.0}}, 1e-9);
  BaselineSpec s;
  s.fudge_alpha = 1.0;
  GenerationConfig cfg;
  cfg.max_new_tokens = 2;
  cfg.seed = 5;
  EXPECT_EQ(fudge_generate("start", s, cfg, g, judge), "t2 t2");
}

TEST(Fudge, RequiresFullDistributions) {
  HttpGenerator http({{"http://127.0.0.1:1"}, ""});
  const auto lex = toxicity_lexicon();
  try {
    fudge_generate("p", BaselineSpec{}, GenerationConfig{}, http, lex);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability_missing);
  }
}

TEST(Preadd, ContrastArithmetic) {
  const auto z = preadd_contrast_logits(std::vector<double>{1, 0}, std::vector<double>{2, 0}, 1.0);
  const auto p = softmax(z);
  EXPECT_NEAR(p[0], 0.5, 1e-12);
  EXPECT_NEAR(p[1], 0.5, 1e-12);
}

TEST(Preadd, ZeroAlphaEqualsContinuation) {
  const auto& m = seed_model();
  BaselineSpec s;
  s.preadd_prefix = default_templates(Task::toxicity_mitigation).preadd_prefix;
  s.preadd_alpha = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GenerationConfig g;
    g.seed = seed;
    EXPECT_EQ(preadd_generate("you are", s, g, m), continuation("you are", g, m));
  }
}

TEST(Preadd, NullContrastEqualsContinuationForAnyAlpha) {
  // The prefix contains no in-vocabulary word, so z_pre == z_base at every step.
  const auto& m = seed_model();
  BaselineSpec s;
  s.preadd_prefix = "zzz qqq";
  s.preadd_alpha = 3.0;
  GenerationConfig g;
  g.seed = 8;
  EXPECT_EQ(preadd_generate("they", s, g, m), continuation("they", g, m));
}

TEST(Preadd, PrefixIsPrependedToContext) {
  std::vector<std::string> seen;
  std::mutex mu;
  FunctionGenerator g(2, [&](std::string_view ctx) {
    std::lock_guard lock(mu);
    seen.emplace_back(ctx);
    return std::vector<double>{0.0, 0.0};
  });
  BaselineSpec s;
  s.preadd_prefix = "PRE";
  GenerationConfig cfg;
  cfg.max_new_tokens = 1;
  preadd_generate("go", s, cfg, g);
  EXPECT_EQ(seen, (std::vector<std::string>{"go", "PRE go"}));
}

TEST(Preadd, RequiresFullDistributionsAndPrefix) {
  HttpGenerator http({{"http://127.0.0.1:1"}, ""});
  BaselineSpec s;
  s.preadd_prefix = "x";
  try {
    preadd_generate("p", s, GenerationConfig{}, http);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::capability_missing);
  }
  s.preadd_prefix.clear();
  EXPECT_THROW(preadd_generate("p", s, GenerationConfig{}, seed_model()), Error);
}
