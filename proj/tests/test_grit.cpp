#include <gtest/gtest.h>

#include <cstdlib>

#include "ferret/grit.hpp"
#include "ferret/grit_prompts.hpp"
#include "grit_checks.hpp"

using namespace ferret;
using namespace ferret::grit;

TEST(Templates, ThreePerTaskAndFill) {
  for (Task t : kAllTasks) EXPECT_EQ(templates(t).size(), 3u) << to_string(t);
  EXPECT_EQ(fill_template_at(Task::kReferObject, 0, {{"location", "[120, 300, 350, 512]"}}),
            "What is the class of the object [120, 300, 350, 512] within the image?");
  EXPECT_EQ(fill_template_at(Task::kHallucination, 0, {{"object", "zebra"}}), "Is there a zebra in the image?");
  EXPECT_EQ(fill_template(Task::kRec, {{"object", "x"}}, 5), fill_template(Task::kRec, {{"object", "x"}}, 5));
  try {
    fill_template_at(Task::kReferRelation, 1, {{"object1", "a"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingSlot);
  }
  EXPECT_THROW(parse_task("captioning"), Error);
  for (Task t : kAllTasks) EXPECT_EQ(parse_task(to_string(t)), t);
}

TEST(Templates, SeedSpreadsAcrossTemplates) {
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 64; ++s) seen.insert(fill_template(Task::kDetection, {{"class", "cat"}}, s));
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Convert, ChairResponseBins) {
  const SceneRecord scene = grit_checks::dining_scene();
  const auto rec = convert_record(scene, Task::kRec, {}, 1);
  bool found = false;
  for (const auto& s : rec) found = found || s.response.find("[596, 637, 698, 997]") != std::string::npos;
  // The chair occurs three times so it is not a REC query; the detection
  // response still lists its box.
  const auto det = convert_record(scene, Task::kDetection, {}, 1);
  ASSERT_EQ(det.size(), 1u);
  EXPECT_NE(det[0].response.find("chair [596, 637, 698, 997]"), std::string::npos) << det[0].response;
  EXPECT_FALSE(found);
  const auto obj = convert_record(scene, Task::kReferObject, {}, 1);
  EXPECT_NE(obj[0].prompt.find("[596, 637, 698, 997] <SPE>"), std::string::npos) << obj[0].prompt;
  EXPECT_EQ(obj[0].response, "chair");
}

TEST(Convert, DiningSceneCoversEveryTask) {
  const SceneRecord scene = grit_checks::dining_scene();
  const auto samples = convert_record(scene, kAllTasks, {}, 3);
  const auto check = grit_checks::check_compilation(samples);
  for (const auto& p : check.problems) ADD_FAILURE() << p;
  std::size_t sum = 0;
  for (Task t : kAllTasks) {
    const std::size_t n = convert_record(scene, t, {}, 3).size();
    EXPECT_GE(check.per_task.count(t) ? check.per_task.at(t) : 0, 1u) << to_string(t);
    sum += n;
  }
  EXPECT_EQ(sum, samples.size());
  for (const auto& s : samples) {
    if (s.task != Task::kHallucination) {
      EXPECT_EQ(s.polarity, Polarity::kPositive);
    }
  }
}

TEST(Convert, ResponseFormats) {
  const SceneRecord scene = grit_checks::dining_scene();
  const auto rel = convert_record(scene, Task::kReferRelation, {}, 0);
  ASSERT_EQ(rel.size(), 1u);
  EXPECT_EQ(rel[0].response, "frame with photo");
  const auto rec = convert_record(scene, Task::kRec, {}, 0);
  for (const auto& s : rec) {
    EXPECT_EQ(s.response.back(), '.');
    EXPECT_EQ(parse_grounded_text(s.response).spans.size(), 1u) << s.response;
  }
  const auto cap = convert_record(scene, Task::kGroundedCaption, {}, 0);
  ASSERT_EQ(cap.size(), 1u);
  const GroundedText g = parse_grounded_text(cap[0].response);
  ASSERT_EQ(g.spans.size(), 3u) << cap[0].response;
  EXPECT_EQ(g.spans[0].phrase, "White chairs");
  EXPECT_EQ(g.spans[0].boxes.size(), 3u);
  EXPECT_EQ(g.spans[1].phrase, "a polished wood dining table");
  EXPECT_EQ(g.plain_text(), scene.captions[0]);

  CompileOptions plain;
  plain.include_spe = false;
  EXPECT_EQ(convert_record(scene, Task::kReferRegion, plain, 0)[0].prompt.find("<SPE>"), std::string::npos);
  CompileOptions rel_style;
  rel_style.coords = CoordStyle::kRelative;
  EXPECT_NE(convert_record(scene, Task::kReferObject, rel_style, 0)[0].prompt.find("[0.596, 0.637, 0.698, 0.997]"),
            std::string::npos);
}

TEST(Convert, EmptyAndMissingInputs) {
  SceneRecord s{"x", {10, 10}, {{"cat", {0.1, 0.1, 0.5, 0.5}, std::nullopt}}, {}, {}, {"A cat."}, {}};
  EXPECT_TRUE(convert_record(s, Task::kReferRelation, {}, 0).empty());
  try {
    convert_record(s, Task::kGroundedCaption, {}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingAlignment);
  }
  s.relationships.push_back({0, "on", 3});
  EXPECT_THROW(convert_record(s, Task::kReferObject, {}, 0), Error);
}

TEST(Convert, MaskLocationUsesMaskExtent) {
  SceneRecord s{"m", {100, 100}, {}, {}, {}, {}, {}};
  BinaryMask m(100, 100);
  for (int y = 20; y < 40; ++y)
    for (int x = 10; x < 30; ++x) m.set(x, y);
  s.objects.push_back({"blob", {0.0, 0.0, 1.0, 1.0}, m});
  const auto out = convert_record(s, Task::kReferObject, {}, 0);
  EXPECT_NE(out[0].prompt.find("[100, 200, 300, 400] <SPE>"), std::string::npos) << out[0].prompt;
}

TEST(Negatives, ImageConditioned) {
  SceneRecord s{"c", {10, 10}, {{"chair", {0.1, 0.1, 0.5, 0.5}, std::nullopt}}, {}, {}, {}, {}};
  const std::vector<std::string> vocab{"chair", "zebra"};
  const InstructionSample n = mine_negative_image_conditioned(s, vocab, 4);
  EXPECT_NE(n.prompt.find("zebra"), std::string::npos);
  EXPECT_EQ(n.polarity, Polarity::kNegative);
  EXPECT_EQ(n.task, Task::kHallucination);
  EXPECT_NE(n.response.find("zebra"), std::string::npos);
  EXPECT_EQ(n, mine_negative_image_conditioned(s, vocab, 4));
  try {
    mine_negative_image_conditioned(s, std::vector<std::string>{"Chair"}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kExhaustedVocabulary);
  }
}

TEST(Negatives, RefusalsFromFixedSet) {
  std::set<std::string> seen;
  for (std::uint64_t s = 0; s < 64; ++s) seen.insert(refusal("kite", s));
  EXPECT_EQ(seen.size(), 3u);
  EXPECT_TRUE(seen.count("There is no kite in the image."));
}

TEST(Negatives, SemanticPairsThroughCannedClient) {
  const SceneRecord scene = grit_checks::dining_scene();
  const std::vector<std::string> entities{"chairs", "table", "sofa"};
  CannedLlmClient client({"Sure: [\"stools\", \"desk\", \"bed\"]"});
  const auto samples = mine_negative_semantic(scene, entities, client, {}, 9);
  ASSERT_EQ(samples.size(), 6u);
  EXPECT_EQ(samples[1].polarity, Polarity::kNegative);
  EXPECT_NE(samples[1].prompt.find("stools"), std::string::npos);
  EXPECT_EQ(samples[3].mining, Mining::kSemanticConditioned);
  ASSERT_EQ(client.requests().size(), 1u);
  EXPECT_NE(client.requests()[0].find("exactly 3 misleading entity names"), std::string::npos);

  CannedLlmClient short_reply({"[\"stools\"]"});
  try {
    mine_negative_semantic(scene, entities, short_reply, {}, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

TEST(Prompts, SemanticNegativePromptIsStable) {
  const std::vector<std::string> e{"man", "blue", "two"};
  const ChatPrompt a = build_semantic_negative_prompt(e);
  EXPECT_EQ(a.render(), build_semantic_negative_prompt(e).render());
  EXPECT_NE(a.messages[0].content.find("most misleading entity name"), std::string::npos);
  EXPECT_NE(a.messages[1].content.find("[\"man\",\"blue\",\"two\"]"), std::string::npos);
  const std::vector<std::string> one{"dog"};
  EXPECT_NE(build_semantic_negative_prompt(one).messages[1].content.find("exactly 1 misleading entity name."),
            std::string::npos);
  EXPECT_THROW(build_semantic_negative_prompt(std::vector<std::string>{}), Error);
}

TEST(Prompts, ParseEntityList) {
  EXPECT_EQ(parse_entity_list("[\"woman\", \"yellow\"]"), (std::vector<std::string>{"woman", "yellow"}));
  EXPECT_EQ(parse_entity_list("Output: ['woman', yellow, three]"),
            (std::vector<std::string>{"woman", "yellow", "three"}));
  EXPECT_TRUE(parse_entity_list("[]").empty());
  EXPECT_THROW(parse_entity_list("woman"), Error);
}

TEST(Prompts, SceneContextLayout) {
  const std::string ctx = render_scene_context(grit_checks::dining_scene());
  EXPECT_NE(ctx.find("Object 0: chair at [0.596, 0.637, 0.698, 0.997].\n"), std::string::npos);
  EXPECT_NE(ctx.find("Object 11 : frame → with → Object 9 : photo\n"), std::string::npos);
  EXPECT_NE(ctx.find("Region Description at [0.560, 0.466, 0.600, 0.529] : a white picture frame"),
            std::string::npos);
  EXPECT_LT(ctx.find("Objects"), ctx.find("Relationships"));
  EXPECT_LT(ctx.find("Region Descriptions"), ctx.find("Global Caption"));
  const ChatPrompt p = build_dialogue_prompt(DialogueKind::kConversation, grit_checks::dining_scene(),
                                             std::vector<FewShotExample>{{"ctx", "resp"}});
  ASSERT_EQ(p.messages.size(), 4u);
  EXPECT_EQ(p.messages[1].role, "user");
  EXPECT_EQ(p.messages[2].role, "assistant");
  EXPECT_EQ(build_refine_prompt(grit_checks::dining_scene(), "Q: a\nA: b").messages.size(), 2u);
}

TEST(Clients, RetryAndEnvConfig) {
  class Flaky : public LlmClient {
   public:
    int calls = 0;
    std::string complete(const ChatPrompt&) override {
      if (++calls < 3) throw Error(ErrorCode::kIo, "down");
      return "ok";
    }
  };
  auto flaky = std::make_unique<Flaky>();
  Flaky* raw = flaky.get();
  RetryingLlmClient retrying(std::move(flaky), 2);
  EXPECT_EQ(retrying.complete({}), "ok");
  EXPECT_EQ(raw->calls, 3);

  RetryingLlmClient strict(std::make_unique<Flaky>(), 0);
  EXPECT_THROW(strict.complete({}), Error);

  ::setenv("FERRET_LLM_RETRIES", "-3", 1);
  EXPECT_THROW(LlmClientConfig::from_env(), Error);
  ::setenv("FERRET_LLM_RETRIES", "5", 1);
  EXPECT_EQ(LlmClientConfig::from_env().retries, 5);
  ::unsetenv("FERRET_LLM_RETRIES");
  EXPECT_THROW(make_llm_client({"https://example.invalid", 1, 10}), Error);
  auto canned = make_llm_client({"canned:" FERRET_FIXTURES_DIR "/llm_canned.jsonl", 0, 10});
  EXPECT_EQ(canned->complete({}), "[\"stools\", \"desk\", \"bed\"]");
}

TEST(Balance, SkewedCorpus) {
  const auto corpus = grit_checks::skewed_corpus(100, 40);
  const auto out = balance(corpus, 7);
  std::size_t pos = 0, neg = 0;
  for (const auto& s : out) (s.polarity == Polarity::kPositive ? pos : neg)++;
  EXPECT_EQ(pos, 40u);
  EXPECT_EQ(neg, 40u);
  // Output is an order-preserving subset of the input.
  std::size_t j = 0;
  for (const auto& s : corpus) {
    if (j < out.size() && out[j] == s) ++j;
  }
  EXPECT_EQ(j, out.size());
  EXPECT_EQ(out, balance(corpus, 7));
  EXPECT_EQ(balance(grit_checks::skewed_corpus(10, 10)).size(), 20u);
  EXPECT_TRUE(balance(std::vector<InstructionSample>{}).empty());
}

TEST(Balance, FamiliesAreIndependent) {
  auto corpus = grit_checks::skewed_corpus(5, 2);
  auto semantic = grit_checks::skewed_corpus(3, 6);
  for (auto& s : semantic) s.mining = Mining::kSemanticConditioned;
  corpus.insert(corpus.end(), semantic.begin(), semantic.end());
  corpus.push_back({"p", "r", Task::kRec, Polarity::kPositive, "z", Mining::kNone});
  const auto out = balance(corpus, 1);
  std::map<std::pair<Mining, Polarity>, int> counts;
  for (const auto& s : out) ++counts[{s.mining, s.polarity}];
  EXPECT_EQ((counts[{Mining::kImageConditioned, Polarity::kPositive}]), 2);
  EXPECT_EQ((counts[{Mining::kImageConditioned, Polarity::kNegative}]), 2);
  EXPECT_EQ((counts[{Mining::kSemanticConditioned, Polarity::kPositive}]), 3);
  EXPECT_EQ((counts[{Mining::kSemanticConditioned, Polarity::kNegative}]), 3);
  EXPECT_EQ((counts[{Mining::kNone, Polarity::kPositive}]), 1);
}

TEST(PseudoGrounding, InsertsAfterPhrases) {
  const std::string text = "A dog chases a cat.";
  const ImageSize img{1000, 1000};
  const std::vector<Detection> one{{"A dog", 0, 5, Box{100, 100, 200, 200}}};
  const GroundedText g = append_pseudo_grounding(text, one, img);
  EXPECT_EQ(g.raw, "A dog [100, 100, 200, 200] chases a cat.");
  ASSERT_EQ(g.spans.size(), 1u);
  EXPECT_EQ(g.spans[0].phrase, "A dog");

  EXPECT_EQ(append_pseudo_grounding(text, std::vector<Detection>{}, img).raw, text);

  std::vector<Detection> two{{"A dog", 0, 5, Box{100, 100, 200, 200}}, {"a cat", 13, 18, Box{300, 300, 400, 400}}};
  const std::string forward = append_pseudo_grounding(text, two, img).raw;
  std::swap(two[0], two[1]);
  EXPECT_EQ(append_pseudo_grounding(text, two, img).raw, forward);
  EXPECT_EQ(forward, "A dog [100, 100, 200, 200] chases a cat [300, 300, 400, 400].");

  const std::vector<Detection> overlap{{"A dog", 0, 5, Box{1, 1, 2, 2}}, {"dog chases", 2, 12, Box{1, 1, 2, 2}}};
  try {
    append_pseudo_grounding(text, overlap, img);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOverlappingRanges);
  }
}
