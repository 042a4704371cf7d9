#include <gtest/gtest.h>

#include <cstdlib>

#include <json.hpp>

#include "cli_harness.hpp"
#include "test_support.hpp"

using cli_harness::run;
using cli_harness::ScratchDir;
using cli_harness::slurp;
using cli_harness::spit;
using nlohmann::json;

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 64);
  EXPECT_EQ(run({"frobnicate"}).code, 64);
  EXPECT_EQ(run({"rasterize", "--region", "x.json"}).code, 64);
  EXPECT_EQ(run({"eval-rec", "--pred", "x", "--n-bins", "1"}).code, 64);
  EXPECT_EQ(run({"eval-rec", "--pred", "/nonexistent/x.jsonl"}).code, 74);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, IoAndInvalidInput) {
  ScratchDir d("io");
  EXPECT_EQ(run({"eval-pope", "--pred", d / "missing.jsonl"}).code, 74);
  spit(d / "bad.jsonl", "{\"id\": \"a\", \"text\": \"yes\"}\nnot json\n");
  const auto r = run({"eval-pope", "--pred", d / "bad.jsonl"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad.jsonl:2"), std::string::npos) << r.err;
  spit(d / "nogt.jsonl", "{\"id\": \"a\", \"text\": \"yes\"}\n");
  const auto g = run({"eval-pope", "--pred", d / "nogt.jsonl"});
  EXPECT_EQ(g.code, 2);
  EXPECT_NE(g.err.find("(id a)"), std::string::npos) << g.err;
  spit(d / "ok.jsonl", "{\"id\": \"a\", \"text\": \"yes\", \"gt\": {\"answer\": \"yes\"}}\n");
  EXPECT_EQ(run({"eval-pope", "--pred", d / "ok.jsonl", "--n-bins", "1"}).code, 64);
  EXPECT_EQ(run({"gen-fixtures", "--out-dir", d / "fx", "--channels", "0"}).code, 64);
  spit(d / "outside.json", R"({"type": "box", "box": [0, 0, 20, 20], "image": {"width": 10, "height": 10}})");
  EXPECT_EQ(run({"rasterize", "--region", d / "outside.json", "--out", d / "m.json"}).code, 2);
}

TEST(Cli, RasterizeReport) {
  ScratchDir d("rast");
  spit(d / "r.json", R"({"type": "box", "box": [10, 20, 30, 40], "image": {"width": 100, "height": 100}})");
  const auto r = run({"rasterize", "--region", d / "r.json", "--out", d / "m.json", "--name", "a cat"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(r.out);
  EXPECT_EQ(rep["popcount"], 400);
  EXPECT_EQ(rep["bins"], "[100, 200, 300, 400]");
  EXPECT_EQ(rep["encoding"], "a cat [100, 200, 300, 400] <SPE>");
  const json mask = json::parse(slurp(d / "m.json"));
  EXPECT_EQ(mask["type"], "mask");
  EXPECT_EQ(mask["rle"][20], json({10, 20, 70}));

  const auto w = run({"rasterize", "--region", d / "r.json", "--out", d / "m2.json", "--width", "200", "--height", "50"});
  ASSERT_EQ(w.code, 0) << w.err;
  EXPECT_EQ(json::parse(w.out)["image"]["width"], 200);
}

TEST(Cli, TinyFixturesMatchReference) {
  ScratchDir d("tiny");
  const auto r = run({"gen-fixtures", "--out-dir", d / "fx", "--tiny", "--seed", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json expected = json::parse(slurp(d / "fx/expected.json"));
  const ferret::BinaryMask mask = ferret::json::mask_from_json(json::parse(slurp(d / "fx/mask.json")));
  const ferret::FeatureMap map = ferret::load_fmap(d / "fx/map.fmap");
  const ferret::SamplerBundle b = ferret::load_sparams(d / "fx/params.sparams");
  EXPECT_EQ(b.cfg.channels, 3);
  EXPECT_EQ(b.cfg.out_dim, 5);
  const auto ref = test_support::reference_forward(mask, map, b.cfg, b.params, 5);
  const auto feat = expected["feature"].get<std::vector<double>>();
  ASSERT_EQ(feat.size(), ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(feat[i], ref[i], 1e-9);

  const auto s = run({"sample", "--mask", d / "fx/mask.json", "--fmap", d / "fx/map.fmap", "--params",
                      d / "fx/params.sparams", "--seed", "5"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(json::parse(s.out)["feature"], expected["feature"]);
  EXPECT_EQ(json::parse(s.out)["final_points"], 4);

  spit(d / "trunc.fmap", slurp(d / "fx/map.fmap").substr(0, 20));
  EXPECT_EQ(run({"sample", "--mask", d / "fx/mask.json", "--fmap", d / "trunc.fmap", "--params", d / "fx/params.sparams"})
                .code,
            2);
}

TEST(Cli, PipelineIsDeterministic) {
  ScratchDir a("det_a"), b("det_b");
  std::string fa, fb;
  const auto names = cli_harness::pipeline(a, 17, &fa);
  cli_harness::pipeline(b, 17, &fb);
  ASSERT_TRUE(fa.empty()) << fa;
  ASSERT_TRUE(fb.empty()) << fb;
  for (const auto& n : names) {
    const std::string x = slurp(a.path() / n);
    EXPECT_FALSE(x.empty()) << n;
    EXPECT_EQ(x, slurp(b.path() / n)) << n;
  }
  const json rep = json::parse(slurp(a.path() / "eval.json"));
  EXPECT_EQ(rep["correct"], 1);
  EXPECT_EQ(rep["total"], 2);
  EXPECT_EQ(rep["manifest"]["inputs"][0]["file"], "rec.jsonl");

  ScratchDir c("det_c");
  std::string fc;
  cli_harness::pipeline(c, 18, &fc);
  EXPECT_NE(slurp(a.path() / "feature.json"), slurp(c.path() / "feature.json"));
}

TEST(Cli, EvalCommands) {
  ScratchDir d("eval");
  spit(d / "pred.jsonl",
       "{\"id\": \"1\", \"text\": \"Yes\"}\n{\"id\": \"2\", \"text\": \"No, there is not.\"}\n"
       "{\"id\": \"3\", \"text\": \"hmm\"}\n");
  spit(d / "gt.jsonl",
       "{\"id\": \"2\", \"task\": \"pope\", \"gt\": {\"answer\": \"yes\"}}\n"
       "{\"id\": \"1\", \"task\": \"pope\", \"gt\": {\"answer\": \"yes\"}}\n"
       "{\"id\": \"3\", \"task\": \"pope\", \"gt\": {\"answer\": \"no\"}}\n");
  const auto p = run({"eval-pope", "--pred", d / "pred.jsonl", "--gt", d / "gt.jsonl"});
  ASSERT_EQ(p.code, 0) << p.err;
  const json pope = json::parse(p.out);
  EXPECT_EQ(pope["tp"], 1);
  EXPECT_EQ(pope["fn"], 1);
  EXPECT_EQ(pope["tn"], 1);
  EXPECT_EQ(pope["unparsed"], 1);

  spit(d / "cap.jsonl",
       R"({"id": "c", "task": "grounded_caption", "text": "A dog [100, 100, 199, 199] runs.", "gt": {"image": {"width": 1000, "height": 1000}, "objects": [{"word": "dog", "box": [100.5, 100.5, 199.5, 199.5]}]}})"
       "\n");
  const auto c = run({"eval-groundcap", "--pred", d / "cap.jsonl", "--captions", d / "plain.jsonl"});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_EQ(json::parse(c.out)["f1_all"], 1.0);
  EXPECT_EQ(slurp(d / "plain.jsonl"), "{\"id\":\"c\",\"caption\":\"A dog runs.\"}\n");

  spit(d / "refer.jsonl",
       R"({"id": "r", "task": "refer_cls", "text": "It is a cat, not a dog.", "gt": {"class": "cat", "negative": "dog"}})"
       "\n");
  const auto f = run({"eval-refer", "--pred", d / "refer.jsonl"});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_EQ(json::parse(f.out)["accuracy"], 1.0);

  spit(d / "bench.jsonl",
       "{\"id\": \"1\", \"score\": 7, \"gt\": {\"score\": 10}}\n{\"id\": \"2\", \"score\": 8, \"gt\": {\"score\": 10}}\n");
  const auto b = run({"bench-ratio", "--pred", d / "bench.jsonl"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_DOUBLE_EQ(json::parse(b.out)["ratio"].get<double>(), 75.0);

  spit(d / "wrongtask.jsonl", "{\"id\": \"1\", \"task\": \"rec\", \"text\": \"yes\", \"gt\": {\"answer\": \"yes\"}}\n");
  EXPECT_EQ(run({"eval-pope", "--pred", d / "wrongtask.jsonl"}).code, 2);
  spit(d / "missing_pred.jsonl", "{\"id\": \"9\", \"text\": \"yes\"}\n");
  EXPECT_EQ(run({"eval-pope", "--pred", d / "missing_pred.jsonl", "--gt", d / "gt.jsonl"}).code, 2);
}

TEST(Cli, GritCompile) {
  ScratchDir d("grit");
  const std::string scenes = FERRET_FIXTURES_DIR "/dining_scene.jsonl";
  const auto r = run({"grit-compile", "--scenes", scenes, "--out", d / "out.jsonl", "--seed", "3", "--manifest"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(r.out);
  for (const auto& [task, n] : rep["per_task"].items()) EXPECT_GE(n.get<int>(), 1) << task;
  EXPECT_EQ(rep["manifest"]["inputs"][0]["file"], "dining_scene.jsonl");
  const std::string first = slurp(d / "out.jsonl");
  ASSERT_EQ(run({"grit-compile", "--scenes", scenes, "--out", d / "again.jsonl", "--seed", "3"}).code, 0);
  EXPECT_EQ(first, slurp(d / "again.jsonl"));

  const auto t = run({"grit-compile", "--scenes", scenes, "--out", d / "det.jsonl", "--tasks", "detection,rec"});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(json::parse(t.out)["per_task"]["refer_object"], 0);
  EXPECT_EQ(run({"grit-compile", "--scenes", scenes, "--out", d / "x.jsonl", "--tasks", "nope"}).code, 64);
  EXPECT_EQ(run({"grit-compile", "--scenes", scenes, "--out", d / "x.jsonl", "--coords", "polar"}).code, 64);

  const auto v = run({"grit-compile", "--scenes", scenes, "--out", d / "v.jsonl", "--vocab", FERRET_FIXTURES_DIR "/vocab.txt",
                      "--tasks", "hallucination"});
  ASSERT_EQ(v.code, 0) << v.err;
  const json vr = json::parse(v.out);
  EXPECT_EQ(vr["positive"], vr["negative"]);
  EXPECT_GE(vr["negative"].get<int>(), 1);

  spit(d / "exclude.txt", "dining_room\n");
  const auto e = run({"grit-compile", "--scenes", scenes, "--out", d / "e.jsonl", "--exclude-ids", d / "exclude.txt"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(json::parse(e.out)["excluded"], 1);
  EXPECT_EQ(json::parse(e.out)["samples"], 0);

  spit(d / "broken.jsonl", R"({"image_id": "b", "width": 10, "height": 10, "relationships": [{"object": 0, "predicate": "on", "subject": 1}]})"
                           "\n");
  const auto b = run({"grit-compile", "--scenes", d / "broken.jsonl", "--out", d / "b.jsonl"});
  EXPECT_EQ(b.code, 2);
  EXPECT_NE(b.err.find("image_id b"), std::string::npos) << b.err;
}

TEST(Cli, GritNegatives) {
  ScratchDir d("neg");
  const std::string scenes = FERRET_FIXTURES_DIR "/dining_scene.jsonl";
  const auto dry = run({"grit-negatives", "--scenes", scenes, "--dry-run", "--prompts-out", d / "prompts.jsonl"});
  ASSERT_EQ(dry.code, 0) << dry.err;
  EXPECT_EQ(json::parse(dry.out)["prompts"], 1);
  EXPECT_NE(slurp(d / "prompts.jsonl").find("misleading entity"), std::string::npos);
  EXPECT_EQ(run({"grit-negatives", "--scenes", scenes}).code, 64);

  ::setenv("FERRET_LLM_ENDPOINT", "canned:" FERRET_FIXTURES_DIR "/llm_canned.jsonl", 1);
  const auto r = run({"grit-negatives", "--scenes", scenes, "--out", d / "neg.jsonl"});
  ASSERT_EQ(r.code, 0) << r.err;
  const json rep = json::parse(r.out);
  EXPECT_EQ(rep["positive"], 3);
  EXPECT_EQ(rep["negative"], 3);
  ::setenv("FERRET_LLM_ENDPOINT", "canned:/nonexistent/file.jsonl", 1);
  EXPECT_EQ(run({"grit-negatives", "--scenes", scenes, "--out", d / "neg2.jsonl"}).code, 74);
  ::setenv("FERRET_LLM_ENDPOINT", "http://localhost:1", 1);
  EXPECT_EQ(run({"grit-negatives", "--scenes", scenes, "--out", d / "neg3.jsonl"}).code, 64);
  ::unsetenv("FERRET_LLM_ENDPOINT");
}
