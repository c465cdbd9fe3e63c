#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "corpuskit/pipeline.hpp"
#include "support/bangla_sample.hpp"
#include "support/temp_dir.hpp"

using namespace corpuskit;
using testing_support::slurp;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

Document doc(std::string id, std::string text) {
  Document d;
  d.id = std::move(id);
  d.source = "web";
  d.text = std::move(text);
  return d;
}

const std::string kLong = "এক দুই তিন চার পাঁচ ছয় সাত আট নয় দশ এগারো বারো।";

std::vector<Document> three_docs() {
  return {doc("a", kLong), doc("b", kLong), doc("c", "ছোট।")};
}

// Every regular file under dir, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
  return out;
}

void write_bangla_workspace(const TempDir& dir, std::size_t bytes) {
  write_corpus(dir / "corpus.jsonl", sample::BanglaGenerator(8).corpus(bytes));
  dir.write("filter.toml", "[thresholds]\nword_count = { min = 20 }\nunique_word_fraction = { min = 0.3 }\n");
  dir.write("lm.toml", "retain = 0.8\norder = 3\n");
  dir.write("train.toml", "vocab_size = 600\n");
  dir.write("base.tok", "");
  dir.write("merge.toml", "base = \"base.tok\"\n");
  dir.write("plan.toml", R"(seed = 7
threads = 2
input = "corpus.jsonl"
workdir = "out"

[[stage]]
kind = "filter"
config = "filter.toml"

[[stage]]
kind = "dedup"

[[stage]]
kind = "lm-filter"
config = "lm.toml"

[[stage]]
kind = "tok-train"
config = "train.toml"

[[stage]]
kind = "tok-merge"
config = "merge.toml"

[[stage]]
kind = "tok-eval"
)");
}

}  // namespace

TEST(Plan, ParsesStagesAndResolvesPaths) {
  TempDir dir;
  dir.write("f.toml", "");
  const auto plan = PipelinePlan::from_toml_string(R"(
seed = 3
threads = 2
input = "in.jsonl"
[[stage]]
kind = "filter"
config = "f.toml"
[[stage]]
kind = "dedup"
output = "deduped.jsonl"
)",
                                                   dir.path());
  EXPECT_EQ(plan.seed, 3u);
  EXPECT_EQ(plan.threads, 2u);
  ASSERT_EQ(plan.stages.size(), 2u);
  EXPECT_EQ(plan.stages[0].kind, StageKind::filter);
  EXPECT_EQ(plan.stages[1].kind, StageKind::dedup);
  EXPECT_EQ(plan.resolve(*plan.stages[1].output), dir.path() / "deduped.jsonl");
}

TEST(Plan, RejectsInvalidPlans) {
  TempDir dir;
  EXPECT_THROW(PipelinePlan::from_toml_string("[[stage]]\nkind = \"filter\"\nconfig = \"x\"", dir.path()), ConfigError);
  EXPECT_THROW(PipelinePlan::from_toml_string("input = \"a\"\n[[stage]]\nkind = \"filter\"", dir.path()), ConfigError);
  EXPECT_THROW(PipelinePlan::from_toml_string("input = \"a\"\n[[stage]]\nkind = \"sort\"", dir.path()), ConfigError);
  EXPECT_THROW(PipelinePlan::from_toml_string("input = \"a\"\n[[stage]]\nconfig = \"x\"", dir.path()), ConfigError);
  EXPECT_THROW(PipelinePlan::from_toml_string("seed = -1", dir.path()), ConfigError);
  EXPECT_THROW(PipelinePlan::from_toml_string("input = \"a\"\nresources = \"nowhere\"\n[[stage]]\nkind = \"dedup\"",
                                              dir.path()),
               ResourceError);
  EXPECT_THROW(PipelinePlan::from_toml_file(dir / "missing.toml"), ConfigError);
}

TEST(Run, EmptyPlanWritesNothing) {
  TempDir dir;
  const auto plan = PipelinePlan::from_toml_string("input = \"none.jsonl\"\n", dir.path());
  EXPECT_TRUE(run(plan).stages.empty());
  EXPECT_TRUE(fs::is_empty(dir.path()));
}

TEST(Run, FilterThenDedupComposes) {
  TempDir dir;
  write_corpus(dir / "in.jsonl", three_docs());
  dir.write("f.toml", "[thresholds]\nword_count = { min = 3 }\n");
  const auto plan = PipelinePlan::from_toml_string(
      "input = \"in.jsonl\"\n[[stage]]\nkind = \"filter\"\nconfig = \"f.toml\"\n[[stage]]\nkind = \"dedup\"\n", dir.path());
  const auto result = run(plan);
  ASSERT_EQ(result.stages.size(), 2u);
  EXPECT_EQ(result.stages[0].output, dir / "out" / "00-filter.jsonl");
  EXPECT_EQ(result.stages[1].output, dir / "out" / "01-dedup.jsonl");
  EXPECT_TRUE(fs::exists(dir / "out" / "00-filter.jsonl.manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "01-dedup.jsonl.manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "out" / "01-dedup.jsonl.clusters.jsonl"));

  const auto filtered = read_corpus(result.stages[0].output);
  ASSERT_EQ(filtered.size(), 2u);
  const auto final_docs = read_corpus(result.stages[1].output);
  ASSERT_EQ(final_docs.size(), 1u);
  EXPECT_EQ(final_docs[0].id, "a");

  const auto& m0 = result.stages[0].manifest;
  EXPECT_EQ(m0["kind"], "filter");
  EXPECT_EQ(m0["counts"]["input"], 3);
  EXPECT_EQ(m0["counts"]["output"], 2);
  EXPECT_EQ(m0["inputs"][0]["path"], "in.jsonl");
  EXPECT_EQ(m0["inputs"][0]["sha256"], hash::sha256_file(dir / "in.jsonl"));
  EXPECT_EQ(m0["output"]["sha256"], hash::sha256_file(result.stages[0].output));
  const auto& m1 = result.stages[1].manifest;
  EXPECT_EQ(m1["inputs"][0]["path"], "out/00-filter.jsonl");
  EXPECT_EQ(m1["counts"]["duplicates"], 1);
  EXPECT_TRUE(m1["config"].is_null());
  EXPECT_EQ(nlohmann::json::parse(slurp(result.stages[1].manifest_path)), nlohmann::json(m1));

  // The same stages run through the library directly give the same corpus.
  std::istringstream in(slurp(dir / "in.jsonl"));
  CorpusReader reader(in);
  std::ostringstream passed;
  CorpusWriter pw(passed);
  run_pipeline(reader, FilterConfig::from_toml_file(dir / "f.toml"), Resources{}, pw);
  std::istringstream mid(passed.str());
  CorpusReader r2(mid);
  DedupParams p;
  p.seed = plan.seed;
  const auto clusters = find_clusters(r2, p);
  std::istringstream mid2(passed.str());
  CorpusReader r3(mid2);
  std::ostringstream deduped;
  CorpusWriter dw(deduped);
  deduplicate(r3, clusters, dw);
  EXPECT_EQ(slurp(result.stages[1].output), deduped.str());
}

TEST(Run, FailingStageLeavesNoPartialOutput) {
  TempDir dir;
  write_corpus(dir / "in.jsonl", three_docs());
  dir.write("lm.toml", "order = 3\n");
  const auto plan = PipelinePlan::from_toml_string(
      "input = \"in.jsonl\"\n[[stage]]\nkind = \"dedup\"\n[[stage]]\nkind = \"lm-filter\"\nconfig = \"lm.toml\"\n",
      dir.path());
  try {
    run(plan);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.kind(), "StageError");
    EXPECT_EQ(e.index(), 1u);
    EXPECT_EQ(e.cause_kind(), "ConfigError");
  }
  EXPECT_TRUE(fs::exists(dir / "out" / "00-dedup.jsonl"));
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    const auto name = e.path().filename().string();
    EXPECT_FALSE(name.starts_with("01-")) << name;
    EXPECT_FALSE(name.ends_with(".partial")) << name;
  }
}

TEST(Run, MalformedInputSurfacesAsStageError) {
  TempDir dir;
  dir.write("in.jsonl", "{broken\n");
  const auto plan = PipelinePlan::from_toml_string("input = \"in.jsonl\"\n[[stage]]\nkind = \"dedup\"\n", dir.path());
  try {
    run(plan);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.index(), 0u);
    EXPECT_EQ(e.cause_kind(), "RecordError");
  }
  EXPECT_FALSE(fs::exists(dir / "out" / "00-dedup.jsonl"));
}

TEST(Run, FullPlanIncludingTokenizerStages) {
  TempDir dir;
  write_bangla_workspace(dir, 300'000);
  const auto result = run(PipelinePlan::from_toml_file(dir / "plan.toml"));
  ASSERT_EQ(result.stages.size(), 6u);
  const auto& train = result.stages[3].manifest;
  EXPECT_EQ(train["counts"]["vocab_size"], 600);
  const auto& merge = result.stages[4].manifest;
  EXPECT_EQ(merge["counts"]["base_vocab"], 256);
  EXPECT_EQ(merge["counts"]["added"], 344);
  const auto& eval = result.stages[5].manifest;
  EXPECT_EQ(eval["inputs"][0]["path"], "out/02-lm-filter.jsonl");
  EXPECT_EQ(eval["inputs"][1]["path"], "out/04-tok-merge.tok");
  EXPECT_EQ(eval["inputs"][2]["path"], "base.tok");
  const auto report = nlohmann::json::parse(slurp(result.stages[5].output));
  EXPECT_LT(report["tpw"].get<double>(), 10.0);
  EXPECT_GT(report["tpw"].get<double>(), 1.0);

  // Byte-identity baseline over the same corpus: the extension must help.
  const auto docs = read_corpus(dir / "out" / "02-lm-filter.jsonl");
  EXPECT_LT(report["tpw"].get<double>(), tokens_per_word(ByteBpeModel{}, docs).tpw);
}

TEST(Run, RerunsAreByteIdentical) {
  TempDir a, b;
  write_bangla_workspace(a, 200'000);
  write_bangla_workspace(b, 200'000);
  run(PipelinePlan::from_toml_file(a / "plan.toml"));
  run(PipelinePlan::from_toml_file(b / "plan.toml"));
  const auto first = snapshot(a / "out");
  EXPECT_EQ(first.size(), 13u);
  EXPECT_EQ(first, snapshot(b / "out"));
  run(PipelinePlan::from_toml_file(a / "plan.toml"));
  EXPECT_EQ(snapshot(a / "out"), first);
}
