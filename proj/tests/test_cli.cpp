#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>
#include <sys/wait.h>

#include "corpuskit/corpuskit.hpp"
#include "support/bangla_sample.hpp"
#include "support/temp_dir.hpp"

using namespace corpuskit;
using testing_support::slurp;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with stdout and stderr captured to files in `dir`.
Outcome cli(const TempDir& dir, const std::string& args, const std::string& stdin_text = "") {
  const auto in = dir.write(".stdin", stdin_text);
  const auto out = dir / ".stdout";
  const auto err = dir / ".stderr";
  const std::string cmd = "cd '" + dir.path().string() + "' && '" CORPUSKIT_CLI "' " + args + " < '" + in.string() +
                          "' > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  Outcome o;
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  o.out = slurp(out);
  o.err = slurp(err);
  return o;
}

nlohmann::json last_log(const Outcome& o) {
  std::istringstream in(o.err);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return nlohmann::json::parse(last);
}

std::vector<TokenId> parse_ids(const std::string& s) {
  std::istringstream in(s);
  std::vector<TokenId> ids;
  for (TokenId id; in >> id;) ids.push_back(id);
  return ids;
}

}  // namespace

TEST(Cli, UsageErrorsExitNonZero) {
  TempDir dir;
  EXPECT_NE(cli(dir, "").code, 0);
  EXPECT_NE(cli(dir, "no-such-command").code, 0);
  EXPECT_NE(cli(dir, "filter --input x.jsonl").code, 0);
  EXPECT_EQ(cli(dir, "--help").code, 0);
}

TEST(Cli, LibraryErrorsAreLoggedAsJson) {
  TempDir dir;
  const auto o = cli(dir, "tok-eval --tokenizer missing.tok --corpus missing.jsonl");
  EXPECT_EQ(o.code, 1);
  const auto j = last_log(o);
  EXPECT_EQ(j["level"], "error");
  EXPECT_EQ(j["command"], "tok-eval");
  EXPECT_EQ(j["kind"], "IoError");

  dir.write("bad.jsonl", "{\"id\":\"a\",\"source\":\"web\",\"text\":\"x\"}\nnot json\n");
  const auto strict = cli(dir, "dedup --input bad.jsonl --output d.jsonl");
  EXPECT_EQ(strict.code, 1);
  EXPECT_EQ(last_log(strict)["kind"], "RecordError");
  EXPECT_FALSE(fs::exists(dir / "d.jsonl"));
  EXPECT_EQ(cli(dir, "--lenient dedup --input bad.jsonl --output d.jsonl").code, 0);
  EXPECT_EQ(read_corpus(dir / "d.jsonl").size(), 1u);
}

TEST(Cli, TokenizerCommandsMatchLibrary) {
  TempDir dir;
  const auto docs = sample::BanglaGenerator(61).corpus(150'000);
  write_corpus(dir / "c.jsonl", docs);
  ASSERT_EQ(cli(dir, "tok-train --input c.jsonl --vocab-size 700 --output bn.tok").code, 0);
  const auto lib = train_bpe(docs, 700);
  EXPECT_EQ(slurp(dir / "bn.tok"), lib.serialize());

  std::mt19937_64 rng(4);
  for (int i = 0; i < 40; ++i) {
    const auto text = i % 2 ? sample::random_utf8(rng, 30) : docs[static_cast<std::size_t>(i)].text;
    dir.write("t.txt", text);
    const auto enc = cli(dir, "tok-encode --tokenizer bn.tok --input t.txt");
    ASSERT_EQ(enc.code, 0) << enc.err;
    EXPECT_EQ(parse_ids(enc.out), lib.encode(text));
    const auto dec = cli(dir, "tok-decode --tokenizer bn.tok", enc.out);
    ASSERT_EQ(dec.code, 0) << dec.err;
    EXPECT_EQ(dec.out, text);
  }
  const auto bad = cli(dir, "tok-decode --tokenizer bn.tok", "12 x");
  EXPECT_EQ(last_log(bad)["kind"], "DecodeError");
}

TEST(Cli, MergeAndEvaluate) {
  TempDir dir;
  const auto docs = sample::BanglaGenerator(62).corpus(150'000);
  write_corpus(dir / "c.jsonl", docs);
  dir.write("base.tok", "");
  ASSERT_EQ(cli(dir, "tok-train --input c.jsonl --vocab-size 500 --output ext.tok").code, 0);
  ASSERT_EQ(cli(dir, "tok-merge --base base.tok --extension ext.tok --output merged.tok").code, 0);
  EXPECT_TRUE(MergedTokenizer::is_merged_file(slurp(dir / "merged.tok")));
  EXPECT_NE(cli(dir, "tok-eval --tokenizer merged.tok --corpus c.jsonl").code, 0);

  const auto o = cli(dir, "tok-eval --tokenizer merged.tok --base base.tok --corpus c.jsonl --corpus-id bn");
  ASSERT_EQ(o.code, 0) << o.err;
  const auto report = nlohmann::json::parse(o.out);
  const auto merged = merge_tokenizers(ByteBpeModel{}, train_bpe(docs, 500));
  const auto lib = tokens_per_word(merged, docs, "bn");
  EXPECT_EQ(report["corpus_id"], "bn");
  EXPECT_EQ(report["tokens"], lib.tokens);
  EXPECT_NEAR(report["tpw"].get<double>(), lib.tpw, 1e-12);

  dir.write("t.txt", docs[0].text);
  const auto enc = cli(dir, "tok-encode --tokenizer merged.tok --base base.tok --input t.txt");
  EXPECT_EQ(parse_ids(enc.out), merged.encode(docs[0].text));
}

TEST(Cli, FilterMatchesLibraryAndWritesReport) {
  TempDir dir;
  auto docs = sample::BanglaGenerator(63).corpus(200'000);
  docs[3].text = "short";
  docs[5].url = "https://adult.example/x";
  write_corpus(dir / "c.jsonl", docs);
  const auto cfg = sample::source_dir() / "samples" / "filter.toml";
  const auto res = sample::source_dir() / "resources";
  const auto o = cli(dir, "--threads 2 filter --config '" + cfg.string() + "' --resources '" + res.string() +
                              "' --input c.jsonl --output kept.jsonl --rejected rej.jsonl --report report.json");
  ASSERT_EQ(o.code, 0) << o.err;

  std::istringstream in(slurp(dir / "c.jsonl"));
  CorpusReader reader(in);
  std::ostringstream kept;
  CorpusWriter w(kept);
  const auto resources = Resources::load(res);
  const auto report = run_pipeline(reader, FilterConfig::from_toml_file(cfg), resources, w);
  EXPECT_EQ(slurp(dir / "kept.jsonl"), kept.str());
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(j["input_count"], docs.size());
  EXPECT_EQ(j["pass_count"], report.pass_count);
  EXPECT_LT(report.pass_count, docs.size());
  const auto rejected = read_corpus(dir / "rej.jsonl");
  EXPECT_EQ(rejected.size() + report.pass_count, docs.size());
}

TEST(Cli, CalibrateNearestRank) {
  TempDir dir;
  std::vector<Document> docs;
  for (int i = 1; i <= 20; ++i) {
    Document d;
    d.id = "d" + std::to_string(i);
    d.source = "web";
    for (int k = 0; k < i; ++k) d.text += (k ? " " : "") + std::string("শব্দ");
    docs.push_back(d);
  }
  write_corpus(dir / "c.jsonl", docs);
  const auto o = cli(dir, "calibrate --input c.jsonl --metric word_count --percentile 90 --side upper");
  ASSERT_EQ(o.code, 0) << o.err;
  const auto j = nlohmann::json::parse(o.out);
  EXPECT_EQ(j["max"], 18.0);
  EXPECT_TRUE(j["min"].is_null());
  EXPECT_EQ(last_log(cli(dir, "calibrate --input c.jsonl --metric word_count --percentile 100"))["kind"],
            "CalibrationError");
}

TEST(Cli, LanguageModelCommands) {
  TempDir dir;
  const auto docs = sample::BanglaGenerator(64).corpus(100'000);
  write_corpus(dir / "c.jsonl", docs);
  ASSERT_EQ(cli(dir, "lm-train --input c.jsonl --model lm.bin --order 3 --arpa lm.arpa").code, 0);
  EXPECT_TRUE(slurp(dir / "lm.arpa").starts_with("\\data\\"));
  const auto scores = cli(dir, "lm-score --model lm.bin --input c.jsonl");
  ASSERT_EQ(scores.code, 0);
  std::istringstream lines(scores.out);
  std::string first;
  std::getline(lines, first);
  const auto model = train_lm(docs);
  EXPECT_NEAR(nlohmann::json::parse(first)["per_word_log_prob"].get<double>(), model.score(docs[0]).per_word_log_prob,
              1e-9);
  ASSERT_EQ(cli(dir, "lm-filter --model lm.bin --input c.jsonl --output kept.jsonl --retain 0.5").code, 0);
  EXPECT_EQ(read_corpus(dir / "kept.jsonl").size(), static_cast<std::size_t>(std::ceil(docs.size() * 0.5 - 1e-9)));
}

TEST(Cli, OcrCommands) {
  TempDir dir;
  std::vector<Document> books;
  for (std::size_t i = 0; i < 20; ++i) {
    std::vector<WordConfidence> wc(i + 1, {"w", 0.9});
    books.push_back(make_paginated("book" + std::to_string(i), "book", {{0, "ক খ গ ঘ।", wc}, {1, "ক খ।", std::nullopt}}));
  }
  write_corpus(dir / "b.jsonl", books);
  dir.write("lex.txt", "# lexicon\nক\nখ\n");
  const auto stats = cli(dir, "ocr-stats --input b.jsonl --lexicon lex.txt");
  ASSERT_EQ(stats.code, 0) << stats.err;
  std::istringstream lines(stats.out);
  std::string first;
  std::getline(lines, first);
  const auto j = nlohmann::json::parse(first);
  EXPECT_EQ(j["stats"]["avg_words_per_page"], 3.0);
  EXPECT_EQ(j["stats"]["high_confidence_words"], 1);
  ASSERT_EQ(cli(dir, "ocr-filter --input b.jsonl --lexicon lex.txt --output kept.jsonl --confidence-percentile 75").code,
            0);
  EXPECT_EQ(read_corpus(dir / "kept.jsonl").size(), 15u);
}

TEST(Cli, RunExecutesPlan) {
  TempDir dir;
  EXPECT_EQ(cli(dir, "run empty.toml").code, 1);
  dir.write("empty.toml", "seed = 3\n");
  const auto empty = cli(dir, "run empty.toml");
  EXPECT_EQ(empty.code, 0) << empty.err;
  EXPECT_FALSE(fs::exists(dir / "out"));

  write_corpus(dir / "c.jsonl", sample::BanglaGenerator(65).corpus(50'000));
  dir.write("lm.toml", "order = 2\n");
  dir.write("plan.toml", "input = \"c.jsonl\"\n[[stage]]\nkind = \"dedup\"\n[[stage]]\nkind = \"lm-filter\"\nconfig = \"lm.toml\"\n");
  const auto failed = cli(dir, "run plan.toml");
  EXPECT_EQ(failed.code, 1);
  const auto j = last_log(failed);
  EXPECT_EQ(j["kind"], "StageError");
  EXPECT_EQ(j["stage"], 1);
  EXPECT_EQ(j["stage_kind"], "lm-filter");
  EXPECT_EQ(j["cause"], "ConfigError");
  EXPECT_TRUE(fs::exists(dir / "out" / "00-dedup.jsonl"));
  EXPECT_FALSE(fs::exists(dir / "out" / "01-lm-filter.jsonl"));

  dir.write("lm.toml", "order = 2\nretain = 0.5\n");
  ASSERT_EQ(cli(dir, "--seed 9 run plan.toml").code, 0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "01-lm-filter.jsonl.manifest.json"));
  EXPECT_EQ(manifest["seed"], 9);
}

TEST(Cli, ShippedSamplePlanRuns) {
  TempDir dir;
  fs::copy(sample::source_dir() / "samples", dir / "samples", fs::copy_options::recursive);
  fs::copy(sample::source_dir() / "resources", dir / "resources", fs::copy_options::recursive);
  fs::remove_all(dir / "samples" / "out");
  const auto o = cli(dir, "run samples/plan.toml");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(last_log(o)["stages"], 6);
  const auto report = nlohmann::json::parse(slurp(dir / "samples" / "out" / "05-tok-eval.json"));
  const auto docs = read_corpus(dir / "samples" / "out" / "02-lm-filter.jsonl");
  EXPECT_LT(report["tpw"].get<double>(), tokens_per_word(ByteBpeModel{}, docs).tpw);
}
