#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "corpuskit/tokenizer.hpp"
#include "support/bangla_sample.hpp"

using namespace corpuskit;

namespace {

// Quadratic rank-BPE: within each chunk, repeatedly merge the leftmost
// adjacent pair whose concatenation has the lowest rank.
std::vector<std::string> naive_encode(const std::map<std::string, std::size_t>& rank, std::string_view text) {
  std::vector<std::string> out;
  for (auto chunk : whitespace_chunks(text)) {
    std::vector<std::string> parts;
    for (char c : chunk) parts.emplace_back(1, c);
    while (parts.size() > 1) {
      std::size_t best = parts.size(), best_rank = SIZE_MAX;
      for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        auto it = rank.find(parts[i] + parts[i + 1]);
        if (it != rank.end() && it->second < best_rank) {
          best_rank = it->second;
          best = i;
        }
      }
      if (best == parts.size()) break;
      parts[best] += parts[best + 1];
      parts.erase(parts.begin() + static_cast<long>(best) + 1);
    }
    out.insert(out.end(), parts.begin(), parts.end());
  }
  return out;
}

std::map<std::string, std::size_t> ranks_of(const ByteBpeModel& m) {
  std::map<std::string, std::size_t> r;
  for (std::size_t i = 0; i < m.merge_count(); ++i) r[m.token_bytes(kByteTokens + static_cast<TokenId>(i))] = i;
  return r;
}

std::vector<Document> docs_of(std::initializer_list<std::string> texts) {
  std::vector<Document> out;
  for (const auto& t : texts) {
    Document d;
    d.id = "d" + std::to_string(out.size());
    d.source = "web";
    d.text = t;
    out.push_back(std::move(d));
  }
  return out;
}

const std::vector<Document>& bangla_corpus() {
  static const auto docs = sample::BanglaGenerator(404).corpus(400'000);
  return docs;
}

const ByteBpeModel& bangla_model() {
  static const auto m = train_bpe(bangla_corpus(), 1500);
  return m;
}

}  // namespace

TEST(Pretokenize, WhitespaceAttachesToFollowingChunk) {
  const auto c = whitespace_chunks("ab  cd\nef ");
  EXPECT_EQ(c, (std::vector<std::string_view>{"ab", "  cd", "\nef", " "}));
  EXPECT_TRUE(whitespace_chunks("").empty());
  EXPECT_EQ(whitespace_chunks("   "), std::vector<std::string_view>{"   "});
}

TEST(Train, TinyCorpusMergeOrder) {
  const auto docs = docs_of({"ab ab ab"});
  const auto m = train_bpe(docs, 258);
  ASSERT_EQ(m.merge_count(), 2u);
  EXPECT_EQ(m.token_bytes(256), "ab");
  EXPECT_EQ(m.token_bytes(257), " ab");
  EXPECT_EQ(m.encode("ab ab"), (std::vector<TokenId>{256, 257}));
  // Nothing occurs twice after the second merge.
  EXPECT_EQ(train_bpe(docs, 259).merge_count(), 2u);
  EXPECT_EQ(train_bpe(docs, 257).merge_count(), 1u);
  EXPECT_THROW(train_bpe(docs, 256), ConfigError);
}

TEST(Train, Errors) {
  EXPECT_THROW(train_bpe(docs_of({"abc"}), 100), ConfigError);
  EXPECT_THROW(train_bpe(std::vector<Document>{}, 300), TrainError);
}

TEST(Train, SmallerTargetIsPrefixOfLarger) {
  const auto& big = bangla_model();
  for (std::size_t target : {300u, 700u, 1200u}) {
    const auto small = train_bpe(bangla_corpus(), target);
    EXPECT_EQ(small, big.truncated(small.merge_count())) << target;
  }
}

TEST(Train, ThreadedCountingMatchesSerial) {
  EXPECT_EQ(train_bpe(bangla_corpus(), 600, {}, 4), train_bpe(bangla_corpus(), 600, {}, 1));
}

TEST(Encode, MatchesNaiveRankMerging) {
  const auto& m = bangla_model();
  const auto rank = ranks_of(m);
  sample::BanglaGenerator gen(9);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 200; ++i) {
    const auto text = i % 2 ? gen.paragraph(2) : sample::random_utf8(rng, 30);
    std::vector<std::string> got;
    for (auto id : m.encode(text)) got.push_back(m.token_bytes(id));
    EXPECT_EQ(got, naive_encode(rank, text));
  }
}

TEST(Encode, RoundTripsRandomUtf8) {
  const auto& m = bangla_model();
  std::mt19937_64 rng(12);
  for (int i = 0; i < 3000; ++i) {
    const auto s = sample::random_utf8(rng, 64);
    EXPECT_EQ(m.decode(m.encode(s)), s);
  }
}

TEST(Encode, DecodeErrors) {
  const auto& m = bangla_model();
  EXPECT_THROW(m.decode(std::vector<TokenId>{0xC3}), DecodeError);
  EXPECT_EQ(m.decode_bytes(std::vector<TokenId>{0xC3}), "\xC3");
  EXPECT_THROW(m.decode(std::vector<TokenId>{static_cast<TokenId>(m.vocab_size() + 5)}), DecodeError);
}

TEST(ModelFile, SerializeLoadRoundTrip) {
  const auto& m = bangla_model();
  std::stringstream s;
  m.save(s);
  const auto back = ByteBpeModel::load(s);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.fingerprint(), m.fingerprint());
  // Pair ids are re-derived from bytes on load; encoding depends only on
  // the ranked bytes, so it must agree.
  sample::BanglaGenerator gen(2);
  for (int i = 0; i < 50; ++i) {
    const auto t = gen.paragraph(2);
    EXPECT_EQ(back.encode(t), m.encode(t));
  }
}

TEST(ModelFile, Specials) {
  const auto base = train_bpe(docs_of({"ab ab ab"}), 258);
  const ByteBpeModel m(base.merges(), {{"<pad>", 258}, {"<eos>", 259}});
  EXPECT_EQ(m.vocab_size(), 260u);
  EXPECT_EQ(m.token_bytes(259), "<eos>");
  const auto back = ByteBpeModel::parse(m.serialize());
  EXPECT_EQ(back.specials(), m.specials());
  EXPECT_THROW(ByteBpeModel(base.merges(), {{"<pad>", 300}}), ModelFormatError);
}

TEST(ModelFile, RejectsMalformed) {
  EXPECT_THROW(ByteBpeModel::parse("YWI= 1\n"), ModelFormatError);
  EXPECT_THROW(ByteBpeModel::parse("YWI= 0\nYWI= 1\n"), ModelFormatError);
  EXPECT_THROW(ByteBpeModel::parse("!!! 0\n"), ModelFormatError);
  EXPECT_THROW(ByteBpeModel(std::vector<Merge>{{300, 1}}), ModelFormatError);
}

TEST(Merge, SelfMergeIsIdentity) {
  const auto& m = bangla_model();
  const auto merged = merge_tokenizers(m, m);
  EXPECT_EQ(merged.extension_size(), 0u);
  EXPECT_EQ(merged.vocab_size(), m.vocab_size());
  sample::BanglaGenerator gen(3);
  for (int i = 0; i < 50; ++i) {
    const auto t = gen.paragraph(2);
    EXPECT_EQ(merged.encode(t), m.encode(t));
  }
}

TEST(Merge, PreservesBaseAndAppendsExtension) {
  const auto base = train_bpe(docs_of({"the cat sat on the mat with the hat", "that is the thing"}), 270);
  const auto& ext = bangla_model();
  const auto merged = merge_tokenizers(base, ext);
  for (TokenId id = 0; id < base.vocab_size(); ++id) EXPECT_EQ(merged.token_bytes(id), base.token_bytes(id));
  EXPECT_EQ(merged.first_extension_id(), base.vocab_size());
  std::size_t fresh = 0;
  for (std::size_t r = 0; r < ext.merge_count(); ++r) fresh += !base.token_id(ext.token_bytes(kByteTokens + static_cast<TokenId>(r)));
  EXPECT_EQ(merged.extension_size(), fresh);
}

TEST(Merge, NeverIncreasesTokenCount) {
  const auto base = train_bpe(docs_of({"the cat sat on the mat", "a quick brown fox jumps", "নতুন কথা বলা হলো আজ"}), 280);
  const auto merged = merge_tokenizers(base, bangla_model());
  sample::BanglaGenerator gen(77);
  std::mt19937_64 rng(78);
  std::size_t violations = 0;
  for (int i = 0; i < 500; ++i) {
    const auto t = i % 3 ? gen.paragraph(3) : sample::random_utf8(rng, 40);
    violations += merged.encode(t).size() > base.encode(t).size();
    EXPECT_EQ(merged.decode(merged.encode(t)), t);
  }
  EXPECT_EQ(violations, 0u);
}

TEST(MergedFile, LoadChecksBase) {
  const ByteBpeModel identity;
  const auto merged = merge_tokenizers(identity, bangla_model());
  std::stringstream s;
  merged.save(s);
  EXPECT_TRUE(MergedTokenizer::is_merged_file(s.str()));
  const auto back = MergedTokenizer::load(s, identity);
  EXPECT_EQ(back.extension_bytes(), merged.extension_bytes());
  EXPECT_EQ(back.serialize(), merged.serialize());
  std::istringstream again(merged.serialize());
  EXPECT_THROW(MergedTokenizer::load(again, bangla_model().truncated(3)), ModelFormatError);
  std::istringstream headless("YWI= 0\n");
  EXPECT_THROW(MergedTokenizer::load(headless, identity), ModelFormatError);
  EXPECT_THROW(MergedTokenizer(identity, {"a"}), ModelFormatError);
  EXPECT_THROW(MergedTokenizer(identity, {"ab", "ab"}), ModelFormatError);
}

TEST(Tpw, ByteIdentityCountsBytes) {
  const ByteBpeModel identity;
  const auto r = tokens_per_word(identity, docs_of({"abc"}), "toy");
  EXPECT_EQ(r.words, 1u);
  EXPECT_EQ(r.tokens, 3u);
  EXPECT_DOUBLE_EQ(r.tpw, 3.0);
  EXPECT_EQ(r.to_json()["corpus_id"], "toy");
  EXPECT_THROW(tokens_per_word(identity, docs_of({"  "})), EmptyCorpus);
}

TEST(Tpw, PerSourceTotals) {
  auto docs = docs_of({"ab cd", "efg"});
  docs[1].source = "book";
  const auto r = tokens_per_word(ByteBpeModel{}, docs);
  EXPECT_EQ(r.per_source.at("web").tokens, 5u);
  EXPECT_EQ(r.per_source.at("book").tpw(), 3.0);
  EXPECT_DOUBLE_EQ(r.tpw, 8.0 / 3.0);
}

TEST(Tpw, ExtensionLowersTpwOnItsDomain) {
  const ByteBpeModel identity;
  sample::BanglaGenerator gen(500);
  const auto held_out = gen.corpus(100'000);
  const auto base = tokens_per_word(identity, held_out).tpw;
  const auto small = tokens_per_word(merge_tokenizers(identity, bangla_model().truncated(300)), held_out).tpw;
  const auto large = tokens_per_word(merge_tokenizers(identity, bangla_model()), held_out).tpw;
  EXPECT_LT(small, base);
  EXPECT_LT(large, small);
}
