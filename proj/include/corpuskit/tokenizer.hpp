#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpuskit/corpus.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/hash.hpp"
#include "corpuskit/parallel.hpp"
#include "corpuskit/unicode.hpp"

namespace corpuskit {

using TokenId = uint32_t;
inline constexpr TokenId kByteTokens = 256;

struct Merge {
  TokenId left = 0;
  TokenId right = 0;

  friend bool operator==(const Merge&, const Merge&) = default;
};

// ---------------------------------------------------------------------------
// Pretokenization

// Splits text into chunks; chunks never straddle in BPE merges.
using Pretokenizer = std::function<std::vector<std::string_view>(std::string_view)>;

// Every run of whitespace is attached to the front of the chunk that follows
// it: "ab  cd" -> ["ab", "  cd"]. Trailing whitespace forms its own chunk.
inline std::vector<std::string_view> whitespace_chunks(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t start = 0;
  bool prev_space = false;
  bool have_word = false;  // current chunk already holds non-space text
  unicode::for_each_code_point(text, [&](char32_t c, std::size_t off, std::size_t) {
    const bool space = unicode::is_space(c);
    if (space && !prev_space && have_word) {
      chunks.push_back(text.substr(start, off - start));
      start = off;
      have_word = false;
    }
    if (!space) have_word = true;
    prev_space = space;
  });
  if (start < text.size()) chunks.push_back(text.substr(start));
  return chunks;
}

namespace detail {

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept { return std::hash<std::string_view>{}(s); }
};

// Byte-level BPE codec. Encoding repeatedly merges the adjacent pair of parts
// whose concatenation is a vocabulary token of lowest rank (leftmost first
// among equal ranks), within each chunk.
class BpeCodec {
public:
  BpeCodec() {
    id_bytes_.reserve(kByteTokens);
    for (unsigned b = 0; b < kByteTokens; ++b) id_bytes_.emplace_back(1, static_cast<char>(b));
  }

  // Appends a ranked token; ranks are assigned in call order.
  void add_ranked(const std::string& bytes, TokenId id) {
    const auto rank = static_cast<uint32_t>(ranked_.size());
    ranked_.emplace(bytes, Entry{rank, id});
    set_bytes(id, bytes);
  }

  void set_bytes(TokenId id, const std::string& bytes) {
    if (id_bytes_.size() <= id) id_bytes_.resize(id + 1);
    id_bytes_[id] = bytes;
    if (known_.size() <= id) known_.resize(id + 1, false);
    known_[id] = true;
  }

  std::optional<TokenId> find(std::string_view bytes) const {
    if (bytes.size() == 1) return static_cast<unsigned char>(bytes[0]);
    auto it = ranked_.find(bytes);
    if (it == ranked_.end()) return std::nullopt;
    return it->second.id;
  }

  std::optional<uint32_t> rank_of(std::string_view bytes) const {
    auto it = ranked_.find(bytes);
    if (it == ranked_.end()) return std::nullopt;
    return it->second.rank;
  }

  std::size_t id_count() const noexcept { return id_bytes_.size(); }

  bool valid_id(TokenId id) const { return id < kByteTokens || (id < known_.size() && known_[id]); }

  const std::string& bytes(TokenId id) const {
    if (!valid_id(id)) throw DecodeError("unknown token id " + std::to_string(id));
    return id_bytes_[id];
  }

  void encode_chunk(std::string_view chunk, std::vector<TokenId>& out) const {
    const std::size_t n = chunk.size();
    if (n == 0) return;
    if (n == 1) {
      out.push_back(static_cast<unsigned char>(chunk[0]));
      return;
    }
    // Part i spans [i, next[i]); dead parts have been absorbed on the left.
    std::vector<uint32_t> next(n), prev(n), version(n, 0);
    std::vector<bool> alive(n, true);
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = static_cast<uint32_t>(i + 1);
      prev[i] = static_cast<uint32_t>(i == 0 ? n : i - 1);
    }
    struct Candidate {
      uint32_t rank;
      uint32_t pos;
      uint32_t version;
      bool operator>(const Candidate& o) const { return rank != o.rank ? rank > o.rank : pos > o.pos; }
    };
    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap;
    auto consider = [&](uint32_t i) {
      ++version[i];
      const uint32_t j = next[i];
      if (j >= n) return;
      const uint32_t end = next[j];
      if (auto r = rank_of(chunk.substr(i, end - i))) heap.push({*r, i, version[i]});
    };
    for (uint32_t i = 0; i + 1 < n; ++i) consider(i);
    while (!heap.empty()) {
      const Candidate c = heap.top();
      heap.pop();
      if (!alive[c.pos] || c.version != version[c.pos]) continue;
      const uint32_t j = next[c.pos];
      alive[j] = false;
      next[c.pos] = next[j];
      if (next[j] < n) prev[next[j]] = c.pos;
      consider(c.pos);
      if (prev[c.pos] < n) consider(prev[c.pos]);
    }
    for (uint32_t i = 0; i < n; i = next[i]) {
      auto id = find(chunk.substr(i, next[i] - i));
      out.push_back(*id);
    }
  }

  std::vector<TokenId> encode(std::string_view text, const Pretokenizer& pretokenizer) const {
    std::vector<TokenId> out;
    out.reserve(text.size() / 2);
    const auto chunks = pretokenizer ? pretokenizer(text) : whitespace_chunks(text);
    for (auto chunk : chunks) encode_chunk(chunk, out);
    return out;
  }

  std::string decode_bytes(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) out += bytes(id);
    return out;
  }

  std::string decode(std::span<const TokenId> ids) const {
    std::string out = decode_bytes(ids);
    if (auto bad = unicode::find_invalid_utf8(out))
      throw DecodeError("decoded bytes are not valid UTF-8 at offset " + std::to_string(*bad));
    return out;
  }

private:
  struct Entry {
    uint32_t rank;
    TokenId id;
  };
  std::unordered_map<std::string, Entry, StringHash, std::equal_to<>> ranked_;
  std::vector<std::string> id_bytes_;
  std::vector<bool> known_ = std::vector<bool>(kByteTokens, true);
};

// For each ranked token, the first split point whose halves are both
// known with a lower rank.
inline Merge derive_merge(const BpeCodec& codec, std::string_view bytes, uint32_t rank) {
  for (std::size_t k = 1; k < bytes.size(); ++k) {
    const auto left = bytes.substr(0, k), right = bytes.substr(k);
    auto lr = left.size() == 1 ? std::optional<uint32_t>(0) : codec.rank_of(left);
    auto rr = right.size() == 1 ? std::optional<uint32_t>(0) : codec.rank_of(right);
    if (!lr || !rr) continue;
    if ((left.size() > 1 && *lr >= rank) || (right.size() > 1 && *rr >= rank)) continue;
    return {*codec.find(left), *codec.find(right)};
  }
  throw ModelFormatError("token at rank " + std::to_string(rank) + " is not a concatenation of earlier tokens");
}

inline std::vector<std::pair<std::string, uint32_t>> parse_ranked_lines(std::istream& in, std::string* header,
                                                                        std::map<std::string, TokenId>* specials) {
  std::vector<std::pair<std::string, uint32_t>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.starts_with("#special ")) {
      std::istringstream fields(line.substr(9));
      std::string name;
      TokenId id{};
      if (!(fields >> name >> id) || !specials) throw ModelFormatError("bad special line " + std::to_string(line_no));
      specials->emplace(name, id);
      continue;
    }
    if (line.starts_with("#")) {
      if (!header || line_no != 1) throw ModelFormatError("unexpected directive on line " + std::to_string(line_no));
      *header = line;
      continue;
    }
    const auto space = line.find(' ');
    if (space == std::string::npos) throw ModelFormatError("line " + std::to_string(line_no) + " lacks a rank");
    uint32_t rank = 0;
    try {
      std::size_t used = 0;
      const auto parsed = std::stoull(line.substr(space + 1), &used);
      if (used != line.size() - space - 1 || parsed > std::numeric_limits<uint32_t>::max()) throw std::out_of_range("");
      rank = static_cast<uint32_t>(parsed);
    } catch (const std::exception&) {
      throw ModelFormatError("line " + std::to_string(line_no) + " has a malformed rank");
    }
    entries.emplace_back(hash::base64_decode(line.substr(0, space)), rank);
  }
  return entries;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Models

// Byte-level BPE model: ids 0-255 are the single bytes, id 256 + r is the
// token produced by the merge of rank r, and specials follow densely.
class ByteBpeModel {
public:
  ByteBpeModel() = default;

  explicit ByteBpeModel(std::vector<Merge> merges, std::map<std::string, TokenId> specials = {})
      : merges_(std::move(merges)), specials_(std::move(specials)) {
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      const TokenId id = kByteTokens + static_cast<TokenId>(r);
      const auto [l, rt] = merges_[r];
      if (l >= id || rt >= id) throw ModelFormatError("merge " + std::to_string(r) + " references a later token");
      std::string bytes = codec_.bytes(l) + codec_.bytes(rt);
      if (codec_.find(bytes)) throw ModelFormatError("merge " + std::to_string(r) + " duplicates an existing token");
      codec_.add_ranked(bytes, id);
    }
    install_specials();
  }

  // Rebuilds a model from token byte strings in rank order.
  static ByteBpeModel from_ranked_bytes(const std::vector<std::string>& ranked,
                                        std::map<std::string, TokenId> specials = {}) {
    ByteBpeModel m;
    m.specials_ = std::move(specials);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const auto& bytes = ranked[r];
      if (bytes.size() < 2) throw ModelFormatError("ranked token " + std::to_string(r) + " is not multi-byte");
      if (m.codec_.find(bytes)) throw ModelFormatError("duplicate token bytes at rank " + std::to_string(r));
      m.merges_.push_back(detail::derive_merge(m.codec_, bytes, static_cast<uint32_t>(r)));
      m.codec_.add_ranked(bytes, kByteTokens + static_cast<TokenId>(r));
    }
    m.install_specials();
    return m;
  }

  std::size_t merge_count() const noexcept { return merges_.size(); }
  std::size_t vocab_size() const noexcept { return kByteTokens + merges_.size() + specials_.size(); }
  const std::vector<Merge>& merges() const noexcept { return merges_; }
  const std::map<std::string, TokenId>& specials() const noexcept { return specials_; }
  const std::string& token_bytes(TokenId id) const { return codec_.bytes(id); }
  std::optional<TokenId> token_id(std::string_view bytes) const { return codec_.find(bytes); }

  std::vector<TokenId> encode(std::string_view text, const Pretokenizer& pretokenizer = {}) const {
    return codec_.encode(text, pretokenizer);
  }
  std::string decode(std::span<const TokenId> ids) const { return codec_.decode(ids); }
  std::string decode_bytes(std::span<const TokenId> ids) const { return codec_.decode_bytes(ids); }

  // The model restricted to its first n merges (specials dropped).
  ByteBpeModel truncated(std::size_t n) const {
    return ByteBpeModel(std::vector<Merge>(merges_.begin(), merges_.begin() + std::min(n, merges_.size())));
  }

  // One line per merge-produced token in rank order: base64(bytes), a space,
  // the rank, LF. Specials trail as "#special <name> <id>".
  std::string serialize() const {
    std::string out;
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      out += hash::base64_encode(token_bytes(kByteTokens + static_cast<TokenId>(r)));
      out += ' ';
      out += std::to_string(r);
      out += '\n';
    }
    std::vector<std::pair<TokenId, std::string>> by_id;
    for (const auto& [name, id] : specials_) by_id.emplace_back(id, name);
    std::sort(by_id.begin(), by_id.end());
    for (const auto& [id, name] : by_id) out += "#special " + name + " " + std::to_string(id) + "\n";
    return out;
  }

  void save(std::ostream& out) const {
    out << serialize();
    if (!out) throw IoError("failed to write tokenizer");
  }

  static ByteBpeModel load(std::istream& in) {
    std::map<std::string, TokenId> specials;
    const auto entries = detail::parse_ranked_lines(in, nullptr, &specials);
    std::vector<std::string> ranked;
    ranked.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].second != i) throw ModelFormatError("ranks must be dense and start at 0");
      ranked.push_back(entries[i].first);
    }
    return from_ranked_bytes(ranked, std::move(specials));
  }

  static ByteBpeModel parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    return load(in);
  }

  std::string fingerprint() const { return hash::sha256_hex(serialize()); }

  const detail::BpeCodec& codec() const noexcept { return codec_; }

  // Models compare by their ranked token bytes and specials.
  friend bool operator==(const ByteBpeModel& a, const ByteBpeModel& b) { return a.serialize() == b.serialize(); }

private:
  void install_specials() {
    const TokenId first = kByteTokens + static_cast<TokenId>(merges_.size());
    std::vector<bool> used(specials_.size(), false);
    for (const auto& [name, id] : specials_) {
      if (name.empty() || name.find_first_of(" \n") != std::string::npos)
        throw ModelFormatError("special token names must be non-empty without spaces");
      if (id < first || id >= first + specials_.size() || used[id - first])
        throw ModelFormatError("special ids must densely follow the merge-produced ids");
      used[id - first] = true;
      codec_.set_bytes(id, name);
    }
  }

  std::vector<Merge> merges_;
  std::map<std::string, TokenId> specials_;
  detail::BpeCodec codec_;
};

// A base model extended with tokens from a second model. Base ids, bytes and
// merge ranks are untouched; extension tokens take ids from the base vocab
// size upward and ranks after every base merge.
class MergedTokenizer {
public:
  MergedTokenizer(ByteBpeModel base, const std::vector<std::string>& extension_bytes)
      : base_(std::move(base)), codec_(base_.codec()) {
    const TokenId first_id = static_cast<TokenId>(base_.vocab_size());
    for (std::size_t j = 0; j < extension_bytes.size(); ++j) {
      const auto& bytes = extension_bytes[j];
      if (bytes.size() < 2 || codec_.find(bytes))
        throw ModelFormatError("extension token " + std::to_string(j) + " is not new multi-byte text");
      const auto rank = static_cast<uint32_t>(base_.merge_count() + j);
      extension_merges_.push_back(detail::derive_merge(codec_, bytes, rank));
      codec_.add_ranked(bytes, first_id + static_cast<TokenId>(j));
    }
  }

  const ByteBpeModel& base() const noexcept { return base_; }
  std::size_t extension_size() const noexcept { return extension_merges_.size(); }
  std::size_t vocab_size() const noexcept { return base_.vocab_size() + extension_merges_.size(); }
  const std::vector<Merge>& extension_merges() const noexcept { return extension_merges_; }
  const std::map<std::string, TokenId>& specials() const noexcept { return base_.specials(); }
  const std::string& token_bytes(TokenId id) const { return codec_.bytes(id); }
  TokenId first_extension_id() const noexcept { return static_cast<TokenId>(base_.vocab_size()); }

  std::vector<std::string> extension_bytes() const {
    std::vector<std::string> out;
    for (std::size_t j = 0; j < extension_size(); ++j) out.push_back(token_bytes(first_extension_id() + static_cast<TokenId>(j)));
    return out;
  }

  std::vector<TokenId> encode(std::string_view text, const Pretokenizer& pretokenizer = {}) const {
    return codec_.encode(text, pretokenizer);
  }
  std::string decode(std::span<const TokenId> ids) const { return codec_.decode(ids); }
  std::string decode_bytes(std::span<const TokenId> ids) const { return codec_.decode_bytes(ids); }

  // "#merged-base sha256:<hex>" naming the base model file, then the
  // extension tokens as base64(bytes) and global rank.
  std::string serialize() const {
    std::string out = "#merged-base sha256:" + base_.fingerprint() + "\n";
    for (std::size_t j = 0; j < extension_size(); ++j) {
      out += hash::base64_encode(token_bytes(first_extension_id() + static_cast<TokenId>(j)));
      out += ' ';
      out += std::to_string(base_.merge_count() + j);
      out += '\n';
    }
    return out;
  }

  void save(std::ostream& out) const {
    out << serialize();
    if (!out) throw IoError("failed to write merged tokenizer");
  }

  // Loads an extension file against its base; the base fingerprint must match.
  static MergedTokenizer load(std::istream& in, ByteBpeModel base) {
    std::string header;
    const auto entries = detail::parse_ranked_lines(in, &header, nullptr);
    const std::string expected = "#merged-base sha256:" + base.fingerprint();
    if (header.empty()) throw ModelFormatError("merged tokenizer file lacks a #merged-base header");
    if (header != expected) throw ModelFormatError("merged tokenizer was built on a different base model");
    std::vector<std::string> ext;
    for (std::size_t j = 0; j < entries.size(); ++j) {
      if (entries[j].second != base.merge_count() + j) throw ModelFormatError("extension ranks must follow base ranks");
      ext.push_back(entries[j].first);
    }
    return MergedTokenizer(std::move(base), ext);
  }

  static bool is_merged_file(std::string_view text) { return text.starts_with("#merged-base "); }

private:
  ByteBpeModel base_;
  detail::BpeCodec codec_;
  std::vector<Merge> extension_merges_;
};

// Extension tokens whose bytes already exist in the base are dropped; the
// rest are appended in extension rank order. Extension specials are dropped.
inline MergedTokenizer merge_tokenizers(const ByteBpeModel& base, const ByteBpeModel& extension) {
  std::vector<std::string> fresh;
  for (std::size_t r = 0; r < extension.merge_count(); ++r) {
    const auto& bytes = extension.token_bytes(kByteTokens + static_cast<TokenId>(r));
    if (!base.token_id(bytes)) fresh.push_back(bytes);
  }
  return MergedTokenizer(base, fresh);
}

// ---------------------------------------------------------------------------
// Training

// Collects chunk frequencies, then runs the BPE merge loop: merge the most
// frequent adjacent pair (ties to the smaller (left, right) id pair) until the
// vocabulary reaches the target or no pair occurs twice. A pair whose
// concatenation already is a token is merged into that token without growing
// the vocabulary.
class BpeTrainer {
public:
  explicit BpeTrainer(Pretokenizer pretokenizer = {}) : pretokenizer_(std::move(pretokenizer)) {}

  void add_text(std::string_view text) {
    const auto chunks = pretokenizer_ ? pretokenizer_(text) : whitespace_chunks(text);
    for (auto c : chunks) ++chunks_[std::string(c)];
  }

  void add_documents(std::span<const Document> docs, std::size_t threads = 1) {
    threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, docs.size()));
    std::vector<BpeTrainer> shards(threads, BpeTrainer(pretokenizer_));
    const std::size_t per = (docs.size() + threads - 1) / threads;
    parallel_for(threads, threads, [&](std::size_t t) {
      for (std::size_t i = t * per; i < std::min(docs.size(), (t + 1) * per); ++i) shards[t].add_text(docs[i].text);
    });
    for (const auto& s : shards) merge(s);
  }

  void merge(const BpeTrainer& other) {
    for (const auto& [chunk, n] : other.chunks_) chunks_[chunk] += n;
  }

  std::size_t distinct_chunks() const noexcept { return chunks_.size(); }

  ByteBpeModel train(std::size_t target_vocab) const {
    if (target_vocab < kByteTokens + 1) throw ConfigError("target vocabulary must be at least 257");
    if (chunks_.empty()) throw TrainError("cannot train a tokenizer on an empty corpus");
    return Run(chunks_, target_vocab).result();
  }

private:
  class Run {
  public:
    Run(const std::unordered_map<std::string, uint64_t>& chunks, std::size_t target) {
      std::vector<std::pair<std::string_view, uint64_t>> sorted(chunks.begin(), chunks.end());
      std::sort(sorted.begin(), sorted.end());
      words_.reserve(sorted.size());
      for (const auto& [chunk, freq] : sorted) {
        Word w;
        w.freq = freq;
        for (unsigned char b : chunk) w.syms.push_back(b);
        words_.push_back(std::move(w));
      }
      stamp_.assign(words_.size(), 0);
      for (uint32_t wi = 0; wi < words_.size(); ++wi) {
        const auto& w = words_[wi];
        for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
          const uint64_t k = key(w.syms[i], w.syms[i + 1]);
          counts_[k] += static_cast<int64_t>(w.freq);
          where_[k].push_back(wi);
        }
      }
      for (const auto& [k, c] : counts_) heap_.push({c, k});

      while (kByteTokens + merges_.size() < target) {
        auto best = pop_best();
        if (!best || best->count < 2) break;
        apply(best->pair);
      }
    }

    ByteBpeModel result() const { return ByteBpeModel(merges_); }

  private:
    struct Word {
      std::vector<TokenId> syms;
      uint64_t freq = 0;
    };
    struct HeapEntry {
      int64_t count;
      uint64_t pair;
      // Max-heap on count; among equal counts the smaller pair wins.
      bool operator<(const HeapEntry& o) const { return count != o.count ? count < o.count : pair > o.pair; }
    };

    static uint64_t key(TokenId l, TokenId r) { return (static_cast<uint64_t>(l) << 32) | r; }

    std::optional<HeapEntry> pop_best() {
      while (!heap_.empty()) {
        const HeapEntry e = heap_.top();
        heap_.pop();
        auto it = counts_.find(e.pair);
        if (it != counts_.end() && it->second == e.count && e.count > 0) return e;
      }
      return std::nullopt;
    }

    void apply(uint64_t pair) {
      const auto l = static_cast<TokenId>(pair >> 32), r = static_cast<TokenId>(pair & 0xFFFFFFFFu);
      std::string bytes = bytes_of(l) + bytes_of(r);
      TokenId target;
      if (auto it = existing_.find(bytes); it != existing_.end()) {
        target = it->second;
      } else {
        target = kByteTokens + static_cast<TokenId>(merges_.size());
        merges_.push_back({l, r});
        token_bytes_.push_back(bytes);
        existing_.emplace(std::move(bytes), target);
      }

      ++epoch_;
      std::unordered_map<uint64_t, int64_t> delta;
      const auto affected = std::move(where_[pair]);
      where_.erase(pair);
      for (uint32_t wi : affected) {
        if (stamp_[wi] == epoch_) continue;
        stamp_[wi] = epoch_;
        Word& w = words_[wi];
        bool contains = false;
        for (std::size_t i = 0; i + 1 < w.syms.size() && !contains; ++i) contains = w.syms[i] == l && w.syms[i + 1] == r;
        if (!contains) continue;
        const auto f = static_cast<int64_t>(w.freq);
        for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) delta[key(w.syms[i], w.syms[i + 1])] -= f;
        std::vector<TokenId> merged;
        merged.reserve(w.syms.size());
        for (std::size_t i = 0; i < w.syms.size(); ++i) {
          if (i + 1 < w.syms.size() && w.syms[i] == l && w.syms[i + 1] == r) {
            merged.push_back(target);
            ++i;
          } else {
            merged.push_back(w.syms[i]);
          }
        }
        w.syms = std::move(merged);
        for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
          const uint64_t k = key(w.syms[i], w.syms[i + 1]);
          delta[k] += f;
          if (w.syms[i] == target || w.syms[i + 1] == target) where_[k].push_back(wi);
        }
      }
      for (const auto& [k, d] : delta) {
        if (d == 0) continue;
        auto& c = counts_[k];
        c += d;
        if (c > 0)
          heap_.push({c, k});
        else
          counts_.erase(k);
      }
      counts_.erase(pair);
    }

    const std::string& bytes_of(TokenId id) {
      if (id < kByteTokens) {
        single_.assign(1, static_cast<char>(id));
        return single_;
      }
      return token_bytes_[id - kByteTokens];
    }

    std::vector<Word> words_;
    std::vector<uint64_t> stamp_;
    uint64_t epoch_ = 0;
    std::unordered_map<uint64_t, int64_t> counts_;
    std::unordered_map<uint64_t, std::vector<uint32_t>> where_;
    std::priority_queue<HeapEntry> heap_;
    std::vector<Merge> merges_;
    std::vector<std::string> token_bytes_;
    std::unordered_map<std::string, TokenId> existing_;
    std::string single_;
  };

  Pretokenizer pretokenizer_;
  std::unordered_map<std::string, uint64_t> chunks_;
};

inline ByteBpeModel train_bpe(std::span<const Document> docs, std::size_t target_vocab,
                              const Pretokenizer& pretokenizer = {}, std::size_t threads = 1) {
  BpeTrainer trainer(pretokenizer);
  trainer.add_documents(docs, threads);
  return trainer.train(target_vocab);
}

inline ByteBpeModel train_bpe(CorpusReader& reader, std::size_t target_vocab, const Pretokenizer& pretokenizer = {}) {
  BpeTrainer trainer(pretokenizer);
  while (auto doc = reader.next()) trainer.add_text(doc->text);
  return trainer.train(target_vocab);
}

// ---------------------------------------------------------------------------
// Tokens per word

template <class T>
concept TextEncoder = requires(const T& t, std::string_view s) {
  { t.encode(s) } -> std::convertible_to<std::vector<TokenId>>;
};

struct TpwTotals {
  std::size_t words = 0;
  std::size_t tokens = 0;
  double tpw() const { return words == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(words); }
};

struct TpwReport {
  std::string corpus_id;
  std::size_t words = 0;
  std::size_t tokens = 0;
  double tpw = 0.0;
  std::map<std::string, TpwTotals> per_source;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["corpus_id"] = corpus_id;
    j["words"] = words;
    j["tokens"] = tokens;
    j["tpw"] = tpw;
    j["per_source"] = nlohmann::ordered_json::object();
    for (const auto& [src, t] : per_source) {
      j["per_source"][src] = {{"words", t.words}, {"tokens", t.tokens}, {"tpw", t.tpw()}};
    }
    return j;
  }
};

class TpwAccumulator {
public:
  template <TextEncoder Tok>
  void add(const Tok& tokenizer, const Document& doc) {
    const std::size_t words = count_words(doc.text);
    const std::size_t tokens = tokenizer.encode(doc.text).size();
    report_.words += words;
    report_.tokens += tokens;
    auto& src = report_.per_source[doc.source];
    src.words += words;
    src.tokens += tokens;
  }

  TpwReport finish(std::string corpus_id) {
    if (report_.words == 0) throw EmptyCorpus("tokens per word over a corpus without words");
    report_.corpus_id = std::move(corpus_id);
    report_.tpw = static_cast<double>(report_.tokens) / static_cast<double>(report_.words);
    return report_;
  }

private:
  TpwReport report_;
};

// Total encoded tokens divided by total whitespace-delimited words.
template <TextEncoder Tok>
TpwReport tokens_per_word(const Tok& tokenizer, std::span<const Document> docs, std::string corpus_id = {}) {
  TpwAccumulator acc;
  for (const auto& doc : docs) acc.add(tokenizer, doc);
  return acc.finish(std::move(corpus_id));
}

template <TextEncoder Tok>
TpwReport tokens_per_word(const Tok& tokenizer, CorpusReader& reader, std::string corpus_id = {}) {
  TpwAccumulator acc;
  while (auto doc = reader.next()) acc.add(tokenizer, *doc);
  return acc.finish(std::move(corpus_id));
}

}  // namespace corpuskit
