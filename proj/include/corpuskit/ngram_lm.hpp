#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpuskit/corpus.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/hash.hpp"
#include "corpuskit/parallel.hpp"

namespace corpuskit {

using WordId = uint32_t;
inline constexpr std::size_t kMaxLmOrder = 6;

// Word-id sequence of length <= kMaxLmOrder, usable as a hash key.
struct NGramKey {
  std::array<WordId, kMaxLmOrder> ids{};
  uint8_t size = 0;

  NGramKey() = default;
  explicit NGramKey(std::span<const WordId> s) : size(static_cast<uint8_t>(s.size())) {
    std::copy(s.begin(), s.end(), ids.begin());
  }
  std::span<const WordId> view() const { return {ids.data(), size}; }
  NGramKey suffix() const { return NGramKey(view().subspan(1)); }
  NGramKey prefix() const { return NGramKey(view().first(size - 1u)); }
  WordId last() const { return ids[size - 1u]; }

  friend bool operator==(const NGramKey& a, const NGramKey& b) {
    return a.size == b.size && std::equal(a.ids.begin(), a.ids.begin() + a.size, b.ids.begin());
  }
  friend bool operator<(const NGramKey& a, const NGramKey& b) {
    return std::lexicographical_compare(a.ids.begin(), a.ids.begin() + a.size, b.ids.begin(), b.ids.begin() + b.size);
  }
};

struct NGramKeyHash {
  std::size_t operator()(const NGramKey& k) const noexcept {
    uint64_t h = k.size;
    for (uint8_t i = 0; i < k.size; ++i) h = hash::mix64(h ^ k.ids[i]);
    return static_cast<std::size_t>(h);
  }
};

using NGramCounts = std::unordered_map<NGramKey, uint64_t, NGramKeyHash>;

struct ScoredDocument {
  std::string id;
  double log_prob = 0.0;  // nats
  std::size_t tokens = 0;
  double per_word_log_prob = 0.0;
  double perplexity = 0.0;
};

// Words of each sentence of a document after normalization.
inline std::vector<std::vector<std::string>> sentence_words(std::string_view text,
                                                             const NormalizeOptions& options = {}) {
  const auto view = normalize(text, options);
  std::vector<std::vector<std::string>> out;
  out.reserve(view.sentences.size());
  for (const auto& s : view.sentences) out.push_back(split_words(s));
  return out;
}

// Interpolated Kneser-Ney model with a single fixed discount. The highest
// order uses raw counts; lower orders use continuation counts (number of
// distinct left extensions). The unigram level interpolates with the uniform
// distribution over the predicted vocabulary (every word except <s>), which
// gives <unk> its floor probability.
class NGramModel {
public:
  static constexpr WordId kUnk = 0;
  static constexpr WordId kBos = 1;
  static constexpr WordId kEos = 2;
  static constexpr uint32_t kFormatVersion = 1;

  std::size_t order() const noexcept { return order_; }
  double discount() const noexcept { return discount_; }
  std::size_t vocab_size() const noexcept { return words_.size(); }
  std::size_t predicted_vocab_size() const noexcept { return words_.size() - 1; }
  const std::string& word(WordId id) const { return words_.at(id); }

  WordId id(std::string_view w) const {
    auto it = index_.find(std::string(w));
    return it == index_.end() ? kUnk : it->second;
  }

  // Count table of order k (1-based): raw counts at the highest order,
  // continuation counts below it.
  const NGramCounts& counts(std::size_t k) const { return counts_.at(k - 1); }

  // p(w | history); only the last order-1 history ids are used.
  double prob(std::span<const WordId> history, WordId w) const {
    const std::size_t ctx_len = std::min(history.size(), order_ - 1);
    return prob_at(ctx_len + 1, history.subspan(history.size() - ctx_len), w);
  }

  // Log-probability (nats) of one sentence including </s>; the history
  // starts as order-1 <s> tokens.
  double sentence_log_prob(std::span<const std::string> words, std::size_t* tokens = nullptr) const {
    std::vector<WordId> seq(order_ - 1, kBos);
    seq.reserve(seq.size() + words.size() + 1);
    for (const auto& w : words) seq.push_back(id(w));
    seq.push_back(kEos);
    double lp = 0.0;
    for (std::size_t i = order_ - 1; i < seq.size(); ++i)
      lp += std::log(prob(std::span<const WordId>(seq).first(i), seq[i]));
    if (tokens) *tokens += words.size() + 1;
    return lp;
  }

  ScoredDocument score(const Document& doc, const NormalizeOptions& options = {}) const {
    const auto sentences = sentence_words(doc.text, options);
    if (sentences.empty()) throw EmptyDocument("document '" + doc.id + "' has no sentences");
    ScoredDocument s;
    s.id = doc.id;
    for (const auto& words : sentences) s.log_prob += sentence_log_prob(words, &s.tokens);
    s.per_word_log_prob = s.log_prob / static_cast<double>(s.tokens);
    s.perplexity = std::exp(-s.per_word_log_prob);
    return s;
  }

  // Binary format (little-endian): "CKLM", u32 version, u32 order, f64
  // discount, u64 vocab size, words as (u32 length, bytes) in id order, then
  // per order k = 1..N: u64 entry count and entries (k u32 ids, u64 count)
  // sorted by ids.
  void save(std::ostream& out) const {
    out.write("CKLM", 4);
    write_pod(out, kFormatVersion);
    write_pod(out, static_cast<uint32_t>(order_));
    write_pod(out, discount_);
    write_pod(out, static_cast<uint64_t>(words_.size()));
    for (const auto& w : words_) {
      write_pod(out, static_cast<uint32_t>(w.size()));
      out.write(w.data(), static_cast<std::streamsize>(w.size()));
    }
    for (const auto& table : counts_) {
      std::vector<std::pair<NGramKey, uint64_t>> sorted(table.begin(), table.end());
      std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      write_pod(out, static_cast<uint64_t>(sorted.size()));
      for (const auto& [key, c] : sorted) {
        for (WordId w : key.view()) write_pod(out, w);
        write_pod(out, c);
      }
    }
    if (!out) throw IoError("failed to write language model");
  }

  static NGramModel load(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "CKLM", 4) != 0) throw ModelFormatError("not a corpuskit LM file");
    if (read_pod<uint32_t>(in) != kFormatVersion) throw ModelFormatError("unsupported LM format version");
    NGramModel m;
    m.order_ = read_pod<uint32_t>(in);
    if (m.order_ < 1 || m.order_ > kMaxLmOrder) throw ModelFormatError("LM order out of range");
    m.discount_ = read_pod<double>(in);
    const auto vocab = read_pod<uint64_t>(in);
    if (vocab < 3) throw ModelFormatError("LM vocabulary lacks reserved tokens");
    for (uint64_t i = 0; i < vocab; ++i) {
      std::string w(read_pod<uint32_t>(in), '\0');
      if (!in.read(w.data(), static_cast<std::streamsize>(w.size()))) throw ModelFormatError("truncated vocabulary");
      m.index_.emplace(w, static_cast<WordId>(i));
      m.words_.push_back(std::move(w));
    }
    m.counts_.resize(m.order_);
    std::array<WordId, kMaxLmOrder> ids{};
    for (std::size_t k = 1; k <= m.order_; ++k) {
      const auto n = read_pod<uint64_t>(in);
      auto& table = m.counts_[k - 1];
      table.reserve(n);
      for (uint64_t e = 0; e < n; ++e) {
        for (std::size_t j = 0; j < k; ++j) {
          ids[j] = read_pod<WordId>(in);
          if (ids[j] >= vocab) throw ModelFormatError("word id out of range");
        }
        table.emplace(NGramKey(std::span<const WordId>(ids.data(), k)), read_pod<uint64_t>(in));
      }
    }
    m.rebuild_contexts();
    return m;
  }

  // ARPA text export: every n-gram with a non-zero count at its order plus
  // every context of the next order, with log10 interpolated probabilities
  // and log10 interpolation weights as backoffs.
  void write_arpa(std::ostream& out) const {
    std::vector<std::vector<NGramKey>> listed(order_);
    for (std::size_t k = 1; k <= order_; ++k) {
      std::vector<NGramKey> keys;
      for (const auto& [key, c] : counts_[k - 1]) keys.push_back(key);
      if (k < order_)
        for (const auto& [ctx, st] : contexts_[k]) keys.push_back(ctx);
      if (k == 1) {
        keys.push_back(NGramKey(std::span<const WordId>(&kUnk, 1)));
        keys.push_back(NGramKey(std::span<const WordId>(&kBos, 1)));
      }
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
      listed[k - 1] = std::move(keys);
    }
    out << "\\data\\\n";
    for (std::size_t k = 1; k <= order_; ++k) out << "ngram " << k << "=" << listed[k - 1].size() << "\n";
    char buf[64];
    for (std::size_t k = 1; k <= order_; ++k) {
      out << "\n\\" << k << "-grams:\n";
      for (const auto& key : listed[k - 1]) {
        const double lp = key.last() == kBos ? -99.0 : std::log10(prob_at(k, key.prefix().view(), key.last()));
        std::snprintf(buf, sizeof buf, "%.7f", lp);
        out << buf << '\t';
        for (uint8_t i = 0; i < key.size; ++i) out << (i ? " " : "") << words_[key.ids[i]];
        if (k < order_) {
          auto it = contexts_[k].find(key);
          if (it != contexts_[k].end() && it->second.total > 0) {
            std::snprintf(buf, sizeof buf, "%.7f", std::log10(interpolation_weight(it->second)));
            out << '\t' << buf;
          }
        }
        out << '\n';
      }
    }
    out << "\n\\end\\\n";
  }

private:
  friend class NGramTrainer;

  struct ContextStats {
    uint64_t total = 0;  // sum of counts of context extensions
    uint64_t types = 0;  // number of distinct extensions
  };
  using ContextTable = std::unordered_map<NGramKey, ContextStats, NGramKeyHash>;

  double interpolation_weight(const ContextStats& s) const {
    return discount_ * static_cast<double>(s.types) / static_cast<double>(s.total);
  }

  double prob_at(std::size_t k, std::span<const WordId> ctx, WordId w) const {
    const NGramKey ctx_key(ctx);
    auto cit = contexts_[k - 1].find(ctx_key);
    if (k == 1) {
      const ContextStats& s = cit->second;
      const double uniform = 1.0 / static_cast<double>(predicted_vocab_size());
      return (discounted(counts_[0], NGramKey(std::span<const WordId>(&w, 1))) +
              discount_ * static_cast<double>(s.types) * uniform) /
             static_cast<double>(s.total);
    }
    const double lower = prob_at(k - 1, ctx.subspan(1), w);
    if (cit == contexts_[k - 1].end() || cit->second.total == 0) return lower;
    std::array<WordId, kMaxLmOrder> ids{};
    std::copy(ctx.begin(), ctx.end(), ids.begin());
    ids[ctx.size()] = w;
    const double c = discounted(counts_[k - 1], NGramKey(std::span<const WordId>(ids.data(), k)));
    return c / static_cast<double>(cit->second.total) + interpolation_weight(cit->second) * lower;
  }

  double discounted(const NGramCounts& table, const NGramKey& key) const {
    auto it = table.find(key);
    if (it == table.end()) return 0.0;
    return std::max(static_cast<double>(it->second) - discount_, 0.0);
  }

  void rebuild_contexts() {
    contexts_.assign(order_, {});
    for (std::size_t k = 1; k <= order_; ++k) {
      for (const auto& [key, c] : counts_[k - 1]) {
        if (c == 0) continue;
        auto& s = contexts_[k - 1][key.prefix()];
        s.total += c;
        ++s.types;
      }
    }
    if (!contexts_[0].contains(NGramKey{})) throw ModelFormatError("LM has no unigram mass");
  }

  template <class T>
  static void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  template <class T>
  static T read_pod(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ModelFormatError("truncated LM file");
    return v;
  }

  std::size_t order_ = 3;
  double discount_ = 0.75;
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
  std::vector<NGramCounts> counts_;
  std::vector<ContextTable> contexts_;
};

// Accumulates highest-order counts; shards may be trained separately and
// merged (count addition is associative).
class NGramTrainer {
public:
  explicit NGramTrainer(std::size_t order = 3, double discount = 0.75) : order_(order), discount_(discount) {
    if (order < 1 || order > kMaxLmOrder) throw ConfigError("LM order must lie in [1, " + std::to_string(kMaxLmOrder) + "]");
    if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("KN discount must lie in (0, 1]");
    words_ = {"<unk>", "<s>", "</s>"};
    for (WordId i = 0; i < words_.size(); ++i) index_.emplace(words_[i], i);
  }

  void add_sentence(std::span<const std::string> words) {
    std::vector<WordId> seq(order_ - 1, NGramModel::kBos);
    for (const auto& w : words) {
      auto [it, inserted] = index_.try_emplace(w, static_cast<WordId>(words_.size()));
      if (inserted) words_.push_back(w);
      seq.push_back(it->second);
    }
    seq.push_back(NGramModel::kEos);
    for (std::size_t i = 0; i + order_ <= seq.size(); ++i)
      ++counts_[NGramKey(std::span<const WordId>(seq).subspan(i, order_))];
    ++sentences_;
  }

  void add_document(const Document& doc, const NormalizeOptions& options = {}) {
    for (const auto& words : sentence_words(doc.text, options)) add_sentence(words);
  }

  void merge(const NGramTrainer& other) {
    if (other.order_ != order_) throw ConfigError("cannot merge trainers of different order");
    std::vector<WordId> remap(other.words_.size());
    for (WordId i = 0; i < other.words_.size(); ++i) {
      auto [it, inserted] = index_.try_emplace(other.words_[i], static_cast<WordId>(words_.size()));
      if (inserted) words_.push_back(other.words_[i]);
      remap[i] = it->second;
    }
    for (const auto& [key, c] : other.counts_) {
      NGramKey k = key;
      for (uint8_t i = 0; i < k.size; ++i) k.ids[i] = remap[k.ids[i]];
      counts_[k] += c;
    }
    sentences_ += other.sentences_;
  }

  std::size_t sentences() const noexcept { return sentences_; }

  NGramModel finish() const {
    if (sentences_ == 0) throw TrainError("cannot train a language model on an empty corpus");
    NGramModel m;
    m.order_ = order_;
    m.discount_ = discount_;
    m.words_ = words_;
    m.index_ = index_;
    m.counts_.assign(order_, {});
    m.counts_[order_ - 1] = counts_;
    // Continuation count of a k-gram: distinct left extensions among the
    // (k+1)-grams with a non-zero count.
    for (std::size_t k = order_ - 1; k >= 1; --k)
      for (const auto& [key, c] : m.counts_[k])
        if (c > 0) ++m.counts_[k - 1][key.suffix()];
    // <s> is never predicted.
    m.counts_[0].erase(NGramKey(std::span<const WordId>(&NGramModel::kBos, 1)));
    m.rebuild_contexts();
    return m;
  }

private:
  std::size_t order_;
  double discount_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
  NGramCounts counts_;
  std::size_t sentences_ = 0;
};

inline NGramModel train_lm(CorpusReader& reader, std::size_t order = 3, double discount = 0.75,
                           const NormalizeOptions& options = {}) {
  NGramTrainer trainer(order, discount);
  while (auto doc = reader.next()) trainer.add_document(*doc, options);
  return trainer.finish();
}

template <class Range>
NGramModel train_lm(const Range& docs, std::size_t order = 3, double discount = 0.75,
                    const NormalizeOptions& options = {}) {
  NGramTrainer trainer(order, discount);
  for (const Document& doc : docs) trainer.add_document(doc, options);
  return trainer.finish();
}

// ---------------------------------------------------------------------------
// Rank filtering

struct RankSelection {
  std::vector<bool> keep;  // per input position
  std::size_t kept = 0;
  double threshold = 0.0;  // lowest per-word log-prob among kept documents
};

// Keeps the best ceil(retain_fraction * N) documents of each group by
// per-word log-prob (ties go to the smaller id). Unscorable documents rank
// last. `groups` may be empty, meaning a single corpus-wide group.
inline RankSelection select_by_rank(std::span<const double> scores, std::span<const std::string> ids,
                                    double retain_fraction, std::span<const std::string> groups = {}) {
  if (!(retain_fraction > 0.0 && retain_fraction <= 1.0)) throw ConfigError("retain fraction must lie in (0, 1]");
  if (scores.empty()) throw EmptyCorpus("nothing to rank");
  std::map<std::string, std::vector<std::size_t>> by_group;
  for (std::size_t i = 0; i < scores.size(); ++i) by_group[groups.empty() ? std::string() : groups[i]].push_back(i);
  RankSelection sel;
  sel.keep.assign(scores.size(), false);
  sel.threshold = std::numeric_limits<double>::infinity();
  for (auto& [group, members] : by_group) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return ids[a] < ids[b];
    });
    const double exact = retain_fraction * static_cast<double>(members.size());
    const auto n = std::min(members.size(), static_cast<std::size_t>(std::ceil(exact - 1e-9)));
    for (std::size_t r = 0; r < n; ++r) {
      sel.keep[members[r]] = true;
      sel.threshold = std::min(sel.threshold, scores[members[r]]);
    }
    sel.kept += n;
  }
  return sel;
}

inline double rank_score(const NGramModel& model, const Document& doc, const NormalizeOptions& options = {}) {
  try {
    return model.score(doc, options).per_word_log_prob;
  } catch (const EmptyDocument&) {
    return -std::numeric_limits<double>::infinity();
  }
}

struct RankFilterResult {
  std::vector<Document> kept;
  double threshold = 0.0;
};

inline RankFilterResult rank_filter(const std::vector<Document>& docs, const NGramModel& model, double retain_fraction,
                                    std::size_t threads = 1) {
  if (docs.empty()) throw EmptyCorpus("rank filter on an empty corpus");
  std::vector<double> scores(docs.size());
  std::vector<std::string> ids(docs.size());
  parallel_for(docs.size(), threads, [&](std::size_t i) {
    scores[i] = rank_score(model, docs[i]);
    ids[i] = docs[i].id;
  });
  const auto sel = select_by_rank(scores, ids, retain_fraction);
  RankFilterResult out;
  out.threshold = sel.threshold;
  for (std::size_t i = 0; i < docs.size(); ++i)
    if (sel.keep[i]) out.kept.push_back(docs[i]);
  return out;
}

}  // namespace corpuskit
