#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpuskit/corpus.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/resources.hpp"
#include "corpuskit/unicode.hpp"

namespace corpuskit {

// Character and token sets used by the rules. All are extensible.
struct RuleSets {
  std::u32string line_terminals = U".!?”।";
  std::u32string unicode_bullets = U"•‣▶⁃∙";
  // Bullets that only count when followed by whitespace.
  std::u32string ascii_bullets = U"-*";
  std::u32string brackets = U"()[]{}";
  std::vector<std::string> symbols = {"#", "...", "…"};
  std::vector<std::string> ellipses = {"...", "…"};
  std::vector<std::size_t> ngram_sizes = {2, 3, 4};
  std::size_t ngram_top_k = 1;
};

// Scores profanity/vulgarity/toxicity of a document; higher is worse.
class ContentClassifier {
public:
  virtual ~ContentClassifier() = default;
  virtual double score(std::span<const std::string> words, std::size_t bad_word_count) const = 0;
};

// Baseline: share of words found in the bad-word lexicon.
class LexiconContentClassifier final : public ContentClassifier {
public:
  double score(std::span<const std::string> words, std::size_t bad_word_count) const override {
    return words.empty() ? 0.0 : static_cast<double>(bad_word_count) / static_cast<double>(words.size());
  }
};

struct Resources {
  WordSet stopwords;
  WordSet bad_words;
  DomainBlocklist adult_domains;
  std::shared_ptr<const LanguageClassifier> language;
  std::shared_ptr<const ContentClassifier> content = std::make_shared<LexiconContentClassifier>();
  RuleSets rules;
  NormalizeOptions normalize_options;

  // Directory layout: stopwords.txt, badwords.txt, adult_domains.txt and
  // lang/<tag>.txt seed texts. Missing files leave the resource empty.
  static Resources load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ResourceError("resource directory missing: " + dir.string());
    Resources r;
    if (auto p = dir / "stopwords.txt"; std::filesystem::exists(p)) r.stopwords = load_word_list(p);
    if (auto p = dir / "badwords.txt"; std::filesystem::exists(p)) r.bad_words = load_word_list(p);
    if (auto p = dir / "adult_domains.txt"; std::filesystem::exists(p)) r.adult_domains = DomainBlocklist::load(p);
    if (auto p = dir / "lang"; std::filesystem::is_directory(p))
      r.language = std::make_shared<TrigramLanguageClassifier>(TrigramLanguageClassifier::from_directory(p));
    return r;
  }
};

// ---------------------------------------------------------------------------
// Line rules

struct LineMetrics {
  bool ends_terminal = false;
  std::size_t word_count = 0;
  bool starts_bullet = false;
  double numeric_fraction = 0.0;
};

inline LineMetrics line_metrics(std::string_view line, const RuleSets& rules = {}) {
  LineMetrics m;
  std::size_t non_space = 0;
  std::size_t digits = 0;
  char32_t first = 0, second = 0, last = 0;
  bool in_word = false;
  bool after_first = false;
  unicode::for_each_code_point(line, [&](char32_t c, std::size_t, std::size_t) {
    if (after_first) {
      second = c;
      after_first = false;
    }
    if (unicode::is_space(c)) {
      in_word = false;
      return;
    }
    if (!in_word) ++m.word_count;
    in_word = true;
    if (non_space == 0) {
      first = c;
      after_first = true;
    }
    ++non_space;
    digits += unicode::is_decimal_digit(c);
    last = c;
  });
  if (non_space == 0) return m;
  m.ends_terminal = rules.line_terminals.find(last) != std::u32string::npos;
  if (rules.unicode_bullets.find(first) != std::u32string::npos) {
    m.starts_bullet = true;
  } else if (rules.ascii_bullets.find(first) != std::u32string::npos) {
    m.starts_bullet = second != 0 && unicode::is_space(second);
  }
  m.numeric_fraction = static_cast<double>(digits) / static_cast<double>(non_space);
  return m;
}

// ---------------------------------------------------------------------------
// Word-distribution rules

// Shannon entropy of the word frequency distribution, in nats.
inline double unigram_entropy(std::span<const std::string> words) {
  if (words.empty()) throw EmptyDocument("unigram entropy of an empty word list");
  std::unordered_map<std::string_view, std::size_t> counts;
  for (const auto& w : words) ++counts[w];
  std::vector<std::size_t> sorted;
  sorted.reserve(counts.size());
  for (const auto& [w, c] : counts) sorted.push_back(c);
  std::sort(sorted.begin(), sorted.end());
  const double total = static_cast<double>(words.size());
  double h = 0.0;
  for (std::size_t c : sorted) {
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

inline double stopword_fraction(std::span<const std::string> words, const WordSet& stoplist) {
  if (words.empty()) throw EmptyDocument("stopword fraction of an empty word list");
  std::size_t hits = 0;
  for (const auto& w : words) hits += stoplist.contains(w);
  return static_cast<double>(hits) / static_cast<double>(words.size());
}

// Share of word characters covered by occurrences of the k most frequent word
// n-grams (ties go to the lexicographically smaller n-gram).
inline double top_ngram_char_fraction(std::span<const std::string> words, std::size_t n, std::size_t k) {
  if (n < 2 || k < 1) throw ConfigError("top n-gram rule needs n >= 2 and k >= 1");
  if (words.size() < n) return 0.0;

  std::unordered_map<std::string_view, uint32_t> intern;
  std::vector<uint32_t> ids(words.size());
  std::vector<std::string_view> spelling;
  std::vector<std::size_t> chars(words.size());
  std::size_t total_chars = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    auto [it, inserted] = intern.try_emplace(words[i], static_cast<uint32_t>(spelling.size()));
    if (inserted) spelling.push_back(words[i]);
    ids[i] = it->second;
    chars[i] = unicode::code_point_count(words[i]);
    total_chars += chars[i];
  }
  if (total_chars == 0) return 0.0;

  struct Gram {
    std::size_t first_pos;
    std::size_t count;
  };
  std::unordered_map<std::u32string, Gram> grams;
  std::u32string key(n, 0);
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) key[j] = ids[i + j];
    auto [it, inserted] = grams.try_emplace(key, Gram{i, 0});
    ++it->second.count;
  }

  std::vector<const std::pair<const std::u32string, Gram>*> ranked;
  ranked.reserve(grams.size());
  for (const auto& entry : grams) ranked.push_back(&entry);
  auto lex_less = [&](const std::u32string& a, const std::u32string& b) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a[j] == b[j]) continue;
      return spelling[a[j]] < spelling[b[j]];
    }
    return false;
  };
  auto better = [&](const auto* a, const auto* b) {
    if (a->second.count != b->second.count) return a->second.count > b->second.count;
    return lex_less(a->first, b->first);
  };
  const std::size_t take = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(), better);

  std::unordered_map<std::u32string, bool> selected;
  for (std::size_t i = 0; i < take; ++i) selected.emplace(ranked[i]->first, true);

  std::vector<bool> covered(words.size(), false);
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    for (std::size_t j = 0; j < n; ++j) key[j] = ids[i + j];
    if (!selected.contains(key)) continue;
    for (std::size_t j = 0; j < n; ++j) covered[i + j] = true;
  }
  std::size_t covered_chars = 0;
  for (std::size_t i = 0; i < words.size(); ++i)
    if (covered[i]) covered_chars += chars[i];
  return static_cast<double>(covered_chars) / static_cast<double>(total_chars);
}

// Character-weighted share of each language over the non-blank lines.
inline std::map<std::string, double> language_fractions(const NormalizedView& view,
                                                        const LanguageClassifier* classifier) {
  if (classifier == nullptr) throw ResourceError("no language classifier loaded");
  std::map<std::string, double> weights;
  double total = 0.0;
  for (const auto& line : view.lines) {
    std::size_t non_space = 0;
    unicode::for_each_code_point(line, [&](char32_t c, std::size_t, std::size_t) { non_space += !unicode::is_space(c); });
    if (non_space == 0) continue;
    weights[classifier->classify(line)] += static_cast<double>(non_space);
    total += static_cast<double>(non_space);
  }
  for (auto& [tag, w] : weights) w /= total;
  return weights;
}

// ---------------------------------------------------------------------------
// Document metrics

// Word-denominated and line-denominated fields are nullopt when the document
// has no words (resp. no non-blank lines); such documents are flagged empty.
struct RuleMetrics {
  std::optional<double> terminal_punct_fraction;
  std::optional<double> mean_line_word_count;
  std::optional<double> bullet_line_fraction;
  std::optional<double> mean_line_numeric_fraction;
  bool is_adult_url = false;
  std::map<std::string, double> language_fractions;
  std::size_t sentence_count = 0;
  std::size_t word_count = 0;
  std::optional<double> mean_word_length;
  std::optional<double> symbol_to_word_ratio;
  std::optional<double> ellipsis_line_fraction;
  std::optional<double> unique_word_fraction;
  std::optional<double> unigram_entropy;
  std::optional<double> stopword_fraction;
  std::map<std::size_t, std::optional<double>> top_ngram_char_fraction;  // keyed by n
  std::optional<double> content_flag_score;
  std::size_t bad_word_count = 0;
  std::optional<double> bracket_ratio;

  bool empty() const noexcept { return word_count == 0; }
};

namespace detail {

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace detail

inline RuleMetrics doc_metrics(const NormalizedView& view, const std::optional<std::string>& url,
                               const Resources& res) {
  const RuleSets& rules = res.rules;
  RuleMetrics m;

  std::size_t nonblank_lines = 0, terminal = 0, bullets = 0, ellipsis = 0;
  double numeric_sum = 0.0;
  std::size_t line_words = 0;
  for (const auto& line : view.lines) {
    const auto lm = line_metrics(line, rules);
    if (lm.word_count == 0) continue;
    ++nonblank_lines;
    terminal += lm.ends_terminal;
    bullets += lm.starts_bullet;
    numeric_sum += lm.numeric_fraction;
    line_words += lm.word_count;
    const auto trimmed = trim(line);
    for (const auto& e : rules.ellipses) {
      if (trimmed.ends_with(e)) {
        ++ellipsis;
        break;
      }
    }
  }
  if (nonblank_lines > 0) {
    const double lines = static_cast<double>(nonblank_lines);
    m.terminal_punct_fraction = static_cast<double>(terminal) / lines;
    m.mean_line_word_count = static_cast<double>(line_words) / lines;
    m.bullet_line_fraction = static_cast<double>(bullets) / lines;
    m.mean_line_numeric_fraction = numeric_sum / lines;
    m.ellipsis_line_fraction = static_cast<double>(ellipsis) / lines;
  }

  m.is_adult_url = url.has_value() && res.adult_domains.matches_url(*url);
  if (res.language) m.language_fractions = language_fractions(view, res.language.get());
  m.sentence_count = view.sentences.size();
  m.word_count = view.words.size();

  std::size_t non_space = 0, bracket_count = 0;
  unicode::for_each_code_point(view.text, [&](char32_t c, std::size_t, std::size_t) {
    if (unicode::is_space(c)) return;
    ++non_space;
    bracket_count += rules.brackets.find(c) != std::u32string::npos;
  });
  if (non_space > 0) m.bracket_ratio = static_cast<double>(bracket_count) / static_cast<double>(non_space);

  for (const auto& w : view.words) m.bad_word_count += res.bad_words.contains(w);
  for (std::size_t n : rules.ngram_sizes) m.top_ngram_char_fraction[n] = std::nullopt;
  if (m.empty()) return m;

  const auto words = std::span<const std::string>(view.words);
  const double wc = static_cast<double>(m.word_count);
  std::size_t chars = 0;
  for (const auto& w : words) chars += unicode::code_point_count(w);
  m.mean_word_length = static_cast<double>(chars) / wc;

  std::size_t symbols = 0;
  for (const auto& s : rules.symbols) symbols += detail::count_occurrences(view.text, s);
  m.symbol_to_word_ratio = static_cast<double>(symbols) / wc;

  std::unordered_set<std::string_view> unique(words.begin(), words.end());
  m.unique_word_fraction = static_cast<double>(unique.size()) / wc;
  m.unigram_entropy = unigram_entropy(words);
  m.stopword_fraction = stopword_fraction(words, res.stopwords);
  for (std::size_t n : rules.ngram_sizes) m.top_ngram_char_fraction[n] = top_ngram_char_fraction(words, n, rules.ngram_top_k);
  m.content_flag_score = res.content->score(words, m.bad_word_count);
  return m;
}

inline RuleMetrics doc_metrics(const Document& doc, const Resources& res) {
  return doc_metrics(normalize(doc.text, res.normalize_options), doc.url, res);
}

// ---------------------------------------------------------------------------
// Metric registry: the names usable in filter configurations.

inline std::string top_ngram_metric_name(std::size_t n) { return "top_" + std::to_string(n) + "gram_char_fraction"; }

inline std::vector<std::string> metric_names(const RuleSets& rules = {}) {
  std::vector<std::string> names = {
      "terminal_punct_fraction", "mean_line_word_count", "bullet_line_fraction", "mean_line_numeric_fraction",
      "is_adult_url",            "sentence_count",       "word_count",           "mean_word_length",
      "symbol_to_word_ratio",    "ellipsis_line_fraction", "unique_word_fraction", "unigram_entropy",
      "stopword_fraction",       "content_flag_score",   "bad_word_count",       "bracket_ratio"};
  for (std::size_t n : rules.ngram_sizes) names.push_back(top_ngram_metric_name(n));
  return names;
}

inline bool is_known_metric(std::string_view name, const RuleSets& rules = {}) {
  const auto names = metric_names(rules);
  return std::find(names.begin(), names.end(), name) != names.end();
}

// Numeric value of a named metric; booleans map to 0/1. nullopt for null
// (undefined) metrics and unknown names.
inline std::optional<double> metric_value(const RuleMetrics& m, std::string_view name) {
  if (name == "terminal_punct_fraction") return m.terminal_punct_fraction;
  if (name == "mean_line_word_count") return m.mean_line_word_count;
  if (name == "bullet_line_fraction") return m.bullet_line_fraction;
  if (name == "mean_line_numeric_fraction") return m.mean_line_numeric_fraction;
  if (name == "is_adult_url") return m.is_adult_url ? 1.0 : 0.0;
  if (name == "sentence_count") return static_cast<double>(m.sentence_count);
  if (name == "word_count") return static_cast<double>(m.word_count);
  if (name == "mean_word_length") return m.mean_word_length;
  if (name == "symbol_to_word_ratio") return m.symbol_to_word_ratio;
  if (name == "ellipsis_line_fraction") return m.ellipsis_line_fraction;
  if (name == "unique_word_fraction") return m.unique_word_fraction;
  if (name == "unigram_entropy") return m.unigram_entropy;
  if (name == "stopword_fraction") return m.stopword_fraction;
  if (name == "content_flag_score") return m.content_flag_score;
  if (name == "bad_word_count") return static_cast<double>(m.bad_word_count);
  if (name == "bracket_ratio") return m.bracket_ratio;
  if (name.starts_with("top_") && name.ends_with("gram_char_fraction")) {
    for (const auto& [n, v] : m.top_ngram_char_fraction)
      if (name == top_ngram_metric_name(n)) return v;
  }
  return std::nullopt;
}

inline nlohmann::ordered_json metrics_to_json(const RuleMetrics& m, const RuleSets& rules = {}) {
  nlohmann::ordered_json j;
  for (const auto& name : metric_names(rules)) {
    if (name == "is_adult_url") {
      j[name] = m.is_adult_url;
      continue;
    }
    if (name == "sentence_count" || name == "word_count" || name == "bad_word_count") {
      j[name] = static_cast<std::size_t>(*metric_value(m, name));
      continue;
    }
    auto v = metric_value(m, name);
    j[name] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  }
  auto langs = nlohmann::ordered_json::object();
  for (const auto& [tag, f] : m.language_fractions) langs[tag] = f;
  j["language_fractions"] = std::move(langs);
  return j;
}

}  // namespace corpuskit
