#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpuskit/corpus.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/filter.hpp"
#include "corpuskit/resources.hpp"

namespace corpuskit {

struct BookStats {
  std::size_t pages = 0;
  std::size_t words = 0;
  std::size_t sentences = 0;
  double avg_words_per_page = 0.0;
  double avg_sentences_per_page = 0.0;
  double lexicon_coverage = 0.0;
  // Entries with confidence strictly above the cutoff; -1 when the book
  // carries no confidence data at all.
  int64_t high_confidence_words = -1;
  std::size_t confidence_entries = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pages"] = pages;
    j["avg_words_per_page"] = avg_words_per_page;
    j["avg_sentences_per_page"] = avg_sentences_per_page;
    j["lexicon_coverage"] = lexicon_coverage;
    j["high_confidence_words"] = high_confidence_words;
    return j;
  }
};

inline constexpr double kDefaultConfidenceCutoff = 0.8;

inline BookStats book_stats(const Document& doc, const WordSet& lexicon,
                            double confidence_cutoff = kDefaultConfidenceCutoff,
                            const NormalizeOptions& options = {}) {
  if (!doc.pages || doc.pages->empty()) throw NotPaginated("document '" + doc.id + "' has no pages");
  BookStats s;
  s.pages = doc.pages->size();
  std::size_t in_lexicon = 0;
  bool has_confidences = false;
  int64_t confident = 0;
  for (const auto& page : *doc.pages) {
    const auto view = normalize(page.text, options);
    s.words += view.words.size();
    s.sentences += view.sentences.size();
    for (const auto& w : view.words) in_lexicon += lexicon.contains(w);
    if (page.word_confidences) {
      has_confidences = true;
      s.confidence_entries += page.word_confidences->size();
      for (const auto& wc : *page.word_confidences) confident += wc.confidence > confidence_cutoff;
    }
  }
  const double pages = static_cast<double>(s.pages);
  s.avg_words_per_page = static_cast<double>(s.words) / pages;
  s.avg_sentences_per_page = static_cast<double>(s.sentences) / pages;
  s.lexicon_coverage = s.words == 0 ? 0.0 : static_cast<double>(in_lexicon) / static_cast<double>(s.words);
  if (has_confidences) s.high_confidence_words = confident;
  return s;
}

struct ConfidencePercentileRule {
  double percentile = 95.0;
  // lower: drop books with the fewest confident words (default);
  // upper: drop books with the most.
  Side side = Side::lower;
};

struct OcrFilterConfig {
  double min_words_per_page = 0.0;
  double min_sentences_per_page = 0.0;
  double min_coverage = 0.0;
  std::optional<ConfidencePercentileRule> confidence_rule;
  double confidence_cutoff = kDefaultConfidenceCutoff;
};

struct OcrFilterResult {
  std::vector<bool> keep;
  std::vector<BookStats> stats;
  std::optional<Threshold> confidence_threshold;
  std::size_t kept = 0;
};

// Applies the minimum bounds and, when configured, a percentile rule on
// high-confidence word counts calibrated over the books that carry
// confidence data. Books without confidence data fail the percentile rule.
inline OcrFilterResult ocr_select(const std::vector<Document>& books, const WordSet& lexicon,
                                  const OcrFilterConfig& config, const NormalizeOptions& options = {}) {
  OcrFilterResult r;
  r.stats.reserve(books.size());
  for (const auto& b : books) r.stats.push_back(book_stats(b, lexicon, config.confidence_cutoff, options));
  if (config.confidence_rule) {
    std::vector<double> counts;
    for (const auto& s : r.stats)
      if (s.high_confidence_words >= 0) counts.push_back(static_cast<double>(s.high_confidence_words));
    r.confidence_threshold =
        calibrate(std::move(counts), "high_confidence_words", config.confidence_rule->percentile, config.confidence_rule->side);
  }
  r.keep.assign(books.size(), false);
  for (std::size_t i = 0; i < books.size(); ++i) {
    const auto& s = r.stats[i];
    bool ok = s.avg_words_per_page >= config.min_words_per_page &&
              s.avg_sentences_per_page >= config.min_sentences_per_page && s.lexicon_coverage >= config.min_coverage;
    if (ok && r.confidence_threshold) {
      const std::optional<double> v =
          s.high_confidence_words >= 0 ? std::optional<double>(static_cast<double>(s.high_confidence_words)) : std::nullopt;
      ok = r.confidence_threshold->admits(v);
    }
    r.keep[i] = ok;
    r.kept += ok;
  }
  return r;
}

inline std::vector<Document> ocr_filter(const std::vector<Document>& books, const WordSet& lexicon,
                                        const OcrFilterConfig& config, const NormalizeOptions& options = {}) {
  const auto sel = ocr_select(books, lexicon, config, options);
  std::vector<Document> kept;
  kept.reserve(sel.kept);
  for (std::size_t i = 0; i < books.size(); ++i)
    if (sel.keep[i]) kept.push_back(books[i]);
  return kept;
}

}  // namespace corpuskit
