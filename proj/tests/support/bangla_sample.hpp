#pragma once

// Seeded synthetic Bangla text built from the bundled lexicon: Zipf-weighted
// word choice per part of speech, short template sentences ending in the
// danda. Used wherever tests need realistic script statistics at volume.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "corpuskit/corpus.hpp"
#include "corpuskit/unicode.hpp"

#ifndef CORPUSKIT_SOURCE_DIR
#define CORPUSKIT_SOURCE_DIR "."
#endif

namespace sample {

inline std::filesystem::path source_dir() { return CORPUSKIT_SOURCE_DIR; }

class ZipfPicker {
public:
  ZipfPicker() = default;
  ZipfPicker(std::vector<std::string> items, double exponent) : items_(std::move(items)) {
    double acc = 0;
    for (std::size_t r = 0; r < items_.size(); ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), exponent);
      cumulative_.push_back(acc);
    }
  }

  bool empty() const { return items_.empty(); }

  const std::string& pick(std::mt19937_64& rng) const {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return items_[std::min<std::size_t>(it - cumulative_.begin(), items_.size() - 1)];
  }

private:
  std::vector<std::string> items_;
  std::vector<double> cumulative_;
};

class BanglaGenerator {
public:
  explicit BanglaGenerator(uint64_t seed) : rng_(seed) {
    std::map<std::string, std::vector<std::string>> by_tag;
    std::ifstream lex(source_dir() / "data" / "bn_lexicon.tsv");
    if (!lex) throw std::runtime_error("bn_lexicon.tsv not found");
    std::string line;
    while (std::getline(lex, line)) {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      by_tag[line.substr(tab + 1)].push_back(line.substr(0, tab));
    }
    std::vector<std::string> stop;
    std::ifstream sw(source_dir() / "resources" / "stopwords.txt");
    while (std::getline(sw, line))
      if (!line.empty() && line[0] != '#') stop.push_back(line);

    // The lexicon is alphabetical; a seeded shuffle decides which words are
    // frequent.
    auto ranked = [&](std::vector<std::string> v) {
      std::shuffle(v.begin(), v.end(), rng_);
      return ZipfPicker(std::move(v), 1.05);
    };
    nouns_ = ranked(merge(by_tag, {"NN", "NNS", "NNP", "NNV"}));
    adjectives_ = ranked(merge(by_tag, {"JJ", "JJS", "JJR"}));
    verbs_ = ranked(merge(by_tag, {"VB", "VBG", "VBN", "VBD", "VBZ", "VBP"}));
    adverbs_ = ranked(merge(by_tag, {"RB", "RBR", "RBS"}));
    function_ = ranked(stop);
  }

  std::string sentence() {
    const std::size_t slots = 4 + rng_() % 9;
    std::string s;
    for (std::size_t i = 0; i < slots; ++i) {
      const std::string* w;
      const auto roll = rng_() % 100;
      if (i + 1 == slots)
        w = &verbs_.pick(rng_);
      else if (roll < 30)
        w = &function_.pick(rng_);
      else if (roll < 75)
        w = &nouns_.pick(rng_);
      else if (roll < 90)
        w = &adjectives_.pick(rng_);
      else
        w = &adverbs_.pick(rng_);
      if (!s.empty()) s += ' ';
      s += *w;
    }
    s += "।";
    return s;
  }

  std::string paragraph(std::size_t sentences) {
    std::string p;
    for (std::size_t i = 0; i < sentences; ++i) {
      if (i) p += ' ';
      p += sentence();
    }
    return p;
  }

  // Documents of 3-24 sentences with occasional line breaks, until the total
  // text reaches `bytes`.
  std::vector<corpuskit::Document> corpus(std::size_t bytes, const std::string& source = "web") {
    std::vector<corpuskit::Document> docs;
    std::size_t total = 0;
    while (total < bytes) {
      corpuskit::Document d;
      d.id = source + "-" + std::to_string(docs.size());
      d.source = source;
      const std::size_t n = 3 + rng_() % 22;
      for (std::size_t i = 0; i < n; ++i) {
        if (i) d.text += (rng_() % 5 == 0) ? "\n" : " ";
        d.text += sentence();
      }
      total += d.text.size();
      docs.push_back(std::move(d));
    }
    return docs;
  }

  std::mt19937_64& rng() { return rng_; }

private:
  static std::vector<std::string> merge(const std::map<std::string, std::vector<std::string>>& by_tag,
                                        std::initializer_list<const char*> tags) {
    std::vector<std::string> out;
    for (const char* t : tags)
      if (auto it = by_tag.find(t); it != by_tag.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    return out;
  }

  std::mt19937_64 rng_;
  ZipfPicker nouns_, adjectives_, verbs_, adverbs_, function_;
};

// Random valid UTF-8 weighted toward the Bengali block, mixed with ASCII,
// whitespace, Latin, CJK, emoji and joiners.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t max_code_points = 48) {
  std::string out;
  const std::size_t n = rng() % (max_code_points + 1);
  for (std::size_t i = 0; i < n; ++i) {
    char32_t c;
    const auto roll = rng() % 100;
    if (roll < 55)
      c = 0x0980 + static_cast<char32_t>(rng() % 0x80);
    else if (roll < 70)
      c = 0x20 + static_cast<char32_t>(rng() % 0x5F);
    else if (roll < 78)
      c = U" \n\t 　"[rng() % 5];
    else if (roll < 84)
      c = 0xA0 + static_cast<char32_t>(rng() % 0x1E0);
    else if (roll < 90)
      c = 0x4E00 + static_cast<char32_t>(rng() % 0x5000);
    else if (roll < 95)
      c = 0x1F300 + static_cast<char32_t>(rng() % 0x300);
    else if (roll < 98)
      c = (rng() % 2) ? 0x200C : 0x200D;
    else
      c = 0x10000 + static_cast<char32_t>(rng() % 0xF0000);
    corpuskit::unicode::append_utf8(out, c);
  }
  return out;
}

}  // namespace sample
