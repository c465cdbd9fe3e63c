#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "corpuskit/corpus.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/hash.hpp"
#include "corpuskit/unicode.hpp"

namespace corpuskit {

using WordSet = std::unordered_set<std::string>;

// One entry per line, UTF-8. Entries are trimmed and NFC-normalized so they
// compare equal to normalized document words; blank lines and lines starting
// with '#' are ignored.
inline WordSet load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open word list " + path.string());
  WordSet words;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto entry = trim(line);
    if (entry.empty() || entry.starts_with('#')) continue;
    if (!unicode::is_valid_utf8(entry))
      throw ResourceError(path.string() + ":" + std::to_string(line_no) + ": invalid UTF-8");
    words.insert(unicode::to_nfc(entry));
  }
  return words;
}

// Host part of an absolute or scheme-less URL, lowercased, without port,
// credentials or trailing dot.
inline std::string url_host(std::string_view url) {
  if (auto scheme = url.find("://"); scheme != std::string_view::npos)
    url.remove_prefix(scheme + 3);
  else if (url.starts_with("//"))
    url.remove_prefix(2);
  url = url.substr(0, url.find_first_of("/?#"));
  if (auto at = url.rfind('@'); at != std::string_view::npos) url.remove_prefix(at + 1);
  if (!url.starts_with('[')) url = url.substr(0, url.find(':'));
  std::string host(url);
  std::transform(host.begin(), host.end(), host.begin(),
                 [](unsigned char c) { return static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c); });
  while (!host.empty() && host.back() == '.') host.pop_back();
  return host;
}

// Registered-domain blocklist. A URL matches when its host, or any parent
// domain of the host, is listed ("www.example.com" matches "example.com").
class DomainBlocklist {
public:
  DomainBlocklist() = default;
  explicit DomainBlocklist(const WordSet& domains) {
    for (const auto& d : domains) domains_.insert(url_host(d));
  }
  static DomainBlocklist load(const std::filesystem::path& path) { return DomainBlocklist(load_word_list(path)); }

  bool matches_url(std::string_view url) const { return matches_host(url_host(url)); }

  bool matches_host(std::string_view host) const {
    while (!host.empty()) {
      if (domains_.contains(std::string(host))) return true;
      const auto dot = host.find('.');
      if (dot == std::string_view::npos) break;
      host.remove_prefix(dot + 1);
    }
    return false;
  }

  std::size_t size() const noexcept { return domains_.size(); }

private:
  WordSet domains_;
};

// ---------------------------------------------------------------------------
// Language identification

inline constexpr std::string_view kUndeterminedLanguage = "und";

class LanguageClassifier {
public:
  virtual ~LanguageClassifier() = default;
  // Language tag of one line, or kUndeterminedLanguage.
  virtual std::string classify(std::string_view line) const = 0;
};

// Character-trigram profile similarity. Each language profile is the
// L2-normalized trigram frequency vector of its seed text; a line goes to the
// profile with the largest dot product against the line's trigram counts.
class TrigramLanguageClassifier final : public LanguageClassifier {
public:
  explicit TrigramLanguageClassifier(const std::map<std::string, std::string>& seed_texts) {
    if (seed_texts.empty()) throw ResourceError("language classifier needs at least one seed text");
    for (const auto& [tag, text] : seed_texts) tags_.push_back(tag);
    for (std::size_t lang = 0; lang < tags_.size(); ++lang) {
      std::unordered_map<uint64_t, double> counts;
      for_each_trigram(seed_texts.at(tags_[lang]), [&](uint64_t t) { counts[t] += 1.0; });
      double norm = 0.0;
      for (const auto& [t, c] : counts) norm += c * c;
      norm = std::sqrt(norm);
      if (norm == 0.0) throw ResourceError("seed text for '" + tags_[lang] + "' has no trigrams");
      for (const auto& [t, c] : counts) {
        auto& weights = profiles_[t];
        weights.resize(tags_.size(), 0.0);
        weights[lang] = c / norm;
      }
    }
  }

  // Loads every "<tag>.txt" file in `dir` as a seed text.
  static TrigramLanguageClassifier from_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ResourceError("language seed directory missing: " + dir.string());
    std::map<std::string, std::string> seeds;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".txt") continue;
      seeds[entry.path().stem().string()] = unicode::to_nfc(hash::read_file(entry.path()));
    }
    return TrigramLanguageClassifier(seeds);
  }

  std::string classify(std::string_view line) const override {
    std::vector<double> score(tags_.size(), 0.0);
    for_each_trigram(line, [&](uint64_t t) {
      auto it = profiles_.find(t);
      if (it == profiles_.end()) return;
      for (std::size_t i = 0; i < score.size(); ++i) score[i] += it->second[i];
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < score.size(); ++i)
      if (score[i] > score[best]) best = i;
    if (score[best] <= 0.0) return std::string(kUndeterminedLanguage);
    return tags_[best];
  }

  const std::vector<std::string>& tags() const noexcept { return tags_; }

private:
  // Lowercased code points with whitespace runs collapsed to one space and a
  // space added at both ends.
  template <class F>
  static void for_each_trigram(std::string_view text, F&& f) {
    char32_t a = U' ', b = 0;
    int filled = 1;
    bool last_space = true;
    auto push = [&](char32_t c) {
      if (filled == 1) {
        b = c;
        filled = 2;
        return;
      }
      f((static_cast<uint64_t>(a) << 42) | (static_cast<uint64_t>(b) << 21) | static_cast<uint64_t>(c));
      a = b;
      b = c;
    };
    unicode::for_each_code_point(text, [&](char32_t c, std::size_t, std::size_t) {
      if (unicode::is_space(c)) {
        if (last_space) return;
        last_space = true;
        push(U' ');
      } else {
        last_space = false;
        push(unicode::to_lower(c));
      }
    });
    if (!last_space) push(U' ');
  }

  std::vector<std::string> tags_;
  std::unordered_map<uint64_t, std::vector<double>> profiles_;
};

}  // namespace corpuskit
