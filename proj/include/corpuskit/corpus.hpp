#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "corpuskit/error.hpp"
#include "corpuskit/unicode.hpp"

namespace corpuskit {

inline constexpr char kPageSeparator = '\f';

struct WordConfidence {
  std::string word;
  double confidence = 0.0;

  friend bool operator==(const WordConfidence&, const WordConfidence&) = default;
};

struct Page {
  std::size_t index = 0;
  std::string text;
  std::optional<std::vector<WordConfidence>> word_confidences;

  friend bool operator==(const Page&, const Page&) = default;
};

struct Document {
  std::string id;
  std::string source;
  std::optional<std::string> url;
  std::string text;
  std::optional<std::vector<Page>> pages;
  std::map<std::string, std::string> meta;

  friend bool operator==(const Document&, const Document&) = default;
};

inline std::string join_pages(const std::vector<Page>& pages) {
  std::string out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (i) out.push_back(kPageSeparator);
    out += pages[i].text;
  }
  return out;
}

// Builds a paginated document whose text is the form-feed join of its pages.
inline Document make_paginated(std::string id, std::string source, std::vector<Page> pages) {
  for (std::size_t i = 0; i < pages.size(); ++i) pages[i].index = i;
  Document doc;
  doc.id = std::move(id);
  doc.source = std::move(source);
  doc.text = join_pages(pages);
  doc.pages = std::move(pages);
  return doc;
}

// ---------------------------------------------------------------------------
// Segmentation

// Sentence terminators; the danda is included alongside the Latin marks.
inline const std::u32string& default_sentence_terminators() {
  static const std::u32string kTerminators = U".!?।";
  return kTerminators;
}

// Splits whitespace-delimited words. Replaceable for language-specific word
// segmenters through NormalizeOptions::word_splitter.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t start = std::string_view::npos;
  unicode::for_each_code_point(text, [&](char32_t c, std::size_t off, std::size_t) {
    if (unicode::is_space(c)) {
      if (start != std::string_view::npos) {
        words.emplace_back(text.substr(start, off - start));
        start = std::string_view::npos;
      }
    } else if (start == std::string_view::npos) {
      start = off;
    }
  });
  if (start != std::string_view::npos) words.emplace_back(text.substr(start));
  return words;
}

inline std::size_t count_words(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  unicode::for_each_code_point(text, [&](char32_t c, std::size_t, std::size_t) {
    const bool space = unicode::is_space(c);
    if (!space && !in_word) ++n;
    in_word = !space;
  });
  return n;
}

inline std::string_view trim(std::string_view s) {
  std::size_t begin = s.size();
  std::size_t end = 0;
  unicode::for_each_code_point(s, [&](char32_t c, std::size_t off, std::size_t len) {
    if (unicode::is_space(c)) return;
    if (begin == s.size()) begin = off;
    end = off + len;
  });
  if (begin == s.size()) return {};
  return s.substr(begin, end - begin);
}

// Cuts after each run of terminator code points; the terminator stays
// attached to its sentence and surrounding whitespace is trimmed.
inline std::vector<std::string> segment_sentences(
    std::string_view text, const std::u32string& terminators = default_sentence_terminators()) {
  std::vector<std::string> sentences;
  std::size_t start = 0;
  bool in_terminator_run = false;
  auto flush = [&](std::size_t end) {
    auto piece = trim(text.substr(start, end - start));
    if (!piece.empty()) sentences.emplace_back(piece);
    start = end;
  };
  unicode::for_each_code_point(text, [&](char32_t c, std::size_t off, std::size_t) {
    const bool is_term = terminators.find(c) != std::u32string::npos;
    if (in_terminator_run && !is_term) flush(off);
    in_terminator_run = is_term;
  });
  flush(text.size());
  return sentences;
}

inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (true) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

struct NormalizeOptions {
  std::u32string sentence_terminators = default_sentence_terminators();
  std::function<std::vector<std::string>(std::string_view)> word_splitter;
};

struct NormalizedView {
  std::string text;
  std::vector<std::string> lines;
  std::vector<std::string> words;
  std::vector<std::string> sentences;
};

inline NormalizedView normalize(std::string_view text, const NormalizeOptions& options = {}) {
  NormalizedView view;
  view.text = unicode::to_nfc(text);
  view.lines = split_lines(view.text);
  view.words = options.word_splitter ? options.word_splitter(view.text) : split_words(view.text);
  view.sentences = segment_sentences(view.text, options.sentence_terminators);
  return view;
}

// ---------------------------------------------------------------------------
// JSONL schema

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw RecordError(line, std::string("missing field \"") + key + "\"");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  const auto& v = require_field(obj, key, line);
  if (!v.is_string()) throw RecordError(line, std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

inline Page page_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw RecordError(line, "page must be an object");
  Page page;
  const auto& index = require_field(j, "index", line);
  if (!index.is_number_unsigned() && !(index.is_number_integer() && index.get<long long>() >= 0))
    throw RecordError(line, "page index must be a non-negative integer");
  page.index = index.get<std::size_t>();
  page.text = require_string(j, "text", line);
  auto wc = j.find("word_confidences");
  if (wc != j.end() && !wc->is_null()) {
    if (!wc->is_array()) throw RecordError(line, "word_confidences must be an array or null");
    std::vector<WordConfidence> entries;
    entries.reserve(wc->size());
    for (const auto& e : *wc) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number())
        throw RecordError(line, "word_confidences entries must be [string, number]");
      const double conf = e[1].get<double>();
      if (!(conf >= 0.0 && conf <= 1.0)) throw RecordError(line, "confidence outside [0,1]");
      entries.push_back({e[0].get<std::string>(), conf});
    }
    page.word_confidences = std::move(entries);
  }
  return page;
}

}  // namespace detail

// Parses and validates one record. `line` is used for error messages only.
inline Document document_from_json(const nlohmann::json& j, std::size_t line = 0) {
  if (!j.is_object()) throw RecordError(line, "record must be a JSON object");
  Document doc;
  doc.id = detail::require_string(j, "id", line);
  if (doc.id.empty()) throw RecordError(line, "empty id");
  doc.source = detail::require_string(j, "source", line);
  doc.text = detail::require_string(j, "text", line);
  if (auto it = j.find("url"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw RecordError(line, "url must be a string or null");
    doc.url = it->get<std::string>();
  }
  if (auto it = j.find("pages"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw RecordError(line, "pages must be an array or null");
    std::vector<Page> pages;
    for (const auto& p : *it) pages.push_back(detail::page_from_json(p, line));
    for (std::size_t i = 0; i < pages.size(); ++i)
      if (pages[i].index != i) throw RecordError(line, "page indices must be contiguous from 0");
    if (join_pages(pages) != doc.text) throw RecordError(line, "text does not equal the form-feed join of pages");
    doc.pages = std::move(pages);
  }
  if (auto it = j.find("meta"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) throw RecordError(line, "meta must be an object");
    for (const auto& [k, v] : it->items()) {
      if (!v.is_string()) throw RecordError(line, "meta values must be strings");
      doc.meta.emplace(k, v.get<std::string>());
    }
  }
  return doc;
}

inline nlohmann::ordered_json document_to_json(const Document& doc) {
  nlohmann::ordered_json j;
  j["id"] = doc.id;
  j["source"] = doc.source;
  j["url"] = doc.url ? nlohmann::ordered_json(*doc.url) : nlohmann::ordered_json(nullptr);
  j["text"] = doc.text;
  if (doc.pages) {
    auto pages = nlohmann::ordered_json::array();
    for (const auto& p : *doc.pages) {
      nlohmann::ordered_json pj;
      pj["index"] = p.index;
      pj["text"] = p.text;
      if (p.word_confidences) {
        auto wc = nlohmann::ordered_json::array();
        for (const auto& e : *p.word_confidences) wc.push_back(nlohmann::ordered_json::array({e.word, e.confidence}));
        pj["word_confidences"] = std::move(wc);
      } else {
        pj["word_confidences"] = nullptr;
      }
      pages.push_back(std::move(pj));
    }
    j["pages"] = std::move(pages);
  } else {
    j["pages"] = nullptr;
  }
  auto meta = nlohmann::ordered_json::object();
  for (const auto& [k, v] : doc.meta) meta[k] = v;
  j["meta"] = std::move(meta);
  return j;
}

inline std::string dump_line(const nlohmann::ordered_json& j) {
  return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::strict);
}

// ---------------------------------------------------------------------------
// Streams

struct ReadOptions {
  bool lenient = false;  // skip malformed records instead of throwing
};

class CorpusReader {
public:
  explicit CorpusReader(const std::filesystem::path& path, ReadOptions options = {})
      : owned_(std::make_unique<std::ifstream>(path, std::ios::binary)), in_(owned_.get()), options_(options) {
    if (!*owned_) throw IoError("cannot open corpus " + path.string());
  }
  explicit CorpusReader(std::istream& in, ReadOptions options = {}) : in_(&in), options_(options) {}

  std::optional<Document> next() {
    std::string line;
    while (std::getline(*in_, line)) {
      ++line_number_;
      if (line.empty()) continue;
      try {
        auto j = nlohmann::json::parse(line);
        Document doc = document_from_json(j, line_number_);
        if (!seen_ids_.insert(doc.id).second) throw RecordError(line_number_, "duplicate id \"" + doc.id + "\"");
        return doc;
      } catch (const nlohmann::json::exception& e) {
        if (!options_.lenient) throw RecordError(line_number_, e.what());
        ++skipped_;
      } catch (const RecordError&) {
        if (!options_.lenient) throw;
        ++skipped_;
      }
    }
    if (in_->bad()) throw IoError("read failure after line " + std::to_string(line_number_));
    return std::nullopt;
  }

  std::size_t skipped() const noexcept { return skipped_; }
  std::size_t line_number() const noexcept { return line_number_; }

private:
  std::unique_ptr<std::ifstream> owned_;
  std::istream* in_;
  ReadOptions options_;
  std::size_t line_number_ = 0;
  std::size_t skipped_ = 0;
  std::unordered_set<std::string> seen_ids_;
};

// Writes to "<path>.partial" and renames on commit(); an uncommitted file is
// removed on destruction so failed stages leave no partial output behind.
class OutputFile {
public:
  explicit OutputFile(std::filesystem::path path) : path_(std::move(path)), partial_(path_) {
    partial_ += ".partial";
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    out_.open(partial_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot create " + partial_.string());
  }
  OutputFile(const OutputFile&) = delete;
  OutputFile& operator=(const OutputFile&) = delete;
  ~OutputFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(partial_, ec);
    }
  }

  std::ostream& stream() { return out_; }
  const std::filesystem::path& path() const { return path_; }

  void commit() {
    out_.flush();
    if (!out_) throw IoError("write failure on " + partial_.string());
    out_.close();
    std::filesystem::rename(partial_, path_);
    committed_ = true;
  }

private:
  std::filesystem::path path_;
  std::filesystem::path partial_;
  std::ofstream out_;
  bool committed_ = false;
};

class CorpusWriter {
public:
  explicit CorpusWriter(std::ostream& out) : out_(&out) {}

  void write(const Document& doc) { write_json(document_to_json(doc)); }

  // Writes the document with one extra top-level field (e.g. "decision").
  void write(const Document& doc, const std::string& extra_key, nlohmann::ordered_json extra) {
    auto j = document_to_json(doc);
    j[extra_key] = std::move(extra);
    write_json(j);
  }

  std::size_t count() const noexcept { return count_; }

private:
  void write_json(const nlohmann::ordered_json& j) {
    *out_ << dump_line(j) << '\n';
    if (!*out_) throw IoError("corpus write failed");
    ++count_;
  }

  std::ostream* out_;
  std::size_t count_ = 0;
};

inline std::vector<Document> read_corpus(const std::filesystem::path& path, ReadOptions options = {}) {
  CorpusReader reader(path, options);
  std::vector<Document> docs;
  while (auto doc = reader.next()) docs.push_back(std::move(*doc));
  return docs;
}

template <class Range>
std::size_t write_corpus(const std::filesystem::path& path, const Range& docs) {
  OutputFile file(path);
  CorpusWriter writer(file.stream());
  for (const Document& doc : docs) writer.write(doc);
  file.commit();
  return writer.count();
}

}  // namespace corpuskit
