#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "corpuskit/corpus.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/hash.hpp"
#include "corpuskit/parallel.hpp"
#include "corpuskit/quality_rules.hpp"

namespace corpuskit {

struct Threshold {
  std::string metric;
  std::optional<double> min;
  std::optional<double> max;

  // Bounds are inclusive on both sides; a null value never satisfies.
  bool admits(std::optional<double> value) const {
    if (!value) return false;
    if (min && *value < *min) return false;
    if (max && *value > *max) return false;
    return true;
  }

  friend bool operator==(const Threshold&, const Threshold&) = default;
};

struct LanguageRule {
  std::string tag;
  double min_fraction = 0.0;
};

inline constexpr std::string_view kEmptyDocumentRule = "empty_document";
inline constexpr std::string_view kLanguageRule = "language";

struct FilterConfig {
  std::vector<Threshold> thresholds;
  std::vector<std::pair<std::string, bool>> boolean_rules;
  std::optional<LanguageRule> language;
  bool lenient = false;
  // Zero-word documents are rejected unless this is set.
  bool allow_empty = false;

  void validate(const RuleSets& rules = {}) const {
    std::vector<std::string> seen;
    auto claim = [&](const std::string& name) {
      if (std::find(seen.begin(), seen.end(), name) != seen.end())
        throw ConfigError("metric '" + name + "' appears more than once");
      seen.push_back(name);
    };
    for (const auto& t : thresholds) {
      if (!is_known_metric(t.metric, rules)) throw ConfigError("unknown metric '" + t.metric + "'");
      if (!t.min && !t.max) throw ConfigError("threshold for '" + t.metric + "' has no bound");
      if (t.min && t.max && *t.min > *t.max) throw ConfigError("threshold for '" + t.metric + "' has min > max");
      claim(t.metric);
    }
    for (const auto& [name, value] : boolean_rules) {
      if (name != "is_adult_url") throw ConfigError("unknown boolean rule '" + name + "'");
      claim(name);
    }
    if (language) {
      if (language->tag.empty()) throw ConfigError("language rule needs a tag");
      if (!(language->min_fraction >= 0.0 && language->min_fraction <= 1.0))
        throw ConfigError("language min_fraction must lie in [0,1]");
    }
  }

  // [thresholds] metric = { min = .., max = .. }; [boolean_rules] name = bool;
  // [language] tag/min_fraction; top-level lenient and allow_empty flags.
  // Rules keep the order in which they appear in the file.
  static FilterConfig from_toml_string(std::string_view text, const RuleSets& rules = {}) {
    toml::table root;
    try {
      root = toml::parse(text);
    } catch (const toml::parse_error& e) {
      throw ConfigError(std::string("TOML parse error: ") + std::string(e.description()));
    }
    FilterConfig cfg;
    cfg.lenient = root["lenient"].value_or(false);
    cfg.allow_empty = root["allow_empty"].value_or(false);

    auto in_file_order = [](const toml::table& t) {
      std::vector<std::pair<std::string, const toml::node*>> entries;
      for (const auto& [k, v] : t) entries.emplace_back(std::string(k.str()), &v);
      std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        const auto& sa = a.second->source().begin;
        const auto& sb = b.second->source().begin;
        return std::pair(sa.line, sa.column) < std::pair(sb.line, sb.column);
      });
      return entries;
    };

    if (auto* t = root["thresholds"].as_table()) {
      for (const auto& [name, node] : in_file_order(*t)) {
        const auto* bounds = node->as_table();
        if (!bounds) throw ConfigError("threshold '" + name + "' must be a table {min=.., max=..}");
        Threshold th{name, std::nullopt, std::nullopt};
        for (const auto& [bk, bv] : *bounds) {
          auto v = bv.value<double>();
          if (!v) throw ConfigError("threshold '" + name + "' bound must be numeric");
          if (bk.str() == "min")
            th.min = *v;
          else if (bk.str() == "max")
            th.max = *v;
          else
            throw ConfigError("threshold '" + name + "' has unknown key '" + std::string(bk.str()) + "'");
        }
        cfg.thresholds.push_back(std::move(th));
      }
    }
    if (auto* t = root["boolean_rules"].as_table()) {
      for (const auto& [name, node] : in_file_order(*t)) {
        auto v = node->value<bool>();
        if (!v) throw ConfigError("boolean rule '" + name + "' must be true or false");
        cfg.boolean_rules.emplace_back(name, *v);
      }
    }
    if (auto* t = root["language"].as_table()) {
      auto tag = (*t)["tag"].value<std::string>();
      auto min_fraction = (*t)["min_fraction"].value<double>();
      if (!tag || !min_fraction) throw ConfigError("[language] needs tag and min_fraction");
      cfg.language = LanguageRule{*tag, *min_fraction};
    }
    cfg.validate(rules);
    return cfg;
  }

  static FilterConfig from_toml_file(const std::filesystem::path& path, const RuleSets& rules = {}) {
    if (!std::filesystem::exists(path)) throw ConfigError("config not found: " + path.string());
    return from_toml_string(hash::read_file(path), rules);
  }
};

struct Decision {
  bool pass = true;
  std::vector<std::string> failed_rules;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["pass"] = pass;
    j["failed_rules"] = failed_rules;
    return j;
  }
};

// Evaluates every rule. failed_rules follows the order: empty-document check,
// thresholds, boolean rules, language rule.
inline Decision apply(const RuleMetrics& metrics, const FilterConfig& config) {
  Decision d;
  if (metrics.empty() && !config.allow_empty) d.failed_rules.emplace_back(kEmptyDocumentRule);
  for (const auto& t : config.thresholds)
    if (!t.admits(metric_value(metrics, t.metric))) d.failed_rules.push_back(t.metric);
  for (const auto& [name, required] : config.boolean_rules) {
    const auto v = metric_value(metrics, name);
    if (!v || (*v != 0.0) != required) d.failed_rules.push_back(name);
  }
  if (config.language) {
    auto it = metrics.language_fractions.find(config.language->tag);
    const double f = it == metrics.language_fractions.end() ? 0.0 : it->second;
    if (f < config.language->min_fraction) d.failed_rules.emplace_back(kLanguageRule);
  }
  d.pass = d.failed_rules.empty();
  return d;
}

// ---------------------------------------------------------------------------
// Calibration

enum class Side { lower, upper };

inline Side parse_side(std::string_view s) {
  if (s == "lower") return Side::lower;
  if (s == "upper") return Side::upper;
  throw ConfigError("side must be 'lower' or 'upper', got '" + std::string(s) + "'");
}

// Nearest rank ceil(p/100 * N), clamped to [1, N]. The tiny slack absorbs
// representation error in p (e.g. 0.95 * 100).
inline std::size_t nearest_rank(double percentile, std::size_t n) {
  const double exact = percentile * static_cast<double>(n) / 100.0;
  const auto rank = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(rank, 1, n);
}

// Upper side: sort ascending and bound max at the value of nearest rank
// ceil(p/100 N). Lower side mirrors it from the top, so either bound applied
// to distinct sample values retains exactly ceil(p/100 N) of them.
inline Threshold calibrate(std::vector<double> values, std::string metric, double percentile, Side side) {
  if (!(percentile > 0.0 && percentile < 100.0)) throw CalibrationError("percentile must lie in (0,100)");
  if (values.empty()) throw CalibrationError("no defined values for metric '" + metric + "'");
  std::sort(values.begin(), values.end());
  const std::size_t rank = nearest_rank(percentile, values.size());
  Threshold t{std::move(metric), std::nullopt, std::nullopt};
  if (side == Side::upper)
    t.max = values[rank - 1];
  else
    t.min = values[values.size() - rank];
  return t;
}

// Calibrates a rule metric over a corpus stream; null values are skipped.
inline Threshold calibrate(CorpusReader& sample, const Resources& resources, const std::string& metric,
                           double percentile, Side side) {
  if (!is_known_metric(metric, resources.rules)) throw ConfigError("unknown metric '" + metric + "'");
  std::vector<double> values;
  while (auto doc = sample.next()) {
    if (auto v = metric_value(doc_metrics(*doc, resources), metric)) values.push_back(*v);
  }
  return calibrate(std::move(values), metric, percentile, side);
}

// ---------------------------------------------------------------------------
// Report

inline constexpr std::size_t kHistogramBins = 64;

// Fixed-range histogram; out-of-range values land in the edge bins and nulls
// are counted separately, so shard histograms merge by addition.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::array<std::size_t, kHistogramBins> bins{};
  std::size_t nulls = 0;

  void add(std::optional<double> v) {
    if (!v) {
      ++nulls;
      return;
    }
    const double t = (*v - lo) / (hi - lo) * static_cast<double>(kHistogramBins);
    const auto bin = static_cast<std::ptrdiff_t>(std::floor(t));
    bins[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(bin, 0, kHistogramBins - 1))]++;
  }

  void merge(const Histogram& other) {
    for (std::size_t i = 0; i < kHistogramBins; ++i) bins[i] += other.bins[i];
    nulls += other.nulls;
  }

  std::size_t total() const {
    std::size_t n = nulls;
    for (auto b : bins) n += b;
    return n;
  }
};

inline std::pair<double, double> histogram_range(std::string_view metric) {
  if (metric == "mean_line_word_count") return {0.0, 64.0};
  if (metric == "sentence_count") return {0.0, 512.0};
  if (metric == "word_count") return {0.0, 8192.0};
  if (metric == "mean_word_length") return {0.0, 32.0};
  if (metric == "symbol_to_word_ratio") return {0.0, 1.0};
  if (metric == "unigram_entropy") return {0.0, 12.0};
  if (metric == "bad_word_count") return {0.0, 64.0};
  return {0.0, 1.0};
}

struct FilterReport {
  std::size_t input_count = 0;
  std::size_t pass_count = 0;
  std::size_t malformed_records = 0;
  std::map<std::string, std::size_t> first_failure_counts;
  std::map<std::string, Histogram> histograms;
  double elapsed_seconds = 0.0;

  void record(const RuleMetrics& m, const Decision& d, const RuleSets& rules) {
    ++input_count;
    if (d.pass)
      ++pass_count;
    else
      ++first_failure_counts[d.failed_rules.front()];
    for (const auto& name : metric_names(rules)) {
      auto [it, inserted] = histograms.try_emplace(name);
      if (inserted) std::tie(it->second.lo, it->second.hi) = histogram_range(name);
      it->second.add(metric_value(m, name));
    }
  }

  // Associative and commutative except for elapsed time, which is summed.
  void merge(const FilterReport& other) {
    input_count += other.input_count;
    pass_count += other.pass_count;
    malformed_records += other.malformed_records;
    for (const auto& [rule, n] : other.first_failure_counts) first_failure_counts[rule] += n;
    for (const auto& [name, h] : other.histograms) {
      auto [it, inserted] = histograms.try_emplace(name, h);
      if (!inserted) it->second.merge(h);
    }
    elapsed_seconds += other.elapsed_seconds;
  }

  nlohmann::ordered_json to_json(bool include_timing = true) const {
    nlohmann::ordered_json j;
    j["input_count"] = input_count;
    j["pass_count"] = pass_count;
    j["malformed_records"] = malformed_records;
    j["first_failure_counts"] = nlohmann::ordered_json::object();
    for (const auto& [rule, n] : first_failure_counts) j["first_failure_counts"][rule] = n;
    j["histograms"] = nlohmann::ordered_json::object();
    for (const auto& [name, h] : histograms) {
      nlohmann::ordered_json hj;
      hj["lo"] = h.lo;
      hj["hi"] = h.hi;
      hj["bins"] = h.bins;
      hj["nulls"] = h.nulls;
      j["histograms"][name] = std::move(hj);
    }
    if (include_timing) j["elapsed_seconds"] = elapsed_seconds;
    return j;
  }
};

struct PipelineOptions {
  std::size_t threads = default_thread_count();
  std::size_t batch_size = 512;  // documents per thread per batch
};

// Normalizes, measures and decides every document. Passing documents go to
// `writer` in input order; rejected ones, with their decision attached, go to
// `rejected` when given. Batches are evaluated in parallel and emitted in
// sequence order.
inline FilterReport run_pipeline(CorpusReader& reader, const FilterConfig& config, const Resources& resources,
                                 CorpusWriter& writer, CorpusWriter* rejected = nullptr,
                                 const PipelineOptions& options = {}) {
  config.validate(resources.rules);
  if (config.language && !resources.language)
    throw ResourceError("language rule configured but no language classifier loaded");
  const auto started = std::chrono::steady_clock::now();
  FilterReport report;
  const std::size_t threads = std::max<std::size_t>(1, options.threads);
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size) * threads;

  std::vector<Document> docs;
  std::vector<RuleMetrics> metrics;
  std::vector<Decision> decisions;
  while (true) {
    docs.clear();
    while (docs.size() < batch) {
      auto doc = reader.next();
      if (!doc) break;
      docs.push_back(std::move(*doc));
    }
    if (docs.empty()) break;
    metrics.assign(docs.size(), {});
    decisions.assign(docs.size(), {});
    parallel_for(docs.size(), threads, [&](std::size_t i) {
      metrics[i] = doc_metrics(docs[i], resources);
      decisions[i] = apply(metrics[i], config);
    });
    for (std::size_t i = 0; i < docs.size(); ++i) {
      report.record(metrics[i], decisions[i], resources.rules);
      if (decisions[i].pass)
        writer.write(docs[i]);
      else if (rejected)
        rejected->write(docs[i], "decision", decisions[i].to_json());
    }
  }
  report.malformed_records = reader.skipped();
  report.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace corpuskit
