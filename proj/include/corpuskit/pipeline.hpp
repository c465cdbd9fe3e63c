#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "corpuskit/corpus.hpp"
#include "corpuskit/dedup.hpp"
#include "corpuskit/error.hpp"
#include "corpuskit/filter.hpp"
#include "corpuskit/hash.hpp"
#include "corpuskit/ngram_lm.hpp"
#include "corpuskit/ocr_quality.hpp"
#include "corpuskit/parallel.hpp"
#include "corpuskit/quality_rules.hpp"
#include "corpuskit/tokenizer.hpp"

namespace corpuskit {

namespace fs = std::filesystem;

enum class StageKind { filter, dedup, lm_filter, ocr_filter, tok_train, tok_merge, tok_eval };

inline std::string_view stage_name(StageKind k) {
  switch (k) {
    case StageKind::filter: return "filter";
    case StageKind::dedup: return "dedup";
    case StageKind::lm_filter: return "lm-filter";
    case StageKind::ocr_filter: return "ocr-filter";
    case StageKind::tok_train: return "tok-train";
    case StageKind::tok_merge: return "tok-merge";
    case StageKind::tok_eval: return "tok-eval";
  }
  return "?";
}

inline StageKind parse_stage_kind(std::string_view s) {
  for (auto k : {StageKind::filter, StageKind::dedup, StageKind::lm_filter, StageKind::ocr_filter, StageKind::tok_train,
                 StageKind::tok_merge, StageKind::tok_eval})
    if (stage_name(k) == s) return k;
  throw ConfigError("unknown stage kind '" + std::string(s) + "'");
}

inline bool stage_needs_config(StageKind k) { return k != StageKind::dedup && k != StageKind::tok_eval; }

struct StageSpec {
  StageKind kind = StageKind::filter;
  std::optional<fs::path> config;
  std::optional<fs::path> input;   // corpus input override
  std::optional<fs::path> output;  // default <workdir>/<NN>-<kind>.<ext>
};

// Plan file (TOML):
//   seed, threads, input, workdir, resources at top level, then an ordered
//   [[stage]] array with kind, config, and optional input/output overrides.
// Relative paths resolve against the plan file's directory.
struct PipelinePlan {
  uint64_t seed = 1;
  std::size_t threads = default_thread_count();
  fs::path base_dir = ".";
  fs::path input;
  fs::path workdir = "out";
  std::optional<fs::path> resources;
  std::vector<StageSpec> stages;

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

  void validate() const {
    if (stages.empty()) return;
    if (input.empty()) throw ConfigError("plan has stages but no input corpus");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      const std::string where = "stage " + std::to_string(i) + " (" + std::string(stage_name(s.kind)) + ")";
      if (stage_needs_config(s.kind) && !s.config) throw ConfigError(where + " needs a config");
      if (s.config && !fs::exists(resolve(*s.config)))
        throw ConfigError(where + " references missing config " + s.config->string());
    }
    if (resources && !fs::is_directory(resolve(*resources)))
      throw ResourceError("resource directory missing: " + resources->string());
  }

  static PipelinePlan from_toml_string(std::string_view text, fs::path base_dir = ".") {
    toml::table root;
    try {
      root = toml::parse(text);
    } catch (const toml::parse_error& e) {
      throw ConfigError(std::string("plan parse error: ") + std::string(e.description()));
    }
    PipelinePlan plan;
    plan.base_dir = std::move(base_dir);
    if (auto v = root["seed"].value<int64_t>()) {
      if (*v < 0) throw ConfigError("seed must be non-negative");
      plan.seed = static_cast<uint64_t>(*v);
    }
    if (auto v = root["threads"].value<int64_t>()) {
      if (*v < 1) throw ConfigError("threads must be positive");
      plan.threads = static_cast<std::size_t>(*v);
    }
    if (auto v = root["input"].value<std::string>()) plan.input = *v;
    if (auto v = root["workdir"].value<std::string>()) plan.workdir = *v;
    if (auto v = root["resources"].value<std::string>()) plan.resources = fs::path(*v);
    if (auto* arr = root["stage"].as_array()) {
      for (const auto& node : *arr) {
        const auto* t = node.as_table();
        if (!t) throw ConfigError("[[stage]] entries must be tables");
        auto kind = (*t)["kind"].value<std::string>();
        if (!kind) throw ConfigError("stage without kind");
        StageSpec s;
        s.kind = parse_stage_kind(*kind);
        if (auto v = (*t)["config"].value<std::string>()) s.config = fs::path(*v);
        if (auto v = (*t)["input"].value<std::string>()) s.input = fs::path(*v);
        if (auto v = (*t)["output"].value<std::string>()) s.output = fs::path(*v);
        plan.stages.push_back(std::move(s));
      }
    }
    plan.validate();
    return plan;
  }

  static PipelinePlan from_toml_file(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("plan not found: " + path.string());
    return from_toml_string(hash::read_file(path), path.parent_path().empty() ? fs::path(".") : path.parent_path());
  }
};

struct StageResult {
  std::size_t index = 0;
  StageKind kind = StageKind::filter;
  fs::path output;
  fs::path manifest_path;
  nlohmann::ordered_json manifest;
};

struct PlanResult {
  std::vector<StageResult> stages;
};

namespace detail {

inline toml::table load_stage_table(const std::optional<fs::path>& path) {
  if (!path) return {};
  try {
    return toml::parse_file(path->string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(path->string() + ": " + std::string(e.description()));
  }
}

template <class T>
T require_key(const toml::table& t, const char* key) {
  auto v = t[key].value<T>();
  if (!v) throw ConfigError(std::string("stage config needs '") + key + "'");
  return *v;
}

class PlanRunner {
public:
  explicit PlanRunner(const PipelinePlan& plan) : plan_(plan) {}

  PlanResult run() {
    plan_.validate();
    PlanResult result;
    if (plan_.stages.empty()) return result;
    corpus_ = plan_.resolve(plan_.input);
    for (std::size_t i = 0; i < plan_.stages.size(); ++i) {
      const auto& spec = plan_.stages[i];
      try {
        result.stages.push_back(run_stage(i, spec));
      } catch (const StageError&) {
        throw;
      } catch (const Error& e) {
        throw StageError(i, std::string(stage_name(spec.kind)), e.kind(), e.what());
      } catch (const std::exception& e) {
        throw StageError(i, std::string(stage_name(spec.kind)), "IoError", e.what());
      }
    }
    return result;
  }

private:
  std::string rel(const fs::path& p) const {
    auto r = p.lexically_relative(plan_.base_dir);
    return (r.empty() ? p : r).generic_string();
  }

  nlohmann::ordered_json file_ref(const fs::path& p) const {
    return {{"path", rel(p)}, {"sha256", hash::sha256_file(p)}};
  }

  fs::path default_output(std::size_t i, StageKind kind) const {
    std::string ext = ".jsonl";
    if (kind == StageKind::tok_train || kind == StageKind::tok_merge) ext = ".tok";
    if (kind == StageKind::tok_eval) ext = ".json";
    char prefix[8];
    std::snprintf(prefix, sizeof prefix, "%02zu-", i);
    return plan_.resolve(plan_.workdir) / (prefix + std::string(stage_name(kind)) + ext);
  }

  const Resources& resources() {
    if (!resources_) resources_ = plan_.resources ? Resources::load(plan_.resolve(*plan_.resources)) : Resources{};
    return *resources_;
  }

  StageResult run_stage(std::size_t i, const StageSpec& spec) {
    StageResult r;
    r.index = i;
    r.kind = spec.kind;
    r.output = spec.output ? plan_.resolve(*spec.output) : default_output(i, spec.kind);
    r.manifest_path = r.output;
    r.manifest_path += ".manifest.json";
    const fs::path input = spec.input ? plan_.resolve(*spec.input) : corpus_;
    const std::optional<fs::path> config = spec.config ? std::optional(plan_.resolve(*spec.config)) : std::nullopt;

    nlohmann::ordered_json m;
    m["stage"] = i;
    m["kind"] = stage_name(spec.kind);
    m["seed"] = plan_.seed;
    m["config"] = config ? file_ref(*config) : nlohmann::ordered_json(nullptr);
    m["inputs"] = nlohmann::ordered_json::array();
    nlohmann::ordered_json counts;

    OutputFile out(r.output);
    switch (spec.kind) {
      case StageKind::filter: counts = run_filter(input, *config, out, m); break;
      case StageKind::dedup: counts = run_dedup(input, config, out, r.output, m); break;
      case StageKind::lm_filter: counts = run_lm_filter(input, *config, out, m); break;
      case StageKind::ocr_filter: counts = run_ocr_filter(input, *config, out, m); break;
      case StageKind::tok_train: counts = run_tok_train(input, *config, out, m); break;
      case StageKind::tok_merge: counts = run_tok_merge(*config, out, m); break;
      case StageKind::tok_eval: counts = run_tok_eval(input, config, out, m); break;
    }
    out.commit();
    m["output"] = file_ref(r.output);
    m["counts"] = std::move(counts);

    OutputFile manifest(r.manifest_path);
    manifest.stream() << m.dump(2) << '\n';
    manifest.commit();
    r.manifest = std::move(m);

    switch (spec.kind) {
      case StageKind::tok_train:
      case StageKind::tok_merge: tokenizer_ = r.output; break;
      case StageKind::tok_eval: break;
      default: corpus_ = r.output;
    }
    return r;
  }

  nlohmann::ordered_json run_filter(const fs::path& input, const fs::path& config, OutputFile& out,
                                    nlohmann::ordered_json& m) {
    const auto& res = resources();
    const auto cfg = FilterConfig::from_toml_file(config, res.rules);
    m["inputs"].push_back(file_ref(input));
    CorpusReader reader(input, {cfg.lenient});
    CorpusWriter writer(out.stream());
    PipelineOptions opts;
    opts.threads = plan_.threads;
    const auto report = run_pipeline(reader, cfg, res, writer, nullptr, opts);
    m["report"] = report.to_json(false);
    return {{"input", report.input_count}, {"output", report.pass_count}, {"malformed", report.malformed_records}};
  }

  nlohmann::ordered_json run_dedup(const fs::path& input, const std::optional<fs::path>& config, OutputFile& out,
                                   const fs::path& output, nlohmann::ordered_json& m) {
    const auto t = load_stage_table(config);
    DedupParams p;
    p.k = t["k"].value_or<int64_t>(128);
    p.bands = t["bands"].value_or<int64_t>(16);
    p.rows = t["rows"].value_or<int64_t>(8);
    p.threshold = t["threshold"].value_or(0.7);
    p.shingle_n = t["shingle_n"].value_or<int64_t>(5);
    p.memory_budget_bytes = static_cast<std::size_t>(t["memory_mb"].value_or<int64_t>(1024)) << 20;
    p.seed = plan_.seed;
    p.threads = plan_.threads;
    m["inputs"].push_back(file_ref(input));
    DupClusters clusters;
    {
      CorpusReader reader(input);
      clusters = find_clusters(reader, p, resources().normalize_options);
    }
    CorpusReader reader(input);
    CorpusWriter writer(out.stream());
    const std::size_t kept = deduplicate(reader, clusters, writer);
    fs::path cluster_path = output;
    cluster_path += ".clusters.jsonl";
    OutputFile cf(cluster_path);
    write_clusters(cf.stream(), clusters);
    cf.commit();
    m["clusters"] = file_ref(cluster_path);
    return {{"input", kept + clusters.duplicate_count()},
            {"output", kept},
            {"clusters", clusters.clusters.size()},
            {"duplicates", clusters.duplicate_count()}};
  }

  nlohmann::ordered_json run_lm_filter(const fs::path& input, const fs::path& config, OutputFile& out,
                                       nlohmann::ordered_json& m) {
    const auto t = load_stage_table(config);
    const double retain = require_key<double>(t, "retain");
    m["inputs"].push_back(file_ref(input));
    const auto docs = read_corpus(input);
    NGramModel model;
    if (auto path = t["model"].value<std::string>()) {
      const auto p = plan_.resolve(*path);
      std::ifstream in(p, std::ios::binary);
      if (!in) throw IoError("cannot open model " + p.string());
      model = NGramModel::load(in);
      m["inputs"].push_back(file_ref(p));
    } else {
      model = train_lm(docs, static_cast<std::size_t>(t["order"].value_or<int64_t>(3)), t["discount"].value_or(0.75),
                       resources().normalize_options);
    }
    if (docs.empty()) throw EmptyCorpus("lm-filter input is empty");
    std::vector<double> scores(docs.size());
    std::vector<std::string> ids(docs.size()), groups;
    parallel_for(docs.size(), plan_.threads, [&](std::size_t i) {
      scores[i] = rank_score(model, docs[i], resources().normalize_options);
      ids[i] = docs[i].id;
    });
    if (auto key = t["per_group"].value<std::string>()) {
      for (const auto& d : docs) {
        auto it = d.meta.find(*key);
        groups.push_back(it == d.meta.end() ? std::string() : it->second);
      }
    }
    const auto sel = select_by_rank(scores, ids, retain, groups);
    CorpusWriter writer(out.stream());
    for (std::size_t i = 0; i < docs.size(); ++i)
      if (sel.keep[i]) writer.write(docs[i]);
    return {{"input", docs.size()}, {"output", sel.kept}, {"threshold", sel.threshold}};
  }

  nlohmann::ordered_json run_ocr_filter(const fs::path& input, const fs::path& config, OutputFile& out,
                                        nlohmann::ordered_json& m) {
    const auto t = load_stage_table(config);
    const auto lexicon_path = plan_.resolve(require_key<std::string>(t, "lexicon"));
    OcrFilterConfig c;
    c.min_words_per_page = t["min_words_per_page"].value_or(0.0);
    c.min_sentences_per_page = t["min_sentences_per_page"].value_or(0.0);
    c.min_coverage = t["min_coverage"].value_or(0.0);
    c.confidence_cutoff = t["confidence_cutoff"].value_or(kDefaultConfidenceCutoff);
    if (auto p = t["confidence_percentile"].value<double>())
      c.confidence_rule = ConfidencePercentileRule{*p, parse_side(t["confidence_side"].value_or(std::string("lower")))};
    m["inputs"].push_back(file_ref(input));
    m["inputs"].push_back(file_ref(lexicon_path));
    const auto books = read_corpus(input);
    const auto lexicon = load_word_list(lexicon_path);
    const auto sel = ocr_select(books, lexicon, c, resources().normalize_options);
    CorpusWriter writer(out.stream());
    for (std::size_t i = 0; i < books.size(); ++i)
      if (sel.keep[i]) writer.write(books[i]);
    nlohmann::ordered_json counts{{"input", books.size()}, {"output", sel.kept}};
    if (sel.confidence_threshold) counts["confidence_min"] = sel.confidence_threshold->min.value_or(-1.0);
    return counts;
  }

  nlohmann::ordered_json run_tok_train(const fs::path& input, const fs::path& config, OutputFile& out,
                                       nlohmann::ordered_json& m) {
    const auto t = load_stage_table(config);
    const auto vocab = require_key<int64_t>(t, "vocab_size");
    if (vocab < 0) throw ConfigError("vocab_size must be positive");
    m["inputs"].push_back(file_ref(input));
    const auto docs = read_corpus(input);
    const auto model = train_bpe(docs, static_cast<std::size_t>(vocab), {}, plan_.threads);
    model.save(out.stream());
    return {{"documents", docs.size()}, {"vocab_size", model.vocab_size()}};
  }

  nlohmann::ordered_json run_tok_merge(const fs::path& config, OutputFile& out, nlohmann::ordered_json& m) {
    const auto t = load_stage_table(config);
    const auto base_path = plan_.resolve(require_key<std::string>(t, "base"));
    fs::path ext_path;
    if (auto v = t["extension"].value<std::string>())
      ext_path = plan_.resolve(*v);
    else if (tokenizer_)
      ext_path = *tokenizer_;
    else
      throw ConfigError("tok-merge needs an extension tokenizer");
    m["inputs"].push_back(file_ref(base_path));
    m["inputs"].push_back(file_ref(ext_path));
    const auto base = load_model(base_path);
    const auto ext = load_model(ext_path);
    const auto merged = merge_tokenizers(base, ext);
    merged.save(out.stream());
    base_ = base_path;
    return {{"base_vocab", base.vocab_size()},
            {"extension_vocab", ext.vocab_size()},
            {"added", merged.extension_size()},
            {"vocab_size", merged.vocab_size()}};
  }

  nlohmann::ordered_json run_tok_eval(const fs::path& input, const std::optional<fs::path>& config, OutputFile& out,
                                      nlohmann::ordered_json& m) {
    const auto t = load_stage_table(config);
    fs::path tok_path;
    if (auto v = t["tokenizer"].value<std::string>())
      tok_path = plan_.resolve(*v);
    else if (tokenizer_)
      tok_path = *tokenizer_;
    else
      throw ConfigError("tok-eval needs a tokenizer");
    m["inputs"].push_back(file_ref(input));
    m["inputs"].push_back(file_ref(tok_path));
    const std::string corpus_id = t["corpus_id"].value_or(input.filename().string());
    CorpusReader reader(input);
    TpwReport report;
    const std::string text = hash::read_file(tok_path);
    if (MergedTokenizer::is_merged_file(text)) {
      fs::path base_path;
      if (auto v = t["base"].value<std::string>())
        base_path = plan_.resolve(*v);
      else if (base_)
        base_path = *base_;
      else
        throw ConfigError("tok-eval of a merged tokenizer needs its base");
      m["inputs"].push_back(file_ref(base_path));
      std::istringstream in(text);
      report = tokens_per_word(MergedTokenizer::load(in, load_model(base_path)), reader, corpus_id);
    } else {
      report = tokens_per_word(ByteBpeModel::parse(text), reader, corpus_id);
    }
    const auto j = report.to_json();
    out.stream() << j.dump(2) << '\n';
    return {{"words", report.words}, {"tokens", report.tokens}, {"tpw", report.tpw}};
  }

  static ByteBpeModel load_model(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open tokenizer " + p.string());
    return ByteBpeModel::load(in);
  }

  const PipelinePlan& plan_;
  fs::path corpus_;
  std::optional<fs::path> tokenizer_;
  std::optional<fs::path> base_;
  std::optional<Resources> resources_;
};

}  // namespace detail

// Runs every stage in order. Each stage writes its output and a
// "<output>.manifest.json" (inputs and config with sha256, seed, counts);
// a failing stage leaves earlier outputs in place and no partial output of
// its own, and surfaces as StageError.
inline PlanResult run(const PipelinePlan& plan) { return detail::PlanRunner(plan).run(); }

}  // namespace corpuskit
