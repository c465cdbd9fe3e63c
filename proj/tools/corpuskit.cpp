// corpuskit command-line entry point. Data goes to files (or stdout where a
// subcommand says so); structured JSON logs go to stderr.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "corpuskit/corpuskit.hpp"

namespace fs = std::filesystem;
using namespace corpuskit;
using json = nlohmann::ordered_json;

namespace {

struct Globals {
  uint64_t seed = 1;
  std::size_t threads = default_thread_count();
  bool lenient = false;
};

void log_event(const std::string& level, const std::string& command, json fields) {
  json j;
  j["level"] = level;
  j["command"] = command;
  for (auto& [k, v] : fields.items()) j[k] = v;
  std::cerr << j.dump() << std::endl;
}

// Writes to `path` atomically, or to stdout when the path is empty or "-".
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  OutputFile out(path);
  write(out.stream());
  out.commit();
}

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    std::ostringstream s;
    s << std::cin.rdbuf();
    return s.str();
  }
  if (!fs::exists(path)) throw IoError("cannot open " + path);
  return hash::read_file(path);
}

Resources load_resources(const std::string& dir) { return dir.empty() ? Resources{} : Resources::load(dir); }

ByteBpeModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tokenizer " + path);
  return ByteBpeModel::load(in);
}

// A plain model, or a merged extension file together with its base.
struct AnyTokenizer {
  std::optional<ByteBpeModel> plain;
  std::optional<MergedTokenizer> merged;

  static AnyTokenizer load(const std::string& path, const std::string& base) {
    if (!fs::exists(path)) throw IoError("cannot open tokenizer " + path);
    const std::string text = hash::read_file(path);
    AnyTokenizer t;
    if (MergedTokenizer::is_merged_file(text)) {
      if (base.empty()) throw ConfigError("merged tokenizer needs --base");
      std::istringstream in(text);
      t.merged = MergedTokenizer::load(in, load_model(base));
    } else {
      t.plain = ByteBpeModel::parse(text);
    }
    return t;
  }

  std::vector<TokenId> encode(std::string_view s) const { return merged ? merged->encode(s) : plain->encode(s); }
  std::string decode(std::span<const TokenId> ids) const { return merged ? merged->decode(ids) : plain->decode(ids); }
  std::size_t vocab_size() const { return merged ? merged->vocab_size() : plain->vocab_size(); }
};

NGramModel load_lm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model " + path);
  return NGramModel::load(in);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corpus curation and tokenizer extension toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for randomized stages");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--lenient", g.lenient, "Skip malformed input records");

  std::string command;
  std::function<void()> action;
  auto sub = [&](const std::string& name, const std::string& help) { return app.add_subcommand(name, help); };

  // filter
  std::string f_config, f_input, f_output, f_rejected, f_report, f_resources;
  {
    auto* s = sub("filter", "Apply rule thresholds to a corpus");
    s->add_option("--config", f_config)->required();
    s->add_option("--input", f_input)->required();
    s->add_option("--output", f_output)->required();
    s->add_option("--rejected", f_rejected, "Write rejected documents with their decision");
    s->add_option("--report", f_report, "Write the JSON filter report");
    s->add_option("--resources", f_resources, "Resource directory");
    s->final_callback([&] {
      action = [&] {
        const auto res = load_resources(f_resources);
        auto cfg = FilterConfig::from_toml_file(f_config, res.rules);
        cfg.lenient = cfg.lenient || g.lenient;
        CorpusReader reader(fs::path(f_input), {cfg.lenient});
        OutputFile out(f_output);
        CorpusWriter writer(out.stream());
        std::optional<OutputFile> rej;
        std::optional<CorpusWriter> rej_writer;
        if (!f_rejected.empty()) {
          rej.emplace(f_rejected);
          rej_writer.emplace(rej->stream());
        }
        const auto report = run_pipeline(reader, cfg, res, writer, rej_writer ? &*rej_writer : nullptr, {g.threads});
        out.commit();
        if (rej) rej->commit();
        if (!f_report.empty()) emit(f_report, [&](std::ostream& o) { o << report.to_json().dump(2) << '\n'; });
        log_event("info", "filter", {{"input", report.input_count}, {"output", report.pass_count},
                                     {"malformed", report.malformed_records}, {"seconds", report.elapsed_seconds}});
      };
    });
  }

  // calibrate
  std::string c_input, c_metric, c_side = "upper", c_output, c_resources;
  double c_percentile = 95.0;
  {
    auto* s = sub("calibrate", "Derive a threshold at a percentile of a sample");
    s->add_option("--input", c_input)->required();
    s->add_option("--metric", c_metric)->required();
    s->add_option("--percentile", c_percentile);
    s->add_option("--side", c_side, "lower or upper");
    s->add_option("--output", c_output, "Threshold JSON (default stdout)");
    s->add_option("--resources", c_resources);
    s->final_callback([&] {
      action = [&] {
        const auto res = load_resources(c_resources);
        CorpusReader reader(fs::path(c_input), {g.lenient});
        const auto t = calibrate(reader, res, c_metric, c_percentile, parse_side(c_side));
        json j;
        j["metric"] = t.metric;
        j["min"] = t.min ? json(*t.min) : json(nullptr);
        j["max"] = t.max ? json(*t.max) : json(nullptr);
        j["percentile"] = c_percentile;
        j["side"] = c_side;
        emit(c_output, [&](std::ostream& o) { o << j.dump() << '\n'; });
      };
    });
  }

  // dedup
  std::string d_input, d_output, d_clusters;
  DedupParams dp;
  std::size_t d_memory_mb = 1024;
  {
    auto* s = sub("dedup", "MinHash/LSH near-duplicate removal");
    s->add_option("--input", d_input)->required();
    s->add_option("--output", d_output)->required();
    s->add_option("--clusters", d_clusters, "Clusters JSONL (default <output>.clusters.jsonl)");
    s->add_option("--k", dp.k);
    s->add_option("--bands", dp.bands);
    s->add_option("--rows", dp.rows);
    s->add_option("--threshold", dp.threshold);
    s->add_option("--shingle-n", dp.shingle_n);
    s->add_option("--memory-mb", d_memory_mb);
    s->final_callback([&] {
      action = [&] {
        dp.seed = g.seed;
        dp.threads = g.threads;
        dp.memory_budget_bytes = d_memory_mb << 20;
        DupClusters clusters;
        {
          CorpusReader reader(fs::path(d_input), {g.lenient});
          clusters = find_clusters(reader, dp);
        }
        CorpusReader reader(fs::path(d_input), {g.lenient});
        OutputFile out(d_output);
        CorpusWriter writer(out.stream());
        const auto kept = deduplicate(reader, clusters, writer);
        out.commit();
        emit(d_clusters.empty() ? d_output + ".clusters.jsonl" : d_clusters,
             [&](std::ostream& o) { write_clusters(o, clusters); });
        log_event("info", "dedup", {{"output", kept}, {"clusters", clusters.clusters.size()},
                                    {"duplicates", clusters.duplicate_count()}});
      };
    });
  }

  // lm-train
  std::string lt_input, lt_model, lt_arpa;
  std::size_t lt_order = 3;
  double lt_discount = 0.75;
  {
    auto* s = sub("lm-train", "Train an interpolated Kneser-Ney model");
    s->add_option("--input", lt_input)->required();
    s->add_option("--model", lt_model)->required();
    s->add_option("--order", lt_order);
    s->add_option("--discount", lt_discount);
    s->add_option("--arpa", lt_arpa, "Also write an ARPA export");
    s->final_callback([&] {
      action = [&] {
        CorpusReader reader(fs::path(lt_input), {g.lenient});
        const auto m = train_lm(reader, lt_order, lt_discount);
        emit(lt_model, [&](std::ostream& o) { m.save(o); });
        if (!lt_arpa.empty()) emit(lt_arpa, [&](std::ostream& o) { m.write_arpa(o); });
        log_event("info", "lm-train", {{"order", m.order()}, {"vocab", m.vocab_size()}});
      };
    });
  }

  // lm-score
  std::string ls_model, ls_input, ls_output;
  {
    auto* s = sub("lm-score", "Per-document log-probability and perplexity");
    s->add_option("--model", ls_model)->required();
    s->add_option("--input", ls_input)->required();
    s->add_option("--output", ls_output, "Scores JSONL (default stdout)");
    s->final_callback([&] {
      action = [&] {
        const auto m = load_lm(ls_model);
        CorpusReader reader(fs::path(ls_input), {g.lenient});
        emit(ls_output, [&](std::ostream& o) {
          while (auto d = reader.next()) {
            json j;
            j["id"] = d->id;
            try {
              const auto sc = m.score(*d);
              j["log_prob"] = sc.log_prob;
              j["tokens"] = sc.tokens;
              j["per_word_log_prob"] = sc.per_word_log_prob;
              j["perplexity"] = sc.perplexity;
            } catch (const EmptyDocument&) {
              j["log_prob"] = nullptr;
            }
            o << dump_line(j) << '\n';
          }
        });
      };
    });
  }

  // lm-filter
  std::string lf_model, lf_input, lf_output, lf_group;
  double lf_retain = 0.95;
  {
    auto* s = sub("lm-filter", "Keep the best-scoring fraction of documents");
    s->add_option("--model", lf_model)->required();
    s->add_option("--input", lf_input)->required();
    s->add_option("--output", lf_output)->required();
    s->add_option("--retain", lf_retain);
    s->add_option("--per-group", lf_group, "Rank within groups given by this meta key");
    s->final_callback([&] {
      action = [&] {
        const auto m = load_lm(lf_model);
        const auto docs = read_corpus(lf_input, {g.lenient});
        if (docs.empty()) throw EmptyCorpus("lm-filter input is empty");
        std::vector<double> scores(docs.size());
        std::vector<std::string> ids(docs.size()), groups;
        parallel_for(docs.size(), g.threads, [&](std::size_t i) {
          scores[i] = rank_score(m, docs[i]);
          ids[i] = docs[i].id;
        });
        if (!lf_group.empty())
          for (const auto& d : docs) {
            auto it = d.meta.find(lf_group);
            groups.push_back(it == d.meta.end() ? std::string() : it->second);
          }
        const auto sel = select_by_rank(scores, ids, lf_retain, groups);
        emit(lf_output, [&](std::ostream& o) {
          CorpusWriter w(o);
          for (std::size_t i = 0; i < docs.size(); ++i)
            if (sel.keep[i]) w.write(docs[i]);
        });
        log_event("info", "lm-filter", {{"input", docs.size()}, {"output", sel.kept}, {"threshold", sel.threshold}});
      };
    });
  }

  // ocr-stats / ocr-filter
  std::string o_input, o_lexicon, o_output, o_side = "lower";
  OcrFilterConfig oc;
  std::optional<double> o_percentile;
  auto ocr_common = [&](CLI::App* s) {
    s->add_option("--input", o_input)->required();
    s->add_option("--lexicon", o_lexicon)->required();
    s->add_option("--confidence-cutoff", oc.confidence_cutoff);
  };
  {
    auto* s = sub("ocr-stats", "Per-book OCR quality statistics");
    ocr_common(s);
    s->add_option("--output", o_output, "Stats JSONL (default stdout)");
    s->final_callback([&] {
      action = [&] {
        const auto lex = load_word_list(o_lexicon);
        CorpusReader reader(fs::path(o_input), {g.lenient});
        emit(o_output, [&](std::ostream& o) {
          while (auto d = reader.next()) {
            json j;
            j["id"] = d->id;
            j["stats"] = book_stats(*d, lex, oc.confidence_cutoff).to_json();
            o << dump_line(j) << '\n';
          }
        });
      };
    });
  }
  {
    auto* s = sub("ocr-filter", "Keep books passing OCR quality bounds");
    ocr_common(s);
    s->add_option("--output", o_output)->required();
    s->add_option("--min-words-per-page", oc.min_words_per_page);
    s->add_option("--min-sentences-per-page", oc.min_sentences_per_page);
    s->add_option("--min-coverage", oc.min_coverage);
    s->add_option("--confidence-percentile", o_percentile);
    s->add_option("--confidence-side", o_side);
    s->final_callback([&] {
      action = [&] {
        if (o_percentile) oc.confidence_rule = ConfidencePercentileRule{*o_percentile, parse_side(o_side)};
        const auto books = read_corpus(o_input, {g.lenient});
        const auto sel = ocr_select(books, load_word_list(o_lexicon), oc);
        emit(o_output, [&](std::ostream& o) {
          CorpusWriter w(o);
          for (std::size_t i = 0; i < books.size(); ++i)
            if (sel.keep[i]) w.write(books[i]);
        });
        log_event("info", "ocr-filter", {{"input", books.size()}, {"output", sel.kept}});
      };
    });
  }

  // tok-train
  std::string tt_input, tt_output;
  std::size_t tt_vocab = 0;
  {
    auto* s = sub("tok-train", "Train a byte-level BPE model");
    s->add_option("--input", tt_input)->required();
    s->add_option("--vocab-size", tt_vocab)->required();
    s->add_option("--output", tt_output)->required();
    s->final_callback([&] {
      action = [&] {
        const auto docs = read_corpus(tt_input, {g.lenient});
        const auto m = train_bpe(docs, tt_vocab, {}, g.threads);
        emit(tt_output, [&](std::ostream& o) { m.save(o); });
        log_event("info", "tok-train", {{"documents", docs.size()}, {"vocab_size", m.vocab_size()}});
      };
    });
  }

  // tok-merge
  std::string tm_base, tm_ext, tm_output;
  {
    auto* s = sub("tok-merge", "Extend a base model with new tokens from another");
    s->add_option("--base", tm_base)->required();
    s->add_option("--extension", tm_ext)->required();
    s->add_option("--output", tm_output)->required();
    s->final_callback([&] {
      action = [&] {
        const auto merged = merge_tokenizers(load_model(tm_base), load_model(tm_ext));
        emit(tm_output, [&](std::ostream& o) { merged.save(o); });
        log_event("info", "tok-merge", {{"added", merged.extension_size()}, {"vocab_size", merged.vocab_size()}});
      };
    });
  }

  // tok-encode / tok-decode
  std::string te_tok, te_base, te_text, te_input, te_output;
  bool te_has_text = false;
  auto tok_common = [&](CLI::App* s) {
    s->add_option("--tokenizer", te_tok)->required();
    s->add_option("--base", te_base, "Base model of a merged tokenizer");
    s->add_option("--input", te_input, "Input file (default stdin)");
    s->add_option("--output", te_output, "Output file (default stdout)");
  };
  {
    auto* s = sub("tok-encode", "Encode text to space-separated token ids");
    tok_common(s);
    s->add_option("--text", te_text, "Text to encode instead of the input file");
    s->final_callback([&, s] {
      te_has_text = s->count("--text") > 0;
      action = [&] {
        const auto tok = AnyTokenizer::load(te_tok, te_base);
        const auto text = te_has_text ? te_text : read_input(te_input);
        const auto ids = tok.encode(text);
        emit(te_output, [&](std::ostream& o) {
          for (std::size_t i = 0; i < ids.size(); ++i) o << (i ? " " : "") << ids[i];
          o << '\n';
        });
      };
    });
  }
  {
    auto* s = sub("tok-decode", "Decode space-separated token ids to text");
    tok_common(s);
    s->final_callback([&] {
      action = [&] {
        const auto tok = AnyTokenizer::load(te_tok, te_base);
        std::istringstream in(read_input(te_input));
        std::vector<TokenId> ids;
        std::string field;
        while (in >> field) {
          try {
            std::size_t used = 0;
            const auto v = std::stoull(field, &used);
            if (used != field.size() || v > std::numeric_limits<TokenId>::max()) throw std::out_of_range(field);
            ids.push_back(static_cast<TokenId>(v));
          } catch (const std::logic_error&) {
            throw DecodeError("not a token id: '" + field + "'");
          }
        }
        const auto text = tok.decode(ids);
        emit(te_output, [&](std::ostream& o) { o << text; });
      };
    });
  }

  // tok-eval
  std::string ev_corpus, ev_id;
  {
    auto* s = sub("tok-eval", "Tokens per word over a corpus");
    s->add_option("--tokenizer", te_tok)->required();
    s->add_option("--base", te_base, "Base model of a merged tokenizer");
    s->add_option("--corpus", ev_corpus)->required();
    s->add_option("--corpus-id", ev_id);
    s->add_option("--output", te_output, "Report JSON (default stdout)");
    s->final_callback([&] {
      action = [&] {
        const auto tok = AnyTokenizer::load(te_tok, te_base);
        CorpusReader reader(fs::path(ev_corpus), {g.lenient});
        const auto report = tokens_per_word(tok, reader, ev_id.empty() ? fs::path(ev_corpus).filename().string() : ev_id);
        emit(te_output, [&](std::ostream& o) { o << report.to_json().dump(2) << '\n'; });
      };
    });
  }

  // run
  std::string r_plan;
  {
    auto* s = sub("run", "Execute a TOML pipeline plan");
    s->add_option("plan", r_plan)->required();
    s->final_callback([&] {
      action = [&] {
        auto plan = PipelinePlan::from_toml_file(r_plan);
        if (app.count("--seed")) plan.seed = g.seed;
        if (app.count("--threads")) plan.threads = g.threads;
        const auto result = run(plan);
        for (const auto& st : result.stages)
          log_event("info", "run", {{"stage", st.index}, {"kind", stage_name(st.kind)},
                                    {"output", st.output.string()}, {"counts", st.manifest["counts"]}});
        log_event("info", "run", {{"stages", result.stages.size()}, {"status", "ok"}});
      };
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  command = app.get_subcommands().front()->get_name();

  try {
    action();
  } catch (const StageError& e) {
    log_event("error", command, {{"kind", e.kind()}, {"stage", e.index()}, {"stage_kind", e.stage_kind()},
                                 {"cause", e.cause_kind()}, {"message", e.what()}});
    return 1;
  } catch (const Error& e) {
    log_event("error", command, {{"kind", e.kind()}, {"message", e.what()}});
    return 1;
  } catch (const std::exception& e) {
    log_event("error", command, {{"kind", "IoError"}, {"message", e.what()}});
    return 1;
  }
  return 0;
}
