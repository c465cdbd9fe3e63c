// Runs the rule metrics over a JSONL corpus and prints one line per document
// with its verdict, then trains a trigram model and prints each document's
// perplexity.
//
//   score_documents corpus.jsonl filter.toml resources/

#include <iomanip>
#include <iostream>

#include "corpuskit/filter.hpp"
#include "corpuskit/ngram_lm.hpp"

int main(int argc, char** argv) {
  using namespace corpuskit;
  if (argc < 4) {
    std::cerr << "usage: score_documents corpus.jsonl filter.toml resources/\n";
    return 2;
  }
  try {
    const auto docs = read_corpus(argv[1]);
    const auto res = Resources::load(argv[3]);
    const auto cfg = FilterConfig::from_toml_file(argv[2], res.rules);
    const auto lm = train_lm(docs);
    for (const auto& d : docs) {
      const auto decision = apply(doc_metrics(d, res), cfg);
      std::cout << std::left << std::setw(12) << d.id << (decision.pass ? "keep" : "drop");
      for (const auto& r : decision.failed_rules) std::cout << ' ' << r;
      std::cout << "  ppl " << std::fixed << std::setprecision(1) << lm.score(d).perplexity << '\n';
    }
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
}
