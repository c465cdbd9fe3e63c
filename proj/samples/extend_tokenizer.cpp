// Trains a BPE extension on a JSONL corpus, merges it into a base model and
// prints tokens per word before and after.
//
//   extend_tokenizer corpus.jsonl [vocab_size] [base.tok]

#include <fstream>
#include <iostream>

#include "corpuskit/tokenizer.hpp"

int main(int argc, char** argv) {
  using namespace corpuskit;
  if (argc < 2) {
    std::cerr << "usage: extend_tokenizer corpus.jsonl [vocab_size] [base.tok]\n";
    return 2;
  }
  try {
    const auto docs = read_corpus(argv[1]);
    const std::size_t vocab = argc > 2 ? std::stoul(argv[2]) : 1000;
    ByteBpeModel base;
    if (argc > 3) {
      std::ifstream in(argv[3], std::ios::binary);
      if (!in) throw IoError(std::string("cannot open ") + argv[3]);
      base = ByteBpeModel::load(in);
    }
    const auto merged = merge_tokenizers(base, train_bpe(docs, vocab));
    const auto before = tokens_per_word(base, docs, "base");
    const auto after = tokens_per_word(merged, docs, "merged");
    std::cout << "base   vocab " << base.vocab_size() << "  tpw " << before.tpw << '\n'
              << "merged vocab " << merged.vocab_size() << "  tpw " << after.tpw << '\n';
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
}
