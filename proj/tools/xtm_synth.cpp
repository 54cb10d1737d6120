// Writes a planted bilingual corpus plus matching embeddings and canned LLM
// replies, enough to drive every xtm subcommand offline.
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "xtm/synthetic.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  xtm::SyntheticSpec spec;
  std::string dir;
  int model_topics = 4;
  int rounds = 5;
  CLI::App app{"generate a synthetic bilingual corpus", "xtm-synth"};
  app.add_option("dir", dir, "output directory")->required();
  app.add_option("--planted", spec.topics, "planted topics")->capture_default_str();
  app.add_option("--vocab", spec.vocab, "vocabulary size per language")->capture_default_str();
  app.add_option("--docs", spec.docs_per_lang, "documents per language")->capture_default_str();
  app.add_option("--pairs", spec.pairs, "linked pairs")->capture_default_str();
  app.add_option("--seed", spec.seed)->capture_default_str();
  app.add_option("--topics", model_topics, "topics of the model the replies are written for")->capture_default_str();
  app.add_option("--rounds", rounds, "LLM rounds to write replies for")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto data = xtm::make_synthetic(spec);
    fs::create_directories(fs::path(dir) / "llm");
    auto open = [&](const fs::path& p) {
      std::ofstream f(fs::path(dir) / p, std::ios::binary);
      if (!f) throw xtm::Error(xtm::Errc::IoError, "cannot write " + p.string());
      return f;
    };
    {
      auto f = open("vocab1.txt");
      xtm::write_vocab(f, data.corpus.vocab1);
    }
    {
      auto f = open("vocab2.txt");
      xtm::write_vocab(f, data.corpus.vocab2);
    }
    {
      auto f = open("corpus.jsonl");
      xtm::write_corpus(f, data.corpus);
    }
    {
      auto f = open("embeddings.txt");
      f << 2 * spec.vocab << ' ' << spec.dim << '\n' << std::setprecision(17);
      for (const auto* v : {&data.corpus.vocab1, &data.corpus.vocab2})
        for (const auto& tok : v->tokens()) {
          f << tok;
          const xtm::Vec v = *data.table.word(tok);
          for (double x : v) f << ' ' << x;
          f << '\n';
        }
    }
    for (int r = 1; r <= rounds; ++r) {
      auto f = open(fs::path("llm") / ("default.r" + std::to_string(r) + ".txt"));
      f << xtm::static_reply(data, model_topics, r);
    }
  } catch (const xtm::Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
