#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <map>

#include "convasr/corpus.hpp"
#include "convasr/synth.hpp"
#include "convasr/vocab.hpp"

using namespace convasr;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "convasr_vocab_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

std::string random_word(Rng& rng, std::size_t min_len = 1, std::size_t max_len = 10) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string w;
  for (std::size_t i = 0; i < len; ++i) w.push_back(char('a' + rng.below(26)));
  return w;
}

}  // namespace

TEST_CASE("vocabulary frequency selection") {
  SECTION("most frequent word wins") {
    auto v = build_vocabulary({"a a b"}, 1);
    REQUIRE(v.has_word("a"));
    REQUIRE_FALSE(v.has_word("b"));
    REQUIRE(v.num_words() == 1);
  }
  SECTION("frequency order with independent count") {
    // independent count over {"x y", "y"}: y:2, x:1
    auto v = build_vocabulary({"x y", "y"}, 2);
    REQUIRE(v.has_word("x"));
    REQUIRE(v.has_word("y"));
    REQUIRE(v.word_id("y") < v.word_id("x"));
  }
  SECTION("ties break lexicographically") {
    auto v = build_vocabulary({"pear apple"}, 1);
    REQUIRE(v.has_word("apple"));
    REQUIRE_FALSE(v.has_word("pear"));
  }
  SECTION("max_words < 1 rejected") {
    REQUIRE_THROWS_AS(build_vocabulary({"a"}, 0), ConfigError);
  }
  SECTION("specials occupy the fixed leading ids") {
    auto v = build_vocabulary({"a"}, 4);
    REQUIRE(v.token(kBlankId) == "<blank>");
    REQUIRE(v.token(kSosId) == "<sos>");
    REQUIRE(v.token(kEosId) == "<eos>");
    REQUIRE(v.token(kSunkId) == "<sunk>");
    REQUIRE(v.token(kEunkId) == "<eunk>");
    REQUIRE(v.token(kPadId) == "<pad>");
  }
}

TEST_CASE("OOV decomposition") {
  auto v = build_vocabulary({"the quick brown fox jumps over lazy dog"}, 8);
  SECTION("rainstorm expands to sunk chars eunk") {
    auto ids = encode_transcript({"rainstorm"}, v);
    REQUIRE(ids.front() == kSunkId);
    REQUIRE(ids.back() == kEunkId);
    std::string spelled;
    for (std::size_t i = 1; i + 1 < ids.size(); ++i) {
      REQUIRE(v.is_char_unit(ids[i]));
      spelled.push_back(v.char_of(ids[i]));
    }
    REQUIRE(spelled == "rainstorm");
  }
  SECTION("in-vocabulary word maps to one id") {
    auto ids = encode_transcript({"the"}, v);
    REQUIRE(ids == std::vector<int>{v.word_id("the")});
  }
  SECTION("repeated OOV repeats the rule") {
    auto v2 = build_vocabulary({"cab dab"}, 2);
    REQUIRE(v2.has_word("cab"));
    auto ids = encode_transcript({"ab", "ab"}, v2);  // "ab" is OOV
    // independent string transform: sunk a b eunk sunk a b eunk
    std::vector<int> expected = {kSunkId, v2.char_id('a'), v2.char_id('b'), kEunkId,
                                 kSunkId, v2.char_id('a'), v2.char_id('b'), kEunkId};
    REQUIRE(ids == expected);
  }
  SECTION("unknown character is a hard error naming it") {
    REQUIRE_THROWS_WITH(encode_transcript({"na\xc3\xafve"}, v),
                        Catch::Matchers::ContainsSubstring("character"));
  }
}

TEST_CASE("decode_tokens inverse") {
  auto v = build_vocabulary({"the cat sat"}, 3);
  SECTION("word id round trip") {
    REQUIRE(decode_tokens({v.word_id("the")}, v).words ==
            std::vector<std::string>{"the"});
  }
  SECTION("span reassembly") {
    auto ids = encode_transcript({"chats"}, v);  // OOV over in-corpus chars
    auto dec = decode_tokens(ids, v);
    REQUIRE(dec.words == std::vector<std::string>{"chats"});
    REQUIRE_FALSE(dec.malformed);
  }
  SECTION("unbalanced spans are flagged, raw span joined") {
    std::vector<int> ids = {kSunkId, v.char_id('c'), v.char_id('a')};
    auto dec = decode_tokens(ids, v);
    REQUIRE(dec.malformed);
    REQUIRE(dec.words == std::vector<std::string>{"ca"});
    auto dec2 = decode_tokens({v.char_id('t'), kEunkId}, v);
    REQUIRE(dec2.malformed);
  }
  SECTION("identity over 1000 random words") {
    Rng rng(777);
    std::vector<std::string> corpus_words = {"abcdefghijklmnopqrstuvwxyz"};
    for (int i = 0; i < 50; ++i) corpus_words.push_back(random_word(rng));
    auto vocab = build_vocabulary({join_words(corpus_words)}, 10);
    for (int i = 0; i < 1000; ++i) {
      std::vector<std::string> sent;
      const std::size_t n = 1 + rng.below(6);
      for (std::size_t j = 0; j < n; ++j) sent.push_back(random_word(rng));
      auto dec = decode_tokens(encode_transcript(sent, vocab), vocab);
      REQUIRE(dec.words == sent);
      REQUIRE_FALSE(dec.malformed);
    }
  }
}

TEST_CASE("vocabulary ids are stable across builds and file round trips") {
  std::vector<std::string> transcripts = {"b a a", "c c b", "d"};
  auto v1 = build_vocabulary(transcripts, 3);
  auto v2 = build_vocabulary(transcripts, 3);
  REQUIRE(v1.tokens() == v2.tokens());
  REQUIRE(v1.hash() == v2.hash());

  const std::string path = temp_path("vocab.txt");
  v1.save(path);
  auto v3 = Vocabulary::load(path);
  REQUIRE(v3.tokens() == v1.tokens());
  REQUIRE(v3.hash() == v1.hash());
  REQUIRE(v3.word_id("a") == v1.word_id("a"));
}

TEST_CASE("corpus load and save") {
  SECTION("empty file loads an empty corpus") {
    const std::string path = temp_path("empty.jsonl");
    { std::ofstream out(path); }
    REQUIRE(load_corpus(path).empty());
  }
  SECTION("2 conversations x 3 utterances") {
    Corpus corpus;
    for (int c = 0; c < 2; ++c) {
      Conversation conv;
      conv.id = "c" + std::to_string(c);
      for (int u = 0; u < 3; ++u) {
        Utterance utt;
        utt.conv_id = conv.id;
        utt.index = u;
        utt.words = {"w" + std::to_string(u)};
        utt.features.rows = 2;
        utt.features.cols = 3;
        utt.features.data = {1, 2, 3, 4, 5, 6};
        conv.utterances.push_back(utt);
      }
      corpus.push_back(conv);
    }
    const std::string path = temp_path("two_conv.jsonl");
    save_corpus(corpus, path);
    auto loaded = load_corpus(path);
    REQUIRE(loaded.size() == 2);
    for (const auto& conv : loaded) {
      REQUIRE(conv.utterances.size() == 3);
      for (int u = 0; u < 3; ++u) {
        REQUIRE(conv.utterances[std::size_t(u)].index == u);
      }
    }
    REQUIRE(loaded[0].utterances[1].features.data ==
            std::vector<double>{1, 2, 3, 4, 5, 6});
  }
  SECTION("duplicate (conv_id, index) rejected") {
    const std::string path = temp_path("dup.jsonl");
    {
      std::ofstream out(path);
      out << R"({"conv_id":"c0","index":0,"transcript":"a"})" << "\n";
      out << R"({"conv_id":"c0","index":0,"transcript":"b"})" << "\n";
    }
    REQUIRE_THROWS_WITH(load_corpus(path),
                        Catch::Matchers::ContainsSubstring("duplicate"));
  }
  SECTION("ragged feature dimension rejected") {
    const std::string path = temp_path("ragged.jsonl");
    {
      std::ofstream out(path);
      out << R"({"conv_id":"c0","index":0,"transcript":"a","feat_rows":1,"feat_cols":2,"features":")"
          << doubles_to_base64({1.0, 2.0}) << R"("})" << "\n";
      out << R"({"conv_id":"c0","index":1,"transcript":"b","feat_rows":1,"feat_cols":3,"features":")"
          << doubles_to_base64({1.0, 2.0, 3.0}) << R"("})" << "\n";
    }
    REQUIRE_THROWS_WITH(load_corpus(path),
                        Catch::Matchers::ContainsSubstring("ragged"));
  }
  SECTION("non-contiguous indices rejected") {
    const std::string path = temp_path("gap.jsonl");
    {
      std::ofstream out(path);
      out << R"({"conv_id":"c0","index":0,"transcript":"a"})" << "\n";
      out << R"({"conv_id":"c0","index":2,"transcript":"b"})" << "\n";
    }
    REQUIRE_THROWS_WITH(load_corpus(path),
                        Catch::Matchers::ContainsSubstring("contiguous"));
  }
}

TEST_CASE("conversation batching") {
  auto make_corpus = [](std::vector<std::size_t> lengths) {
    Corpus corpus;
    for (std::size_t c = 0; c < lengths.size(); ++c) {
      Conversation conv;
      conv.id = "c" + std::to_string(c);
      for (std::size_t u = 0; u < lengths[c]; ++u) {
        Utterance utt;
        utt.conv_id = conv.id;
        utt.index = int(u);
        utt.words = {"w"};
        conv.utterances.push_back(utt);
      }
      corpus.push_back(conv);
    }
    return corpus;
  };

  SECTION("single conversation, no dummies") {
    auto corpus = make_corpus({3});
    auto batches = make_conversation_batches(corpus, 1, 1);
    REQUIRE(batches.size() == 3);
    for (const auto& b : batches) {
      REQUIRE(b.slots.size() == 1);
      REQUIRE_FALSE(b.slots[0].dummy());
    }
  }
  SECTION("lengths 2 and 4 in one group: 4 batches, dummies at the tail") {
    auto corpus = make_corpus({2, 4});
    auto batches = make_conversation_batches(corpus, 2, 7);
    REQUIRE(batches.size() == 4);
    // hand-constructed schedule: the shorter conversation contributes real
    // slots in batches 0-1 and dummies in batches 2-3
    std::map<std::size_t, std::vector<int>> seen;
    for (const auto& b : batches) {
      REQUIRE(b.slots.size() == 2);
      for (const auto& s : b.slots) {
        if (!s.dummy()) seen[s.conv_index].push_back(s.utt_index);
      }
    }
    REQUIRE(seen[0] == std::vector<int>{0, 1});
    REQUIRE(seen[1] == std::vector<int>{0, 1, 2, 3});
    int dummies = 0;
    for (const auto& b : batches) {
      for (const auto& s : b.slots) dummies += s.dummy() ? 1 : 0;
    }
    REQUIRE(dummies == 2);
  }
  SECTION("batch_size larger than corpus width degenerates to one group") {
    auto corpus = make_corpus({2, 3});
    auto batches = make_conversation_batches(corpus, 10, 3);
    REQUIRE(batches.size() == 3);
    REQUIRE(batches[0].slots.size() == 2);
  }
  SECTION("flattened slots reproduce onset order; dummies never precede real") {
    Rng lengths_rng(5);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      std::vector<std::size_t> lens;
      const std::size_t n = 1 + lengths_rng.below(7);
      for (std::size_t i = 0; i < n; ++i) lens.push_back(1 + lengths_rng.below(6));
      auto corpus = make_corpus(lens);
      auto batches = make_conversation_batches(corpus, 1 + seed % 4, seed);

      std::map<std::size_t, std::vector<int>> flat;
      std::map<std::size_t, bool> saw_dummy;
      for (const auto& b : batches) {
        for (const auto& s : b.slots) {
          if (s.dummy()) {
            saw_dummy[s.conv_index] = true;
          } else {
            REQUIRE_FALSE(saw_dummy[s.conv_index]);
            flat[s.conv_index].push_back(s.utt_index);
          }
        }
      }
      REQUIRE(flat.size() == corpus.size());
      for (const auto& [ci, order] : flat) {
        std::vector<int> expect(corpus[ci].utterances.size());
        for (std::size_t u = 0; u < expect.size(); ++u) expect[u] = int(u);
        REQUIRE(order == expect);
      }
    }
  }
  SECTION("schedule is deterministic per seed") {
    auto corpus = make_corpus({2, 3, 4, 1});
    auto a = make_conversation_batches(corpus, 2, 11);
    auto b = make_conversation_batches(corpus, 2, 11);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a[i].slots.size(); ++j) {
        REQUIRE(a[i].slots[j].conv_index == b[i].slots[j].conv_index);
        REQUIRE(a[i].slots[j].utt_index == b[i].slots[j].utt_index);
      }
    }
  }
}
