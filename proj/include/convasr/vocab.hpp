// Word-level output inventory with character fallback for OOV words.
//
// Token id layout is fixed: six specials first (blank, sos, eos, sunk, eunk,
// pad), then single-character units sorted by code point, then the retained
// words by descending frequency with lexicographic tie-break. An OOV word is
// spelled as sunk, its character units, eunk.
#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "convasr/common.hpp"

namespace convasr {

enum SpecialToken : int {
  kBlankId = 0,
  kSosId = 1,
  kEosId = 2,
  kSunkId = 3,
  kEunkId = 4,
  kPadId = 5,
};

inline const std::vector<std::string>& special_token_names() {
  static const std::vector<std::string> names = {"<blank>", "<sos>", "<eos>",
                                                 "<sunk>", "<eunk>", "<pad>"};
  return names;
}

class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary from_tokens(std::vector<std::string> id_to_token) {
    Vocabulary v;
    v.id_to_token_ = std::move(id_to_token);
    const auto& specials = special_token_names();
    if (v.id_to_token_.size() < specials.size()) {
      throw DataError("vocabulary: fewer tokens than the fixed specials");
    }
    for (std::size_t i = 0; i < specials.size(); ++i) {
      if (v.id_to_token_[i] != specials[i]) {
        throw DataError("vocabulary: token " + std::to_string(i) + " must be " +
                        specials[i] + ", got " + v.id_to_token_[i]);
      }
    }
    for (std::size_t i = 0; i < v.id_to_token_.size(); ++i) {
      const std::string& tok = v.id_to_token_[i];
      if (!v.token_to_id_.emplace(tok, int(i)).second) {
        throw DataError("vocabulary: duplicate token " + tok);
      }
    }
    for (std::size_t i = specials.size(); i < v.id_to_token_.size(); ++i) {
      const std::string& tok = v.id_to_token_[i];
      if (tok.size() == 5 && tok.rfind("<c:", 0) == 0 && tok[4] == '>') {
        v.char_to_id_[tok[3]] = int(i);
      } else {
        v.word_to_id_[tok] = int(i);
      }
    }
    return v;
  }

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t num_words() const { return word_to_id_.size(); }
  std::size_t num_char_units() const { return char_to_id_.size(); }

  const std::string& token(int id) const {
    if (id < 0 || std::size_t(id) >= id_to_token_.size()) {
      throw DataError("vocabulary: id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[std::size_t(id)];
  }

  bool has_word(const std::string& w) const { return word_to_id_.count(w) > 0; }
  int word_id(const std::string& w) const { return word_to_id_.at(w); }
  bool has_char(char c) const { return char_to_id_.count(c) > 0; }
  int char_id(char c) const { return char_to_id_.at(c); }
  bool is_char_unit(int id) const {
    const std::string& t = token(id);
    return t.size() == 5 && t.rfind("<c:", 0) == 0;
  }
  char char_of(int id) const { return token(id)[3]; }

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::uint64_t hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& t : id_to_token_) {
      h = fnv1a64(t, h);
      h = fnv1a64("\n", h);
    }
    return h;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const auto& t : id_to_token_) out << t << "\n";
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary file " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      tokens.push_back(line);
    }
    while (!tokens.empty() && tokens.back().empty()) tokens.pop_back();
    return from_tokens(std::move(tokens));
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::unordered_map<std::string, int> word_to_id_;
  std::unordered_map<char, int> char_to_id_;
};

/// Keep the max_words most frequent corpus words (ties lexicographic) and a
/// char unit for every character seen in any corpus word.
inline Vocabulary build_vocabulary(const std::vector<std::string>& transcripts,
                                   std::size_t max_words) {
  if (max_words < 1) throw ConfigError("build_vocabulary: max_words must be >= 1");
  std::map<std::string, std::size_t> freq;
  std::set<char> chars;
  for (const auto& line : transcripts) {
    for (const auto& w : split_words(line)) {
      ++freq[w];
      for (char c : w) chars.insert(c);
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > max_words) ranked.resize(max_words);

  std::vector<std::string> tokens = special_token_names();
  for (char c : chars) tokens.push_back(std::string("<c:") + c + ">");
  for (const auto& [w, n] : ranked) tokens.push_back(w);
  return Vocabulary::from_tokens(std::move(tokens));
}

/// In-vocabulary words map to their id; OOV words expand to
/// sunk, chars, eunk. A character with no unit is a data error.
inline std::vector<int> encode_transcript(const std::vector<std::string>& words,
                                          const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) {
    if (vocab.has_word(w)) {
      ids.push_back(vocab.word_id(w));
      continue;
    }
    ids.push_back(kSunkId);
    for (char c : w) {
      if (!vocab.has_char(c)) {
        throw DataError("encode_transcript: OOV word '" + w +
                        "' contains character '" + std::string(1, c) +
                        "' with no char unit");
      }
      ids.push_back(vocab.char_id(c));
    }
    ids.push_back(kEunkId);
  }
  return ids;
}

struct DecodedTranscript {
  std::vector<std::string> words;
  bool malformed = false;  // unbalanced sunk/eunk or stray char units
};

/// Inverse of encode_transcript. sunk..eunk spans reassemble into one word;
/// unbalanced spans are emitted joined and flagged. Structural specials
/// (blank, sos, eos, pad) are skipped.
inline DecodedTranscript decode_tokens(const std::vector<int>& ids,
                                       const Vocabulary& vocab) {
  DecodedTranscript out;
  std::string span;
  bool in_span = false;
  for (int id : ids) {
    if (id == kBlankId || id == kSosId || id == kEosId || id == kPadId) continue;
    if (id == kSunkId) {
      if (in_span) {
        out.malformed = true;
        if (!span.empty()) out.words.push_back(span);
        span.clear();
      }
      in_span = true;
      continue;
    }
    if (id == kEunkId) {
      if (!in_span) {
        out.malformed = true;
        continue;
      }
      out.words.push_back(span);
      span.clear();
      in_span = false;
      continue;
    }
    if (vocab.is_char_unit(id)) {
      if (in_span) {
        span.push_back(vocab.char_of(id));
      } else {
        out.malformed = true;
        out.words.push_back(std::string(1, vocab.char_of(id)));
      }
      continue;
    }
    if (in_span) {
      // a word id inside a span: close the span as-is and flag
      out.malformed = true;
      if (!span.empty()) out.words.push_back(span);
      span.clear();
      in_span = false;
    }
    out.words.push_back(vocab.token(id));
  }
  if (in_span) {
    out.malformed = true;
    if (!span.empty()) out.words.push_back(span);
  }
  return out;
}

}  // namespace convasr
