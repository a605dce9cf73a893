#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace attrib {

enum class TokenMode { word, subword, character };

std::string token_mode_name(TokenMode mode);
TokenMode token_mode_from_name(const std::string& name);

// Reserved ids. All modes use the first four; the repetition markers exist in
// word mode only. Specials always occupy the lowest ids in this order.
struct SpecialIds {
  int unk = 0;
  int bos = 1;
  int eos = 2;
  int pad = 3;
  int crep = -1;  // character-repetition marker (word mode)
  int wrep = -1;  // word-repetition marker (word mode)
  int count() const { return wrep >= 0 ? 6 : 4; }
};

// Bidirectional token <-> id map. Immutable once built.
struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;
  SpecialIds specials;

  int size() const { return static_cast<int>(id_to_token.size()); }
  // unk id for unknown tokens.
  int id(const std::string& token) const;
  const std::string& token(int id) const;

  void save(const std::string& path) const;
  static Vocab load(const std::string& path, TokenMode mode);
};

// Unigram segmentation model: independent log-probabilities per piece.
// Word-initial pieces carry the boundary marker kWordMarker so that decoding
// can restore word boundaries unambiguously.
struct SubwordModel {
  std::vector<std::pair<std::string, double>> pieces;
  std::unordered_map<std::string, int> piece_to_index;
  std::size_t max_piece_chars = 1;

  void rebuild_index();
  int find(const std::string& piece) const;

  void save(const std::string& path) const;
  static SubwordModel load(const std::string& path);
};

inline constexpr const char* kWordMarker = "\xe2\x96\x81";  // U+2581

// --- vocabulary builders ---------------------------------------------------

// Keeps tokens with count >= min_count, sorted by (count desc, token asc),
// truncated to max_size; specials prepended. The stream is expected to be
// pre-split (see pre_tokenize) with repetition markers already applied.
Vocab build_word_vocab(const std::vector<std::string>& corpus_tokens,
                       std::size_t max_size = 60000, std::int64_t min_count = 3);

// Sorted distinct code points plus specials.
Vocab build_char_vocab(const std::string& corpus_text);

// Specials followed by the model's pieces, in model order.
Vocab vocab_from_subword(const SubwordModel& model);

// --- unigram training ------------------------------------------------------

// Trains a unigram segmentation model:
//   1. seed candidates: every substring of length <= 8 code points seen at
//      least min_count times, plus every single character (never pruned);
//   2. EM: the E-step runs lattice forward-backward per distinct word to get
//      expected piece counts, the M-step renormalizes log-probabilities;
//   3. after each pair of EM iterations, the 20% of multi-character pieces
//      whose removal costs the least likelihood are dropped, until the piece
//      count fits target_size.
// Words are marker-prefixed before training. Throws if target_size cannot
// hold the distinct characters.
SubwordModel train_unigram(const std::string& corpus_text, std::size_t target_size = 30000,
                           std::int64_t min_count = 3);

// One EM iteration over (word, frequency) pairs: accumulates expected counts
// under the current log-probs and renormalizes. Returns the corpus
// log-likelihood under the probabilities *before* the update, so successive
// return values are non-decreasing. Exposed for oracle tests.
double unigram_em_iteration(SubwordModel& model,
                            const std::vector<std::pair<std::string, std::int64_t>>& word_freqs);

// Best segmentation by total log-prob (Viterbi over the position lattice).
// Returns indices into model.pieces; characters absent from the model come
// out as -1 (unk). Ties prefer fewer pieces, then the lexicographically
// smallest piece at the earliest position. Empty input gives an empty list.
std::vector<int> segment_viterbi(const SubwordModel& model, const std::string& word);

// --- encode / decode -------------------------------------------------------

struct Tokenizer {
  TokenMode mode = TokenMode::word;
  Vocab vocab;
  std::optional<SubwordModel> subword;

  // Prepends bos and appends eos. Unknown tokens map to unk.
  std::vector<int> encode(const std::string& text) const;
  // Inverse up to unk substitution; char mode is exact for in-vocab text.
  // Throws std::out_of_range on ids outside the vocabulary.
  std::string decode(const std::vector<int>& ids) const;
};

// Word-mode repetition markers. A token repeated >= 3 times consecutively
// becomes [<wrep>, count, token]; a token whose trailing character run is
// >= 3 long becomes [stem, <crep>, count] where stem keeps one copy of the
// run character. Interior runs are left alone. Both transforms are inverted
// by Tokenizer::decode.
std::vector<std::string> apply_repetition_markers(const std::vector<std::string>& tokens);

inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kCrepToken = "<crep>";
inline constexpr const char* kWrepToken = "<wrep>";

}  // namespace attrib
