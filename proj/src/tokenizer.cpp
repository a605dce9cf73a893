#include "attrib/tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "attrib/text.hpp"

namespace attrib {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

std::string escape_token(const std::string& t) {
  std::string out;
  out.reserve(t.size());
  for (char c : t) {
    if (c == '\\')
      out += "\\\\";
    else if (c == '\n')
      out += "\\n";
    else if (c == '\r')
      out += "\\r";
    else
      out.push_back(c);
  }
  return out;
}

std::string unescape_token(const std::string& t) {
  std::string out;
  out.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '\\' && i + 1 < t.size()) {
      const char n = t[++i];
      if (n == 'n')
        out.push_back('\n');
      else if (n == 'r')
        out.push_back('\r');
      else
        out.push_back(n);
    } else {
      out.push_back(t[i]);
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> special_tokens(TokenMode mode) {
  switch (mode) {
    case TokenMode::word:
      return {kUnkToken, "<bos>", "<eos>", kPadToken, kCrepToken, kWrepToken};
    case TokenMode::subword:
      return {kUnkToken, "<s>", "</s>", kPadToken};
    case TokenMode::character:
      return {kUnkToken, "<bos>", "<eos>", kPadToken};
  }
  throw std::logic_error("unknown token mode");
}

Vocab vocab_with_specials(TokenMode mode) {
  Vocab v;
  v.id_to_token = special_tokens(mode);
  for (int i = 0; i < static_cast<int>(v.id_to_token.size()); ++i)
    v.token_to_id[v.id_to_token[i]] = i;
  if (mode == TokenMode::word) {
    v.specials.crep = 4;
    v.specials.wrep = 5;
  }
  return v;
}

bool is_count_string(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

// Byte offsets of code point boundaries (offsets[0]=0 .. offsets[L]=size).
std::vector<std::size_t> char_offsets(const std::string& word) {
  std::vector<std::size_t> offsets{0};
  std::size_t pos = 0;
  while (pos < word.size()) {
    utf8_next(word, pos);
    offsets.push_back(pos);
  }
  return offsets;
}

}  // namespace

std::string token_mode_name(TokenMode mode) {
  switch (mode) {
    case TokenMode::word:
      return "word";
    case TokenMode::subword:
      return "subword";
    case TokenMode::character:
      return "char";
  }
  throw std::logic_error("unknown token mode");
}

TokenMode token_mode_from_name(const std::string& name) {
  if (name == "word") return TokenMode::word;
  if (name == "subword") return TokenMode::subword;
  if (name == "char" || name == "character") return TokenMode::character;
  throw std::invalid_argument("unknown tokenizer mode '" + name + "'");
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? specials.unk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("Vocab: id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(size()) + " tokens");
  return id_to_token[id];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocab file " + path);
  for (const auto& tok : id_to_token) out << escape_token(tok) << '\n';
}

Vocab Vocab::load(const std::string& path, TokenMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read vocab file " + path);
  Vocab v = vocab_with_specials(mode);
  const auto expected = special_tokens(mode);
  std::string line;
  int id = 0;
  while (std::getline(in, line)) {
    const std::string tok = unescape_token(line);
    if (id < static_cast<int>(expected.size())) {
      if (tok != expected[id])
        throw std::runtime_error("vocab file " + path + ": id " + std::to_string(id) +
                                 " should be special token " + expected[id]);
    } else {
      if (!v.token_to_id.emplace(tok, id).second)
        throw std::runtime_error("vocab file " + path + ": duplicate token at id " +
                                 std::to_string(id));
      v.id_to_token.push_back(tok);
    }
    ++id;
  }
  if (id < static_cast<int>(expected.size()))
    throw std::runtime_error("vocab file " + path + ": missing special tokens");
  return v;
}

void SubwordModel::rebuild_index() {
  piece_to_index.clear();
  max_piece_chars = 1;
  for (int i = 0; i < static_cast<int>(pieces.size()); ++i) {
    if (!piece_to_index.emplace(pieces[i].first, i).second)
      throw std::runtime_error("subword model: duplicate piece '" + pieces[i].first + "'");
    max_piece_chars = std::max(max_piece_chars, utf8_length(pieces[i].first));
  }
}

int SubwordModel::find(const std::string& piece) const {
  auto it = piece_to_index.find(piece);
  return it == piece_to_index.end() ? -1 : it->second;
}

void SubwordModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write subword model " + path);
  for (const auto& [piece, lp] : pieces) out << piece << '\t' << format_double(lp) << '\n';
}

SubwordModel SubwordModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read subword model " + path);
  SubwordModel m;
  std::string line;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error("subword model " + path + ": malformed line");
    double lp = 0.0;
    const auto res = std::from_chars(line.data() + tab + 1, line.data() + line.size(), lp);
    if (res.ec != std::errc())
      throw std::runtime_error("subword model " + path + ": bad log-prob");
    m.pieces.emplace_back(line.substr(0, tab), lp);
  }
  m.rebuild_index();
  return m;
}

Vocab build_word_vocab(const std::vector<std::string>& corpus_tokens, std::size_t max_size,
                       std::int64_t min_count) {
  if (corpus_tokens.empty()) throw std::runtime_error("build_word_vocab: empty corpus");
  Vocab v = vocab_with_specials(TokenMode::word);
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& tok : corpus_tokens) {
    if (v.token_to_id.count(tok)) continue;  // marker tokens are already reserved
    ++counts[tok];
  }
  std::vector<std::pair<std::string, std::int64_t>> sorted;
  sorted.reserve(counts.size());
  for (auto& kv : counts)
    if (kv.second >= min_count) sorted.emplace_back(kv.first, kv.second);
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (sorted.size() > max_size) sorted.resize(max_size);
  for (auto& [tok, cnt] : sorted) {
    v.token_to_id[tok] = v.size();
    v.id_to_token.push_back(tok);
  }
  return v;
}

Vocab build_char_vocab(const std::string& corpus_text) {
  if (corpus_text.empty()) throw std::runtime_error("build_char_vocab: empty corpus");
  Vocab v = vocab_with_specials(TokenMode::character);
  std::map<char32_t, std::string> chars;  // sorted by code point
  std::size_t pos = 0;
  while (pos < corpus_text.size()) {
    const std::size_t start = pos;
    const char32_t cp = utf8_next(corpus_text, pos);
    chars.emplace(cp, corpus_text.substr(start, pos - start));
  }
  for (auto& [cp, s] : chars) {
    if (v.token_to_id.count(s)) continue;
    v.token_to_id[s] = v.size();
    v.id_to_token.push_back(s);
  }
  return v;
}

Vocab vocab_from_subword(const SubwordModel& model) {
  Vocab v = vocab_with_specials(TokenMode::subword);
  for (const auto& [piece, lp] : model.pieces) {
    if (!v.token_to_id.emplace(piece, v.size()).second)
      throw std::runtime_error("vocab_from_subword: duplicate piece '" + piece + "'");
    v.id_to_token.push_back(piece);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Unigram training
// ---------------------------------------------------------------------------

namespace {

// Expected piece counts from one lattice forward-backward E-step.
// Returns the corpus log-likelihood under the current model.
double unigram_e_step(const SubwordModel& model,
                      const std::vector<std::pair<std::string, std::int64_t>>& word_freqs,
                      std::vector<double>& expected) {
  expected.assign(model.pieces.size(), 0.0);
  double loglik = 0.0;
  for (const auto& [word, freq] : word_freqs) {
    const auto offsets = char_offsets(word);
    const std::size_t n = offsets.size() - 1;
    if (n == 0) continue;
    // matches[i]: (end position, piece index) for pieces starting at char i
    std::vector<std::vector<std::pair<std::size_t, int>>> matches(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j <= std::min(n, i + model.max_piece_chars); ++j) {
        const int idx = model.find(word.substr(offsets[i], offsets[j] - offsets[i]));
        if (idx >= 0) matches[i].emplace_back(j, idx);
      }
    std::vector<double> alpha(n + 1, kNegInf), beta(n + 1, kNegInf);
    alpha[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == kNegInf) continue;
      for (const auto& [j, idx] : matches[i])
        alpha[j] = log_add(alpha[j], alpha[i] + model.pieces[idx].second);
    }
    beta[n] = 0.0;
    for (std::size_t i = n; i-- > 0;)
      for (const auto& [j, idx] : matches[i])
        beta[i] = log_add(beta[i], model.pieces[idx].second + beta[j]);
    const double z = alpha[n];
    if (z == kNegInf) continue;  // unreachable word; skip rather than poison the sums
    loglik += static_cast<double>(freq) * z;
    for (std::size_t i = 0; i < n; ++i) {
      if (alpha[i] == kNegInf) continue;
      for (const auto& [j, idx] : matches[i]) {
        const double post = alpha[i] + model.pieces[idx].second + beta[j] - z;
        expected[idx] += static_cast<double>(freq) * std::exp(post);
      }
    }
  }
  return loglik;
}

void unigram_m_step(SubwordModel& model, const std::vector<double>& expected) {
  double total = 0.0;
  for (double e : expected) total += e;
  const double log_total = std::log(total);
  constexpr double kCountFloor = 1e-12;
  for (std::size_t i = 0; i < model.pieces.size(); ++i) {
    const double e = std::max(expected[i], kCountFloor);
    model.pieces[i].second = std::log(e) - log_total;
  }
}

// Best log-prob for segmenting `word` while pretending piece `exclude` does
// not exist. Used to price the removal of a piece during pruning.
double viterbi_score_excluding(const SubwordModel& model, const std::string& word,
                               int exclude) {
  const auto offsets = char_offsets(word);
  const std::size_t n = offsets.size() - 1;
  std::vector<double> best(n + 1, kNegInf);
  best[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i] == kNegInf) continue;
    for (std::size_t j = i + 1; j <= std::min(n, i + model.max_piece_chars); ++j) {
      const int idx = model.find(word.substr(offsets[i], offsets[j] - offsets[i]));
      if (idx < 0 || idx == exclude) continue;
      best[j] = std::max(best[j], best[i] + model.pieces[idx].second);
    }
  }
  return best[n];
}

}  // namespace

double unigram_em_iteration(SubwordModel& model,
                            const std::vector<std::pair<std::string, std::int64_t>>& word_freqs) {
  std::vector<double> expected;
  const double loglik = unigram_e_step(model, word_freqs, expected);
  unigram_m_step(model, expected);
  return loglik;
}

SubwordModel train_unigram(const std::string& corpus_text, std::size_t target_size,
                           std::int64_t min_count) {
  if (corpus_text.empty()) throw std::runtime_error("train_unigram: empty corpus");
  constexpr std::size_t kMaxSeedChars = 8;
  constexpr double kPruneFraction = 0.2;
  constexpr int kEmPerRound = 2;

  // Marker-prefixed distinct words with frequencies, in sorted order so every
  // later accumulation is deterministic.
  std::unordered_map<std::string, std::int64_t> word_counts;
  for (const auto& tok : pre_tokenize(corpus_text)) ++word_counts[kWordMarker + tok];
  std::vector<std::pair<std::string, std::int64_t>> word_freqs(word_counts.begin(),
                                                               word_counts.end());
  std::sort(word_freqs.begin(), word_freqs.end());

  // Seed: substring counts plus the full character set.
  std::unordered_map<std::string, std::int64_t> sub_counts;
  std::map<std::string, std::int64_t> char_counts;  // sorted
  for (const auto& [word, freq] : word_freqs) {
    const auto offsets = char_offsets(word);
    const std::size_t n = offsets.size() - 1;
    for (std::size_t i = 0; i < n; ++i) {
      char_counts[word.substr(offsets[i], offsets[i + 1] - offsets[i])] += freq;
      for (std::size_t j = i + 2; j <= std::min(n, i + kMaxSeedChars); ++j)
        sub_counts[word.substr(offsets[i], offsets[j] - offsets[i])] += freq;
    }
  }
  if (target_size < char_counts.size())
    throw std::runtime_error("train_unigram: target_size " + std::to_string(target_size) +
                             " below the " + std::to_string(char_counts.size()) +
                             " distinct characters");

  SubwordModel model;
  double total = 0.0;
  for (const auto& [piece, cnt] : char_counts) {
    model.pieces.emplace_back(piece, static_cast<double>(cnt));
    total += static_cast<double>(cnt);
  }
  const std::size_t n_chars = model.pieces.size();
  std::vector<std::pair<std::string, std::int64_t>> multi(sub_counts.begin(), sub_counts.end());
  std::sort(multi.begin(), multi.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [piece, cnt] : multi) {
    if (cnt < min_count) continue;
    model.pieces.emplace_back(piece, static_cast<double>(cnt));
    total += static_cast<double>(cnt);
  }
  for (auto& [piece, lp] : model.pieces) lp = std::log(lp) - std::log(total);
  model.rebuild_index();

  while (true) {
    std::vector<double> expected;
    for (int it = 0; it < kEmPerRound; ++it) {
      unigram_e_step(model, word_freqs, expected);
      unigram_m_step(model, expected);
    }
    if (model.pieces.size() <= target_size) break;

    // Price each multi-character piece by the likelihood lost when its
    // occurrences must be re-segmented with the remaining pieces.
    unigram_e_step(model, word_freqs, expected);
    std::vector<std::pair<double, int>> losses;  // (loss, piece index)
    for (int i = 0; i < static_cast<int>(model.pieces.size()); ++i) {
      if (utf8_length(model.pieces[i].first) <= 1) continue;  // chars are never pruned
      const double alt = viterbi_score_excluding(model, model.pieces[i].first, i);
      losses.emplace_back(expected[i] * (model.pieces[i].second - alt), i);
    }
    std::size_t n_prune = static_cast<std::size_t>(
        std::ceil(kPruneFraction * static_cast<double>(losses.size())));
    n_prune = std::min(n_prune, model.pieces.size() - std::max(target_size, n_chars));
    if (n_prune == 0) break;
    std::sort(losses.begin(), losses.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return model.pieces[a.second].first < model.pieces[b.second].first;
    });
    std::vector<bool> drop(model.pieces.size(), false);
    for (std::size_t k = 0; k < n_prune; ++k) drop[losses[k].second] = true;
    std::vector<std::pair<std::string, double>> kept;
    kept.reserve(model.pieces.size() - n_prune);
    for (std::size_t i = 0; i < model.pieces.size(); ++i)
      if (!drop[i]) kept.push_back(std::move(model.pieces[i]));
    model.pieces = std::move(kept);
    model.rebuild_index();
  }

  std::sort(model.pieces.begin(), model.pieces.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  model.rebuild_index();
  return model;
}

std::vector<int> segment_viterbi(const SubwordModel& model, const std::string& word) {
  if (word.empty()) return {};
  const auto offsets = char_offsets(word);
  const std::size_t n = offsets.size() - 1;
  // Unknown characters score below every real piece so they are used only
  // when unavoidable.
  double min_lp = 0.0;
  for (const auto& [piece, lp] : model.pieces) min_lp = std::min(min_lp, lp);
  const double unk_score = min_lp - 10.0;

  struct Cell {
    double score = kNegInf;
    int n_pieces = 0;
    int piece = -2;       // piece chosen at this position (-1 = unk, -2 = unset)
    std::size_t next = 0;  // position after that piece
  };
  std::vector<Cell> dp(n + 1);
  dp[n].score = 0.0;
  // Right-to-left so local tie-breaking prefers the lexicographically
  // smallest piece at the earliest position.
  for (std::size_t i = n; i-- > 0;) {
    auto consider = [&](std::size_t j, int idx, double lp, const std::string& surface) {
      if (dp[j].score == kNegInf) return;
      const double score = lp + dp[j].score;
      const int count = dp[j].n_pieces + 1;
      bool better = false;
      if (score > dp[i].score) {
        better = true;
      } else if (score == dp[i].score) {
        if (count < dp[i].n_pieces) {
          better = true;
        } else if (count == dp[i].n_pieces && dp[i].piece != -2) {
          const std::string current = dp[i].piece >= 0
                                          ? model.pieces[dp[i].piece].first
                                          : word.substr(offsets[i], offsets[dp[i].next] - offsets[i]);
          better = surface < current;
        }
      }
      if (better) dp[i] = {score, count, idx, j};
    };
    for (std::size_t j = i + 1; j <= std::min(n, i + model.max_piece_chars); ++j) {
      const std::string sub = word.substr(offsets[i], offsets[j] - offsets[i]);
      const int idx = model.find(sub);
      if (idx >= 0) consider(j, idx, model.pieces[idx].second, sub);
    }
    if (dp[i].piece == -2)  // nothing matched: consume one character as unk
      consider(i + 1, -1, unk_score, word.substr(offsets[i], offsets[i + 1] - offsets[i]));
  }
  std::vector<int> out;
  for (std::size_t pos = 0; pos < n; pos = dp[pos].next) out.push_back(dp[pos].piece);
  return out;
}

// ---------------------------------------------------------------------------
// Encode / decode
// ---------------------------------------------------------------------------

std::vector<std::string> apply_repetition_markers(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t run = 1;
    while (i + run < tokens.size() && tokens[i + run] == tokens[i]) ++run;
    if (run >= 3) {
      out.emplace_back(kWrepToken);
      out.push_back(std::to_string(run));
      out.push_back(tokens[i]);
      i += run;
      continue;
    }
    // Trailing character run of length >= 3 collapses to [stem, <crep>, count].
    const auto chars = utf8_chars(tokens[i]);
    std::size_t tail = 1;
    while (tail < chars.size() && chars[chars.size() - 1 - tail] == chars.back()) ++tail;
    if (tail >= 3 && tail < chars.size()) {
      std::string stem;
      for (std::size_t c = 0; c + tail - 1 < chars.size(); ++c) stem += chars[c];
      out.push_back(std::move(stem));
      out.emplace_back(kCrepToken);
      out.push_back(std::to_string(tail));
    } else if (tail >= 3 && tail == chars.size()) {
      out.push_back(chars[0]);
      out.emplace_back(kCrepToken);
      out.push_back(std::to_string(tail));
    } else {
      out.push_back(tokens[i]);
    }
    ++i;
  }
  return out;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids{vocab.specials.bos};
  switch (mode) {
    case TokenMode::word: {
      for (const auto& tok : apply_repetition_markers(pre_tokenize(text)))
        ids.push_back(vocab.id(tok));
      break;
    }
    case TokenMode::character: {
      std::size_t pos = 0;
      while (pos < text.size()) {
        const std::size_t start = pos;
        utf8_next(text, pos);
        ids.push_back(vocab.id(text.substr(start, pos - start)));
      }
      break;
    }
    case TokenMode::subword: {
      if (!subword) throw std::runtime_error("subword tokenizer has no model");
      const int base = static_cast<int>(special_tokens(TokenMode::subword).size());
      for (const auto& tok : pre_tokenize(text)) {
        for (int idx : segment_viterbi(*subword, kWordMarker + tok))
          ids.push_back(idx < 0 ? vocab.specials.unk : base + idx);
      }
      break;
    }
  }
  ids.push_back(vocab.specials.eos);
  return ids;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
  const auto& sp = vocab.specials;
  auto is_structural = [&](int id) { return id == sp.bos || id == sp.eos || id == sp.pad; };
  switch (mode) {
    case TokenMode::character: {
      std::string out;
      for (int id : ids) {
        if (is_structural(id)) continue;
        if (id == sp.unk) {
          out += "\xef\xbf\xbd";  // U+FFFD
          continue;
        }
        out += vocab.token(id);
      }
      return out;
    }
    case TokenMode::subword: {
      std::string out;
      for (int id : ids) {
        if (is_structural(id)) continue;
        if (id == sp.unk) {
          out += "\xef\xbf\xbd";
          continue;
        }
        const std::string& piece = vocab.token(id);
        constexpr std::size_t kMarkerLen = 3;
        if (piece.rfind(kWordMarker, 0) == 0) {
          if (!out.empty()) out.push_back(' ');
          out += piece.substr(kMarkerLen);
        } else {
          out += piece;
        }
      }
      return out;
    }
    case TokenMode::word: {
      std::vector<std::string> words;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (is_structural(id)) continue;
        if (id == sp.wrep) {
          // [<wrep>, count, token] repeats the token; with an unrecoverable
          // count the token is emitted once.
          std::int64_t count = 1;
          std::string word = kUnkToken;
          if (i + 1 < ids.size()) {
            const std::string c = vocab.token(ids[++i]);
            if (is_count_string(c)) count = std::stoll(c);
          }
          if (i + 1 < ids.size()) word = vocab.token(ids[++i]);
          for (std::int64_t k = 0; k < count; ++k) words.push_back(word);
          continue;
        }
        if (id == sp.crep) {
          // [stem, <crep>, count] expands the stem's final character.
          std::int64_t count = 1;
          if (i + 1 < ids.size()) {
            const std::string c = vocab.token(ids[++i]);
            if (is_count_string(c)) count = std::stoll(c);
          }
          if (!words.empty() && count > 1) {
            auto chars = utf8_chars(words.back());
            if (!chars.empty())
              for (std::int64_t k = 1; k < count; ++k) words.back() += chars.back();
          }
          continue;
        }
        words.push_back(vocab.token(id));
      }
      std::string out;
      for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
      }
      return out;
    }
  }
  throw std::logic_error("unknown token mode");
}

}  // namespace attrib
