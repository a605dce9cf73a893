#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"

#include "attrib/rng.hpp"
#include "attrib/text.hpp"
#include "attrib/tokenizer.hpp"

using namespace attrib;

namespace {

SubwordModel toy_model(std::vector<std::pair<std::string, double>> pieces) {
  SubwordModel m;
  m.pieces = std::move(pieces);
  m.rebuild_index();
  return m;
}

// All segmentations of `word` over the model, by exhaustive enumeration of
// the 2^(L-1) split masks; returns the best total log-prob (unsegmentable
// splits are skipped).
double brute_force_best(const SubwordModel& model, const std::string& word) {
  const auto chars = utf8_chars(word);
  const std::size_t L = chars.size();
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t mask = 0; mask < (1u << (L - 1)); ++mask) {
    double score = 0.0;
    bool ok = true;
    std::string piece = chars[0];
    for (std::size_t i = 1; i <= L; ++i) {
      const bool split_here = i == L || (mask >> (i - 1)) & 1;
      if (split_here) {
        const int idx = model.find(piece);
        if (idx < 0) {
          ok = false;
          break;
        }
        score += model.pieces[idx].second;
        piece.clear();
      }
      if (i < L) piece += chars[i];
    }
    if (ok) best = std::max(best, score);
  }
  return best;
}

double viterbi_score(const SubwordModel& model, const std::string& word) {
  double s = 0.0;
  for (int idx : segment_viterbi(model, word)) {
    REQUIRE(idx >= 0);
    s += model.pieces[idx].second;
  }
  return s;
}

std::string word_mode_text(const std::string& text) {
  std::ostringstream os;
  for (const auto& t : pre_tokenize(text)) os << t << ' ';
  return os.str();
}

}  // namespace

TEST_CASE("pre-tokenizer splits whitespace and punctuation") {
  const auto toks = pre_tokenize("Hello, world! one  two\nthree");
  CHECK(toks == std::vector<std::string>{"Hello", ",", "world", "!", "one", "two", "three"});
}

TEST_CASE("word vocab drops tokens under the count threshold") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 3; ++i) corpus.push_back("kept");
  corpus.push_back("x");
  corpus.push_back("x");
  Vocab v = build_word_vocab(corpus);
  CHECK(v.token_to_id.count("kept") == 1);
  CHECK(v.token_to_id.count("x") == 0);
  CHECK(v.id("x") == v.specials.unk);
}

TEST_CASE("word vocab keeps frequent tokens plus specials") {
  std::vector<std::string> corpus{"a", "a", "a", "b", "b", "b"};
  Vocab v = build_word_vocab(corpus, 10);
  CHECK(v.size() == 6 + 2);  // six specials + {a, b}
  CHECK(v.token_to_id.count("a") == 1);
  CHECK(v.token_to_id.count("b") == 1);
  CHECK_THROWS(build_word_vocab({}));
}

TEST_CASE("word vocab truncates to max_size most frequent") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 701; ++i) {
    const std::string tok = "w" + std::to_string(i);
    const int count = 3 + (i % 7);
    for (int k = 0; k < count; ++k) corpus.push_back(tok);
  }
  Vocab v = build_word_vocab(corpus, 600);
  CHECK(v.size() == 600 + 6);
  // ties broken by (count desc, token asc): the highest-count tokens stay
  Vocab full = build_word_vocab(corpus, 10000);
  CHECK(full.size() == 701 + 6);
}

TEST_CASE("char vocab is the sorted character set plus specials") {
  Vocab v = build_char_vocab("aab");
  CHECK(v.size() == 4 + 2);
  CHECK(v.token_to_id.count("a") == 1);
  CHECK(v.token_to_id.count("b") == 1);

  Tokenizer t{TokenMode::character, v, std::nullopt};
  const auto ids = t.encode("abc");
  CHECK(ids.size() == 5);  // bos a b unk eos
  CHECK(ids[1] == v.id("a"));
  CHECK(ids[2] == v.id("b"));
  CHECK(ids[3] == v.specials.unk);
}

TEST_CASE("char vocab counts distinct code points") {
  // 10 distinct characters here, mimicking the fixed-size character
  // inventory idea; multi-byte UTF-8 counts once per code point.
  Vocab v = build_char_vocab("abc \xe0\xa6\x85\xe0\xa6\x86xyz.");
  CHECK(v.size() == 10 + 4);
}

TEST_CASE("unigram EM single iteration matches the hand lattice") {
  // Word "abab" over pieces {a, b, ab}, uniform initial probabilities.
  // Posterior over segmentations: [a b a b]:1/16, [ab a b]:3/16,
  // [a b ab]:3/16, [ab ab]:9/16 -> expected counts a=b=0.5, ab=1.5,
  // normalized to (0.2, 0.2, 0.6).
  auto m = toy_model({{"a", std::log(1.0 / 3)}, {"b", std::log(1.0 / 3)},
                      {"ab", std::log(1.0 / 3)}});
  std::vector<std::pair<std::string, std::int64_t>> words{{"abab", 1}};
  const double ll0 = unigram_em_iteration(m, words);
  CHECK(ll0 == doctest::Approx(std::log(16.0 / 81.0)).epsilon(1e-12));
  CHECK(m.pieces[m.find("a")].second == doctest::Approx(std::log(0.2)).epsilon(1e-12));
  CHECK(m.pieces[m.find("b")].second == doctest::Approx(std::log(0.2)).epsilon(1e-12));
  CHECK(m.pieces[m.find("ab")].second == doctest::Approx(std::log(0.6)).epsilon(1e-12));
}

TEST_CASE("unigram EM log-likelihood is non-decreasing") {
  auto m = toy_model({{"a", std::log(0.25)},
                      {"b", std::log(0.25)},
                      {"ab", std::log(0.25)},
                      {"ba", std::log(0.25)}});
  std::vector<std::pair<std::string, std::int64_t>> words{
      {"abab", 100}, {"ba", 7}, {"aab", 3}, {"b", 11}};
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < 12; ++it) {
    const double ll = unigram_em_iteration(m, words);
    CHECK(ll >= prev - 1e-9);
    prev = ll;
  }
  // After EM on abab-dominated data, the whole-word route wins:
  CHECK(m.pieces[m.find("ab")].second > m.pieces[m.find("a")].second);
  CHECK(m.pieces[m.find("ab")].second > m.pieces[m.find("b")].second);
}

TEST_CASE("train_unigram on k distinct characters with target k keeps the characters") {
  // 4 distinct characters (3 letters + the word marker); the pruning floor
  // is exactly the character set.
  const std::string corpus = "abc abc abc cab cab bca";
  SubwordModel m = train_unigram(corpus, 4);
  CHECK(m.pieces.size() == 4);
  std::set<std::string> pieces;
  for (auto& [p, lp] : m.pieces) {
    pieces.insert(p);
    CHECK(lp < 0.0);
  }
  CHECK(pieces == std::set<std::string>{kWordMarker, "a", "b", "c"});
  CHECK_THROWS(train_unigram(corpus, 3));  // below the distinct character count
}

TEST_CASE("substrings appearing fewer than min_count times never seed the model") {
  // "xy" appears twice; every piece of the trained model containing more
  // than one character must occur at least 3 times.
  const std::string corpus = "xy xy aaa aaa aaa aaa";
  SubwordModel m = train_unigram(corpus, 50);
  CHECK(m.find("xy") == -1);
  CHECK(m.find(std::string(kWordMarker) + "xy") == -1);
  CHECK(m.find("aa") >= 0);
}

TEST_CASE("every character seen in training segments without unk") {
  const std::string corpus = "qqq z pp z qqq pp mno";
  SubwordModel m = train_unigram(corpus, 64);
  for (const std::string& w : {"q", "z", "zq", "ppq", "omn"})
    for (int idx : segment_viterbi(m, w)) CHECK(idx >= 0);
}

TEST_CASE("viterbi picks the higher-probability segmentation") {
  auto m = toy_model({{"ab", -1.0}, {"a", -2.0}, {"b", -2.5}});
  const auto seg = segment_viterbi(m, "ab");
  REQUIRE(seg.size() == 1);
  CHECK(m.pieces[seg[0]].first == "ab");
  CHECK(brute_force_best(m, "ab") == doctest::Approx(-1.0));

  const auto seg_b = segment_viterbi(m, "b");
  REQUIRE(seg_b.size() == 1);
  CHECK(m.pieces[seg_b[0]].first == "b");
}

TEST_CASE("viterbi maps unknown characters to unk") {
  auto m = toy_model({{"a", -1.0}});
  const auto seg = segment_viterbi(m, "z");
  REQUIRE(seg.size() == 1);
  CHECK(seg[0] == -1);
  CHECK(segment_viterbi(m, "").empty());
}

TEST_CASE("viterbi equals brute force over random toy words") {
  // 50-piece model over {a..e}, then every word of length <= 8 is checked
  // against exhaustive enumeration of all 2^(L-1) segmentations.
  Rng rng(99);
  SubwordModel m;
  std::set<std::string> seen;
  const std::string alpha = "abcde";
  for (char c : alpha) {
    m.pieces.emplace_back(std::string(1, c), -1.0 - rng.next_double() * 3.0);
    seen.insert(m.pieces.back().first);
  }
  while (m.pieces.size() < 50) {
    const std::size_t len = 2 + rng.next_below(4);
    std::string p;
    for (std::size_t i = 0; i < len; ++i) p += alpha[rng.next_below(alpha.size())];
    if (!seen.insert(p).second) continue;
    m.pieces.emplace_back(p, -1.0 - rng.next_double() * 6.0);
  }
  m.rebuild_index();

  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.next_below(8);
    std::string w;
    for (std::size_t i = 0; i < len; ++i) w += alpha[rng.next_below(alpha.size())];
    if (std::fabs(viterbi_score(m, w) - brute_force_best(m, w)) > 1e-12) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("viterbi ties prefer fewer pieces") {
  // "aa" as one piece or two: identical total score, the single piece wins.
  auto m = toy_model({{"a", -1.0}, {"aa", -2.0}});
  const auto seg = segment_viterbi(m, "aa");
  REQUIRE(seg.size() == 1);
  CHECK(m.pieces[seg[0]].first == "aa");
}

TEST_CASE("char mode round-trips exactly") {
  const std::string text = "it was; the best of times!";
  Tokenizer t{TokenMode::character, build_char_vocab(text), std::nullopt};
  CHECK(t.decode(t.encode(text)) == text);
  CHECK(t.decode(t.encode("best of; times")) == "best of; times");
}

TEST_CASE("word mode replaces OOV with unk and joins with single spaces") {
  const std::string corpus = word_mode_text("the cat sat the cat sat the cat sat");
  Tokenizer t{TokenMode::word, build_word_vocab(pre_tokenize(corpus)), std::nullopt};
  const auto ids = t.encode("the dog sat");
  CHECK(ids.front() == t.vocab.specials.bos);
  CHECK(ids.back() == t.vocab.specials.eos);
  CHECK(ids[2] == t.vocab.specials.unk);
  CHECK(t.decode(ids) == "the <unk> sat");
}

TEST_CASE("word repetition markers collapse and decode") {
  std::vector<std::string> corpus;
  for (int i = 0; i < 5; ++i)
    for (const char* w : {"go", "3", "stop"}) corpus.push_back(w);
  Vocab v = build_word_vocab(corpus, 100, 1);
  Tokenizer t{TokenMode::word, v, std::nullopt};
  const auto ids = t.encode("stop go go go stop");
  // -> stop <wrep> 3 go stop
  REQUIRE(ids.size() == 7);
  CHECK(ids[2] == v.specials.wrep);
  CHECK(t.decode(ids) == "stop go go go stop");
}

TEST_CASE("character repetition markers collapse trailing runs") {
  const auto marked = apply_repetition_markers({"nooo", "x"});
  CHECK(marked == std::vector<std::string>{"no", kCrepToken, "3", "x"});
  // interior runs are left alone
  CHECK(apply_repetition_markers({"look"}) == std::vector<std::string>{"look"});
  CHECK(apply_repetition_markers({"loook"}) == std::vector<std::string>{"loook"});

  std::vector<std::string> corpus{"no", "3", "4", "x"};
  Vocab v = build_word_vocab(corpus, 100, 1);
  Tokenizer t{TokenMode::word, v, std::nullopt};
  CHECK(t.decode(t.encode("nooo x")) == "nooo x");
  CHECK(t.decode(t.encode("noooo")) == "noooo");
}

TEST_CASE("subword encode/decode restores word boundaries") {
  const std::string corpus =
      "unfold unfold unfold folding folding folding fold fold fold un un un";
  SubwordModel m = train_unigram(corpus, 24);
  Tokenizer t{TokenMode::subword, vocab_from_subword(m), m};
  const auto ids = t.encode("unfold folding");
  CHECK(ids.front() == t.vocab.specials.bos);
  CHECK(t.decode(ids) == "unfold folding");
}

TEST_CASE("vocab files round-trip byte-for-byte and reject duplicates") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "attrib_vocab_test";
  fs::create_directories(dir);
  const std::string corpus = "alpha beta beta gamma gamma gamma alpha alpha";
  Vocab v = build_word_vocab(pre_tokenize(corpus), 100, 1);
  const auto p1 = (dir / "v1.txt").string(), p2 = (dir / "v2.txt").string();
  v.save(p1);
  Vocab u = Vocab::load(p1, TokenMode::word);
  CHECK(u.id_to_token == v.id_to_token);
  u.save(p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());

  std::ofstream bad(dir / "bad.txt");
  bad << "<unk>\n<bos>\n<eos>\n<pad>\n<crep>\n<wrep>\ndup\ndup\n";
  bad.close();
  CHECK_THROWS((void)Vocab::load((dir / "bad.txt").string(), TokenMode::word));
  fs::remove_all(dir);
}

TEST_CASE("char-mode vocab files survive newline and backslash tokens") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "attrib_char_vocab.txt";
  Vocab v = build_char_vocab("a\nb\\c d");
  v.save(path.string());
  Vocab u = Vocab::load(path.string(), TokenMode::character);
  CHECK(u.id_to_token == v.id_to_token);
  Tokenizer t{TokenMode::character, u, std::nullopt};
  CHECK(t.decode(t.encode("a\nb\\c")) == "a\nb\\c");
  fs::remove(path);
}

TEST_CASE("training the same corpus twice gives byte-identical model files") {
  namespace fs = std::filesystem;
  const std::string corpus =
      "the unfolding of the folded fold unfolds the unfolded folds refold";
  const auto dir = fs::temp_directory_path() / "attrib_subword_det";
  fs::create_directories(dir);
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    SubwordModel m = train_unigram(corpus, 40);
    const auto path = (dir / ("m" + std::to_string(run) + ".tsv")).string();
    m.save(path);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    bytes[run] = ss.str();
  }
  CHECK(bytes[0] == bytes[1]);
  CHECK(!bytes[0].empty());

  SubwordModel loaded = SubwordModel::load((dir / "m0.tsv").string());
  SubwordModel fresh = train_unigram(corpus, 40);
  REQUIRE(loaded.pieces.size() == fresh.pieces.size());
  for (std::size_t i = 0; i < loaded.pieces.size(); ++i) {
    CHECK(loaded.pieces[i].first == fresh.pieces[i].first);
    CHECK(loaded.pieces[i].second == fresh.pieces[i].second);  // shortest round-trip decimals
  }
  fs::remove_all(dir);
}

TEST_CASE("any string segments without error in every mode") {
  const std::string corpus = "plain text corpus with a few words";
  SubwordModel m = train_unigram(corpus, 40);
  Tokenizer sub{TokenMode::subword, vocab_from_subword(m), m};
  Tokenizer chars{TokenMode::character, build_char_vocab(corpus), std::nullopt};
  Tokenizer words{TokenMode::word, build_word_vocab(pre_tokenize(corpus), 100, 1),
                  std::nullopt};
  Rng rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    std::string junk;
    const std::size_t len = 1 + rng.next_below(30);
    for (std::size_t i = 0; i < len; ++i)
      junk += static_cast<char>(32 + rng.next_below(95));
    for (const Tokenizer* t : {&sub, &chars, &words}) {
      const auto ids = t->encode(junk);
      CHECK(ids.size() >= 2);
      (void)t->decode(ids);
    }
  }
}

TEST_CASE("decode rejects out-of-range ids") {
  Tokenizer t{TokenMode::character, build_char_vocab("abc"), std::nullopt};
  CHECK_THROWS_AS(t.decode({t.vocab.size()}), std::out_of_range);
}
