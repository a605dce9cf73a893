#include "attrib/corpus.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "attrib/rng.hpp"
#include "attrib/text.hpp"

namespace fs = std::filesystem;

namespace attrib {

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw std::runtime_error("error while reading " + path.string());
  return ss.str();
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs_only) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs_only ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Per-author sample indices, authors in sorted order.
std::map<std::string, std::vector<std::size_t>> by_author(const std::vector<Sample>& samples) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[samples[i].author].push_back(i);
  return groups;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.next_below(i)]);
}

}  // namespace

std::string sample_text(const Sample& sample) {
  std::string out;
  for (std::size_t i = 0; i < sample.tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += sample.tokens[i];
  }
  return out;
}

std::vector<Document> ingest(const std::string& directory) {
  const fs::path root(directory);
  if (!fs::is_directory(root))
    throw std::runtime_error("ingest: " + directory + " is not a directory");
  std::vector<Document> docs;
  for (const auto& author_dir : sorted_entries(root, true)) {
    const std::string author = author_dir.filename().string();
    const auto files = sorted_entries(author_dir, false);
    if (files.empty()) {
      std::cerr << "warning: author directory " << author_dir.string() << " is empty, skipped\n";
      continue;
    }
    for (const auto& file : files) {
      std::string text = normalize_text(read_file(file));
      if (text.empty()) {
        std::cerr << "warning: " << file.string() << " has no content, skipped\n";
        continue;
      }
      docs.push_back({std::move(text), author, file.string()});
    }
  }
  return docs;
}

std::string read_corpus_text(const std::string& path) {
  const fs::path p(path);
  if (fs::is_regular_file(p)) return normalize_text(read_file(p));
  if (!fs::is_directory(p)) throw std::runtime_error("no such corpus path: " + path);
  // Directory: concatenate every regular file, recursing one level into
  // author-style subdirectories.
  std::string all;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw std::runtime_error("corpus directory " + path + " has no files");
  for (const auto& f : files) {
    const std::string text = normalize_text(read_file(f));
    if (text.empty()) continue;
    if (!all.empty()) all.push_back(' ');
    all += text;
  }
  if (all.empty()) throw std::runtime_error("corpus " + path + " is empty after normalization");
  return all;
}

std::vector<Sample> chunk_documents(const std::vector<Document>& docs,
                                    std::size_t chunk_words) {
  if (chunk_words < 1) throw std::invalid_argument("chunk_documents: chunk_words must be >= 1");
  std::vector<Sample> samples;
  for (const auto& doc : docs) {
    const auto tokens = pre_tokenize(doc.text);
    for (std::size_t start = 0; start + chunk_words <= tokens.size(); start += chunk_words) {
      Sample s;
      s.tokens.assign(tokens.begin() + start, tokens.begin() + start + chunk_words);
      s.author = doc.author;
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

std::pair<std::vector<Sample>, std::vector<Sample>> stratified_split(
    const std::vector<Sample>& samples, double test_frac, std::uint64_t seed) {
  Rng rng = Rng(seed).stream(rng_stream::kSplit);
  std::vector<Sample> train, test;
  for (auto& [author, idx] : by_author(samples)) {
    if (idx.size() < 2)
      throw std::runtime_error("stratified_split: author '" + author +
                               "' has fewer than 2 samples");
    auto shuffled = idx;
    shuffle_indices(shuffled, rng);
    const std::size_t n_test =
        std::max<std::size_t>(1, static_cast<std::size_t>(idx.size() * test_frac));
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      (i < n_test ? test : train).push_back(samples[shuffled[i]]);
  }
  return {std::move(train), std::move(test)};
}

std::vector<std::size_t> balanced_subset_indices(const std::vector<Sample>& samples,
                                                 int n_authors, std::uint64_t seed) {
  if (n_authors < 2) throw std::invalid_argument("balanced_subset: need at least 2 authors");
  Rng rng = Rng(seed).stream(rng_stream::kSplit);
  auto groups = by_author(samples);
  if (static_cast<std::size_t>(n_authors) > groups.size())
    throw std::invalid_argument("balanced_subset: only " + std::to_string(groups.size()) +
                                " authors available");
  std::vector<std::string> authors;
  for (auto& [a, idx] : groups) authors.push_back(a);
  std::vector<std::size_t> order(authors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_indices(order, rng);
  order.resize(n_authors);
  std::sort(order.begin(), order.end());  // stable output order

  std::size_t min_count = SIZE_MAX;
  for (std::size_t o : order) min_count = std::min(min_count, groups[authors[o]].size());

  std::vector<std::size_t> out;
  for (std::size_t o : order) {
    auto idx = groups[authors[o]];
    shuffle_indices(idx, rng);
    idx.resize(min_count);
    std::sort(idx.begin(), idx.end());
    out.insert(out.end(), idx.begin(), idx.end());
  }
  return out;
}

std::vector<Sample> balanced_subset(const std::vector<Sample>& samples, int n_authors,
                                    std::uint64_t seed) {
  std::vector<Sample> out;
  for (std::size_t i : balanced_subset_indices(samples, n_authors, seed))
    out.push_back(samples[i]);
  return out;
}

std::vector<Fold> kfold_split(const std::vector<Sample>& samples, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  Rng rng = Rng(seed).stream(rng_stream::kSplit);
  auto groups = by_author(samples);
  // fold assignment per sample index
  std::vector<int> fold_of(samples.size(), -1);
  for (auto& [author, idx] : groups) {
    if (idx.size() < static_cast<std::size_t>(k))
      throw std::runtime_error("kfold_split: author '" + author + "' has fewer than " +
                               std::to_string(k) + " samples");
    auto shuffled = idx;
    shuffle_indices(shuffled, rng);
    for (std::size_t i = 0; i < shuffled.size(); ++i)
      fold_of[shuffled[i]] = static_cast<int>(i % k);
  }
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (int f = 0; f < k; ++f)
      (fold_of[i] == f ? folds[f].validation : folds[f].train).push_back(samples[i]);
  return folds;
}

std::vector<std::string> author_set(const std::vector<Sample>& samples) {
  std::vector<std::string> authors;
  for (auto& [a, idx] : by_author(samples)) authors.push_back(a);
  return authors;
}

}  // namespace attrib
