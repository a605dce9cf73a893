#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attrib {

struct Document {
  std::string text;       // normalized
  std::string author;     // directory name; empty for unlabeled corpora
  std::string source_id;  // file path
};

// Fixed-length word chunk with its author label. Chunks are always exactly
// chunk_words long; document remainders are dropped, never emitted short.
struct Sample {
  std::vector<std::string> tokens;
  std::string author;
};

std::string sample_text(const Sample& sample);

// Reads `<root>/<author>/<file>.txt`, one Document per file, sorted by path.
// Text is whitespace-normalized; whitespace-only files are skipped with a
// warning on stderr, as are empty author directories.
std::vector<Document> ingest(const std::string& directory);

// Reads a flat directory (or a single file) of unlabeled text for language
// model pretraining. Subdirectories are ingested as above, authors ignored.
std::string read_corpus_text(const std::string& path);

std::vector<Sample> chunk_documents(const std::vector<Document>& docs,
                                    std::size_t chunk_words = 750);

// Per-author seeded shuffle, hold out floor(n * test_frac) (at least 1).
// Every author needs >= 2 samples.
std::pair<std::vector<Sample>, std::vector<Sample>> stratified_split(
    const std::vector<Sample>& samples, double test_frac, std::uint64_t seed);

// Picks n_authors authors uniformly at random, then truncates every chosen
// author to the minimum per-author count among them (seeded subsample).
std::vector<Sample> balanced_subset(const std::vector<Sample>& samples, int n_authors,
                                    std::uint64_t seed);
// Same selection, as indices into `samples` (for split manifests).
std::vector<std::size_t> balanced_subset_indices(const std::vector<Sample>& samples,
                                                 int n_authors, std::uint64_t seed);

struct Fold {
  std::vector<Sample> train;
  std::vector<Sample> validation;
};

// Per-author stratified partition into k folds; fold i's validation set is
// the union of each author's i-th part. Every author needs >= k samples.
std::vector<Fold> kfold_split(const std::vector<Sample>& samples, int k, std::uint64_t seed);

// Distinct authors in sorted order (the label space).
std::vector<std::string> author_set(const std::vector<Sample>& samples);

}  // namespace attrib
