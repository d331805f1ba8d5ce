#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tpf {

// Sparse document-term counts plus the document -> time period map (and an
// optional document -> author map). Stored doc-major (CSR) with a term-major
// mirror (CSC) for loops that accumulate per term.
class Corpus {
 public:
  struct Triplet {
    int doc = 0;
    int term = 0;
    std::uint32_t count = 0;
  };

  // Builds from raw pieces, validating and dropping documents without any
  // positive count. `periods` and `authors` are indexed by original doc id;
  // surviving documents are renumbered compactly in their original order.
  static Corpus build(std::vector<Triplet> triplets, std::vector<int> periods,
                      std::vector<std::string> vocabulary,
                      std::vector<int> authors = {});

  int num_docs() const { return static_cast<int>(row_ptr_.size()) - 1; }
  int num_terms() const { return static_cast<int>(vocabulary_.size()); }
  int num_periods() const { return num_periods_; }
  int num_authors() const { return num_authors_; }
  bool has_authors() const { return !author_of_doc_.empty(); }
  int dropped_empty_docs() const { return dropped_empty_docs_; }
  std::uint64_t total_count() const { return total_count_; }
  int nnz() const { return static_cast<int>(counts_.size()); }

  int period_of(int d) const { return period_of_doc_[d]; }
  int author_of(int d) const { return author_of_doc_[d]; }
  const std::vector<int>& docs_in_period(int t) const {
    return docs_by_period_[t];
  }
  const std::string& term(int v) const { return vocabulary_[v]; }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }

  // Doc-major access: entries of document d.
  int row_begin(int d) const { return row_ptr_[d]; }
  int row_end(int d) const { return row_ptr_[d + 1]; }
  int entry_term(int i) const { return col_idx_[i]; }
  std::uint32_t entry_count(int i) const { return counts_[i]; }

  // Term-major access: entries of term v.
  int col_begin(int v) const { return col_ptr_[v]; }
  int col_end(int v) const { return col_ptr_[v + 1]; }
  int centry_doc(int i) const { return row_idx_[i]; }
  std::uint32_t centry_count(int i) const { return ccounts_[i]; }

  std::vector<Triplet> triplets() const;

 private:
  std::vector<int> row_ptr_, col_idx_;
  std::vector<std::uint32_t> counts_;
  std::vector<int> col_ptr_, row_idx_;
  std::vector<std::uint32_t> ccounts_;
  std::vector<int> period_of_doc_;
  std::vector<int> author_of_doc_;
  std::vector<std::vector<int>> docs_by_period_;
  std::vector<std::string> vocabulary_;
  int num_periods_ = 0;
  int num_authors_ = 0;
  int dropped_empty_docs_ = 0;
  std::uint64_t total_count_ = 0;
};

// Reads the three input files: a triplet CSV with header
// doc_id,term_id,count; a docs CSV with header doc_id,time_period or
// doc_id,time_period,author_id; and a vocabulary file with one term per
// line. Malformed content raises io_error with the offending line number.
Corpus load_corpus(const std::string& triplet_path,
                   const std::string& docs_path,
                   const std::string& vocab_path);

// Writes the same three files (terms from the stored vocabulary).
void save_corpus(const Corpus& corpus, const std::string& triplet_path,
                 const std::string& docs_path, const std::string& vocab_path);

struct Batch {
  std::vector<int> doc_ids;
  double scale = 1.0;  // D / |batch|
};

// One shuffled partition of all documents into ceil(D / batch_size) chunks.
std::vector<Batch> split_batches(const Corpus& corpus, int batch_size,
                                 std::mt19937_64& rng);

}  // namespace tpf
