#include "tpf/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "tpf/errors.hpp"

namespace tpf {

namespace {

[[noreturn]] void fail_line(const std::string& path, std::size_t line,
                            const std::string& what) {
  throw io_error(path + ":" + std::to_string(line) + ": " + what);
}

long long parse_int_field(const std::string& path, std::size_t line,
                          const std::string& field, const char* name) {
  long long value = 0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [ptr, ec] = std::from_chars(b, e, value);
  if (ec != std::errc() || ptr != e) {
    fail_line(path, line, std::string("bad ") + name + " '" + field + "'");
  }
  return value;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

Corpus Corpus::build(std::vector<Triplet> triplets, std::vector<int> periods,
                     std::vector<std::string> vocabulary,
                     std::vector<int> authors) {
  const int d0 = static_cast<int>(periods.size());
  const int v0 = static_cast<int>(vocabulary.size());
  if (d0 == 0) throw usage_error("corpus has no documents");
  if (v0 == 0) throw usage_error("corpus has an empty vocabulary");
  if (!authors.empty() && static_cast<int>(authors.size()) != d0) {
    throw usage_error("author list does not match the document list");
  }

  for (const auto& tr : triplets) {
    if (tr.doc < 0 || tr.doc >= d0) {
      throw usage_error("triplet references unknown doc id " +
                        std::to_string(tr.doc));
    }
    if (tr.term < 0 || tr.term >= v0) {
      throw usage_error("triplet references term id " +
                        std::to_string(tr.term) + " outside the vocabulary");
    }
    if (tr.count == 0) {
      throw usage_error("zero count stored for doc " + std::to_string(tr.doc) +
                        ", term " + std::to_string(tr.term));
    }
  }

  std::sort(triplets.begin(), triplets.end(),
            [](const Triplet& a, const Triplet& b) {
              return a.doc != b.doc ? a.doc < b.doc : a.term < b.term;
            });
  for (std::size_t i = 1; i < triplets.size(); ++i) {
    if (triplets[i].doc == triplets[i - 1].doc &&
        triplets[i].term == triplets[i - 1].term) {
      throw usage_error("duplicate entry for doc " +
                        std::to_string(triplets[i].doc) + ", term " +
                        std::to_string(triplets[i].term));
    }
  }

  std::vector<int> new_id(d0, -1);
  {
    std::vector<char> nonempty(d0, 0);
    for (const auto& tr : triplets) nonempty[tr.doc] = 1;
    int next = 0;
    for (int d = 0; d < d0; ++d) {
      if (nonempty[d]) new_id[d] = next++;
    }
  }

  Corpus c;
  c.dropped_empty_docs_ = 0;
  for (int d = 0; d < d0; ++d) {
    if (new_id[d] < 0) {
      ++c.dropped_empty_docs_;
      continue;
    }
    c.period_of_doc_.push_back(periods[d]);
    if (!authors.empty()) c.author_of_doc_.push_back(authors[d]);
  }
  const int d1 = static_cast<int>(c.period_of_doc_.size());

  for (int t : c.period_of_doc_) {
    if (t < 0) throw usage_error("negative time period " + std::to_string(t));
    c.num_periods_ = std::max(c.num_periods_, t + 1);
  }
  c.docs_by_period_.resize(c.num_periods_);
  for (int d = 0; d < d1; ++d) c.docs_by_period_[c.period_of_doc_[d]].push_back(d);
  for (int t = 0; t < c.num_periods_; ++t) {
    if (c.docs_by_period_[t].empty()) {
      throw usage_error("time period " + std::to_string(t) +
                        " has no documents");
    }
  }
  for (int a : c.author_of_doc_) {
    if (a < 0) throw usage_error("negative author id " + std::to_string(a));
    c.num_authors_ = std::max(c.num_authors_, a + 1);
  }

  c.vocabulary_ = std::move(vocabulary);
  c.row_ptr_.assign(d1 + 1, 0);
  for (const auto& tr : triplets) ++c.row_ptr_[new_id[tr.doc] + 1];
  std::partial_sum(c.row_ptr_.begin(), c.row_ptr_.end(), c.row_ptr_.begin());
  c.col_idx_.resize(triplets.size());
  c.counts_.resize(triplets.size());
  {
    std::vector<int> cursor(c.row_ptr_.begin(), c.row_ptr_.end() - 1);
    for (const auto& tr : triplets) {
      const int pos = cursor[new_id[tr.doc]]++;
      c.col_idx_[pos] = tr.term;
      c.counts_[pos] = tr.count;
      c.total_count_ += tr.count;
    }
  }

  c.col_ptr_.assign(v0 + 1, 0);
  for (int v : c.col_idx_) ++c.col_ptr_[v + 1];
  std::partial_sum(c.col_ptr_.begin(), c.col_ptr_.end(), c.col_ptr_.begin());
  c.row_idx_.resize(triplets.size());
  c.ccounts_.resize(triplets.size());
  {
    std::vector<int> cursor(c.col_ptr_.begin(), c.col_ptr_.end() - 1);
    for (int d = 0; d < d1; ++d) {
      for (int i = c.row_ptr_[d]; i < c.row_ptr_[d + 1]; ++i) {
        const int pos = cursor[c.col_idx_[i]]++;
        c.row_idx_[pos] = d;
        c.ccounts_[pos] = c.counts_[i];
      }
    }
  }
  return c;
}

std::vector<Corpus::Triplet> Corpus::triplets() const {
  std::vector<Triplet> out;
  out.reserve(counts_.size());
  for (int d = 0; d < num_docs(); ++d) {
    for (int i = row_begin(d); i < row_end(d); ++i) {
      out.push_back({d, col_idx_[i], counts_[i]});
    }
  }
  return out;
}

Corpus load_corpus(const std::string& triplet_path,
                   const std::string& docs_path,
                   const std::string& vocab_path) {
  std::ifstream vf(vocab_path);
  if (!vf) throw io_error("cannot open vocabulary file " + vocab_path);
  std::vector<std::string> vocab;
  for (std::string line; std::getline(vf, line);) {
    vocab.push_back(strip_cr(line));
  }
  if (vocab.empty()) throw io_error("vocabulary file " + vocab_path + " is empty");

  std::ifstream df(docs_path);
  if (!df) throw io_error("cannot open docs file " + docs_path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(df, line)) fail_line(docs_path, 1, "missing header");
  line = strip_cr(line);
  bool with_authors = false;
  if (line == "doc_id,time_period,author_id") {
    with_authors = true;
  } else if (line != "doc_id,time_period") {
    fail_line(docs_path, 1, "unexpected header '" + line + "'");
  }
  struct DocRow {
    int period;
    int author;
  };
  std::vector<DocRow> rows;
  std::set<long long> seen;
  while (std::getline(df, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != (with_authors ? 3u : 2u)) {
      fail_line(docs_path, lineno, "expected " +
                                       std::to_string(with_authors ? 3 : 2) +
                                       " fields, got " +
                                       std::to_string(fields.size()));
    }
    const long long doc = parse_int_field(docs_path, lineno, fields[0], "doc_id");
    const long long period =
        parse_int_field(docs_path, lineno, fields[1], "time_period");
    long long author = -1;
    if (with_authors) {
      author = parse_int_field(docs_path, lineno, fields[2], "author_id");
      if (author < 0) fail_line(docs_path, lineno, "negative author_id");
    }
    if (doc < 0) fail_line(docs_path, lineno, "negative doc_id");
    if (period < 0) fail_line(docs_path, lineno, "negative time_period");
    if (!seen.insert(doc).second) {
      fail_line(docs_path, lineno, "doc_id " + std::to_string(doc) +
                                       " listed twice");
    }
    if (doc >= static_cast<long long>(rows.size())) {
      rows.resize(doc + 1, {-1, -1});
    }
    rows[doc] = {static_cast<int>(period), static_cast<int>(author)};
  }
  if (rows.empty()) throw io_error("docs file " + docs_path + " lists no documents");
  for (std::size_t d = 0; d < rows.size(); ++d) {
    if (rows[d].period < 0) {
      throw io_error(docs_path + ": doc ids are not contiguous (missing " +
                     std::to_string(d) + ")");
    }
  }

  std::ifstream tf(triplet_path);
  if (!tf) throw io_error("cannot open triplet file " + triplet_path);
  lineno = 1;
  if (!std::getline(tf, line)) fail_line(triplet_path, 1, "missing header");
  if (strip_cr(line) != "doc_id,term_id,count") {
    fail_line(triplet_path, 1, "unexpected header '" + strip_cr(line) + "'");
  }
  std::vector<Corpus::Triplet> triplets;
  while (std::getline(tf, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 3) {
      fail_line(triplet_path, lineno,
                "expected 3 fields, got " + std::to_string(fields.size()));
    }
    const long long doc = parse_int_field(triplet_path, lineno, fields[0], "doc_id");
    const long long term = parse_int_field(triplet_path, lineno, fields[1], "term_id");
    const long long count = parse_int_field(triplet_path, lineno, fields[2], "count");
    if (doc < 0 || doc >= static_cast<long long>(rows.size())) {
      fail_line(triplet_path, lineno,
                "doc_id " + std::to_string(doc) + " not in the docs file");
    }
    if (term < 0 || term >= static_cast<long long>(vocab.size())) {
      fail_line(triplet_path, lineno,
                "term_id " + std::to_string(term) + " outside the vocabulary");
    }
    if (count <= 0) fail_line(triplet_path, lineno, "count must be positive");
    if (count > 0xffffffffLL) fail_line(triplet_path, lineno, "count too large");
    triplets.push_back({static_cast<int>(doc), static_cast<int>(term),
                        static_cast<std::uint32_t>(count)});
  }

  std::vector<int> periods(rows.size());
  std::vector<int> authors;
  for (std::size_t d = 0; d < rows.size(); ++d) periods[d] = rows[d].period;
  if (!rows.empty() && rows[0].author >= 0) {
    authors.resize(rows.size());
    for (std::size_t d = 0; d < rows.size(); ++d) authors[d] = rows[d].author;
  }
  try {
    return Corpus::build(std::move(triplets), std::move(periods),
                         std::move(vocab), std::move(authors));
  } catch (const usage_error& e) {
    throw io_error(triplet_path + ": " + e.what());
  }
}

void save_corpus(const Corpus& corpus, const std::string& triplet_path,
                 const std::string& docs_path, const std::string& vocab_path) {
  std::ofstream tf(triplet_path);
  if (!tf) throw io_error("cannot write " + triplet_path);
  tf << "doc_id,term_id,count\n";
  for (int d = 0; d < corpus.num_docs(); ++d) {
    for (int i = corpus.row_begin(d); i < corpus.row_end(d); ++i) {
      tf << d << ',' << corpus.entry_term(i) << ',' << corpus.entry_count(i)
         << '\n';
    }
  }
  if (!tf.flush()) throw io_error("failed writing " + triplet_path);

  std::ofstream df(docs_path);
  if (!df) throw io_error("cannot write " + docs_path);
  df << (corpus.has_authors() ? "doc_id,time_period,author_id"
                              : "doc_id,time_period")
     << '\n';
  for (int d = 0; d < corpus.num_docs(); ++d) {
    df << d << ',' << corpus.period_of(d);
    if (corpus.has_authors()) df << ',' << corpus.author_of(d);
    df << '\n';
  }
  if (!df.flush()) throw io_error("failed writing " + docs_path);

  std::ofstream vf(vocab_path);
  if (!vf) throw io_error("cannot write " + vocab_path);
  for (const auto& term : corpus.vocabulary()) vf << term << '\n';
  if (!vf.flush()) throw io_error("failed writing " + vocab_path);
}

std::vector<Batch> split_batches(const Corpus& corpus, int batch_size,
                                 std::mt19937_64& rng) {
  const int d = corpus.num_docs();
  if (batch_size < 1) throw usage_error("batch size must be at least 1");
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Batch> out;
  for (int begin = 0; begin < d; begin += batch_size) {
    const int end = std::min(begin + batch_size, d);
    Batch b;
    b.doc_ids.assign(order.begin() + begin, order.begin() + end);
    b.scale = static_cast<double>(d) / static_cast<double>(end - begin);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace tpf
