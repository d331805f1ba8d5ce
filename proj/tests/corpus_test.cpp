#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "test_util.hpp"
#include "tpf/corpus.hpp"
#include "tpf/errors.hpp"
#include "tpf/rng.hpp"

namespace fs = std::filesystem;
using tpf::Corpus;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "tpf_corpus_test";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("build produces consistent doc-major and term-major views") {
  std::vector<Corpus::Triplet> trips{{0, 0, 2}, {0, 2, 1}, {1, 1, 5}};
  auto c = Corpus::build(trips, {0, 0}, {"a", "b", "c"});
  CHECK(c.num_docs() == 2);
  CHECK(c.num_terms() == 3);
  CHECK(c.num_periods() == 1);
  CHECK(c.nnz() == 3);
  CHECK(c.total_count() == 8);
  CHECK(c.dropped_empty_docs() == 0);
  CHECK_FALSE(c.has_authors());

  CHECK(c.row_begin(0) == 0);
  CHECK(c.row_end(0) == 2);
  CHECK(c.entry_term(0) == 0);
  CHECK(c.entry_count(0) == 2);
  CHECK(c.entry_term(1) == 2);
  CHECK(c.row_end(1) == 3);

  // term-major mirror holds the same cells
  std::uint64_t total = 0;
  for (int v = 0; v < 3; ++v) {
    for (int i = c.col_begin(v); i < c.col_end(v); ++i) {
      total += c.centry_count(i);
    }
  }
  CHECK(total == 8);
  CHECK(c.col_end(1) - c.col_begin(1) == 1);
  CHECK(c.centry_doc(c.col_begin(1)) == 1);

  CHECK(c.docs_in_period(0) == std::vector<int>{0, 1});
  auto round = c.triplets();
  REQUIRE(round.size() == trips.size());
  for (std::size_t i = 0; i < trips.size(); ++i) {
    CHECK(round[i].doc == trips[i].doc);
    CHECK(round[i].term == trips[i].term);
    CHECK(round[i].count == trips[i].count);
  }
}

TEST_CASE("documents with no counts are dropped and ids renumbered") {
  std::vector<Corpus::Triplet> trips{{0, 0, 1}, {2, 1, 4}};
  auto c = Corpus::build(trips, {0, 1, 1}, {"a", "b"});
  CHECK(c.num_docs() == 2);
  CHECK(c.dropped_empty_docs() == 1);
  CHECK(c.period_of(0) == 0);
  CHECK(c.period_of(1) == 1);  // originally doc 2
  CHECK(c.docs_in_period(1) == std::vector<int>{1});
}

TEST_CASE("build validates its inputs") {
  using V = std::vector<Corpus::Triplet>;
  CHECK_THROWS_AS(Corpus::build(V{{0, 0, 1}}, {0}, {}), tpf::usage_error);
  CHECK_THROWS_AS(Corpus::build(V{{1, 0, 1}}, {0}, {"a"}), tpf::usage_error);
  CHECK_THROWS_AS(Corpus::build(V{{0, 3, 1}}, {0}, {"a"}), tpf::usage_error);
  CHECK_THROWS_AS(Corpus::build(V{{0, 0, 0}}, {0}, {"a"}), tpf::usage_error);
  CHECK_THROWS_AS(Corpus::build(V{{0, 0, 1}, {0, 0, 2}}, {0}, {"a"}),
                  tpf::usage_error);
  CHECK_THROWS_AS(Corpus::build(V{{0, 0, 1}}, {-1}, {"a"}), tpf::usage_error);
  // author list must cover every doc
  CHECK_THROWS_AS(Corpus::build(V{{0, 0, 1}, {1, 0, 1}}, {0, 0}, {"a"}, {5}),
                  tpf::usage_error);
  // every period up to the largest one must keep at least one document
  CHECK_THROWS_AS(Corpus::build(V{{0, 0, 1}, {1, 0, 1}}, {0, 2}, {"a"}),
                  tpf::usage_error);
  auto ok = Corpus::build(V{{0, 0, 1}, {1, 0, 1}, {2, 0, 1}}, {0, 1, 2}, {"a"});
  CHECK(ok.num_periods() == 3);
}

TEST_CASE("authors are kept and counted") {
  std::vector<Corpus::Triplet> trips{{0, 0, 1}, {1, 0, 2}, {2, 1, 1}};
  auto c = Corpus::build(trips, {0, 0, 1}, {"a", "b"}, {3, 0, 3});
  CHECK(c.has_authors());
  CHECK(c.num_authors() == 4);  // ids up to 3
  CHECK(c.author_of(0) == 3);
  CHECK(c.author_of(1) == 0);
  CHECK(c.author_of(2) == 3);
}

TEST_CASE("save and load round-trip, bytes and content") {
  std::mt19937_64 rng(5);
  auto c = tutil::random_corpus(12, 7, 3, rng, /*with_authors=*/true);
  auto dir = temp_dir();
  auto t1 = dir / "t1.csv", d1 = dir / "d1.csv", v1 = dir / "v1.txt";
  tpf::save_corpus(c, t1.string(), d1.string(), v1.string());
  auto c2 = tpf::load_corpus(t1.string(), d1.string(), v1.string());

  CHECK(c2.num_docs() == c.num_docs());
  CHECK(c2.num_terms() == c.num_terms());
  CHECK(c2.num_periods() == c.num_periods());
  CHECK(c2.has_authors());
  for (int d = 0; d < c.num_docs(); ++d) {
    CHECK(c2.period_of(d) == c.period_of(d));
    CHECK(c2.author_of(d) == c.author_of(d));
  }
  CHECK(c2.vocabulary() == c.vocabulary());
  auto ta = c.triplets(), tb = c2.triplets();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    CHECK(ta[i].doc == tb[i].doc);
    CHECK(ta[i].term == tb[i].term);
    CHECK(ta[i].count == tb[i].count);
  }

  auto t2 = dir / "t2.csv", d2 = dir / "d2.csv", v2 = dir / "v2.txt";
  tpf::save_corpus(c2, t2.string(), d2.string(), v2.string());
  CHECK(slurp(t1) == slurp(t2));
  CHECK(slurp(d1) == slurp(d2));
  CHECK(slurp(v1) == slurp(v2));
}

TEST_CASE("loader reports malformed content with the line number") {
  auto dir = temp_dir();
  auto write = [&](const fs::path& p, const std::string& content) {
    std::ofstream f(p);
    f << content;
  };
  auto tp = dir / "bad_t.csv", dp = dir / "bad_d.csv", vp = dir / "bad_v.txt";
  write(vp, "alpha\nbeta\n");
  write(dp, "doc_id,time_period\n0,0\n1,0\n");

  write(tp, "doc,term,count\n0,0,1\n");
  CHECK_THROWS_AS(tpf::load_corpus(tp.string(), dp.string(), vp.string()),
                  tpf::io_error);

  write(tp, "doc_id,term_id,count\n0,0,1\n1,zzz,1\n");
  try {
    tpf::load_corpus(tp.string(), dp.string(), vp.string());
    FAIL("expected io_error");
  } catch (const tpf::io_error& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }

  write(tp, "doc_id,term_id,count\n0,0,1\n1,0\n");
  CHECK_THROWS_AS(tpf::load_corpus(tp.string(), dp.string(), vp.string()),
                  tpf::io_error);

  write(tp, "doc_id,term_id,count\n0,9,1\n");
  CHECK_THROWS_AS(tpf::load_corpus(tp.string(), dp.string(), vp.string()),
                  tpf::io_error);

  write(tp, "doc_id,term_id,count\n0,0,0\n");
  CHECK_THROWS_AS(tpf::load_corpus(tp.string(), dp.string(), vp.string()),
                  tpf::io_error);

  write(tp, "doc_id,term_id,count\n0,0,1\n");
  write(dp, "doc_id,when\n0,0\n");
  CHECK_THROWS_AS(tpf::load_corpus(tp.string(), dp.string(), vp.string()),
                  tpf::io_error);

  write(dp, "doc_id,time_period\n0,0\n2,0\n");
  CHECK_THROWS_AS(tpf::load_corpus(tp.string(), dp.string(), vp.string()),
                  tpf::io_error);

  write(dp, "doc_id,time_period\n0,0\n0,1\n");
  CHECK_THROWS_AS(tpf::load_corpus(tp.string(), dp.string(), vp.string()),
                  tpf::io_error);

  CHECK_THROWS_AS(tpf::load_corpus((dir / "nope.csv").string(), dp.string(),
                                   vp.string()),
                  tpf::io_error);
}

TEST_CASE("batches partition the documents with the right scale") {
  std::mt19937_64 rng(7);
  auto c = tutil::random_corpus(10, 4, 2, rng);
  auto batch_rng = tpf::substream(3, "batching");
  auto batches = tpf::split_batches(c, 3, batch_rng);
  REQUIRE(batches.size() == 4);
  std::multiset<int> seen;
  for (const auto& b : batches) {
    CHECK((b.doc_ids.size() == 3 || b.doc_ids.size() == 1));
    CHECK(b.scale == 10.0 / static_cast<double>(b.doc_ids.size()));
    for (int d : b.doc_ids) seen.insert(d);
  }
  CHECK(seen.size() == 10);
  CHECK(std::set<int>(seen.begin(), seen.end()).size() == 10);

  // deterministic for a fixed stream, different across seeds
  auto r1 = tpf::substream(3, "batching");
  auto r2 = tpf::substream(3, "batching");
  auto b1 = tpf::split_batches(c, 3, r1);
  auto b2 = tpf::split_batches(c, 3, r2);
  REQUIRE(b1.size() == b2.size());
  for (std::size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i].doc_ids == b2[i].doc_ids);
  }
  auto r3 = tpf::substream(4, "batching");
  auto b3 = tpf::split_batches(c, 3, r3);
  bool same = true;
  for (std::size_t i = 0; i < b1.size() && same; ++i) {
    same = b1[i].doc_ids == b3[i].doc_ids;
  }
  CHECK_FALSE(same);

  // batch size larger than D: one batch, scale 1
  auto r4 = tpf::substream(3, "batching");
  auto whole = tpf::split_batches(c, 100, r4);
  REQUIRE(whole.size() == 1);
  CHECK(whole[0].scale == 1.0);
  CHECK_THROWS_AS(tpf::split_batches(c, 0, r4), tpf::usage_error);
}
