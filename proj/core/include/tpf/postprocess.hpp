#pragma once

#include <string>
#include <vector>

#include "tpf/corpus.hpp"
#include "tpf/state.hpp"

namespace tpf {

// Share of the expected count mass each topic carries per period; columns
// (fixed t) sum to one. Layout [k * T + t].
std::vector<double> topic_prevalence(const VariationalState& state,
                                     const Corpus& corpus);

// Expected term intensity exp(h_loc + h_var / 2). Layout [(k V + v) T + t].
std::vector<double> term_intensity(const VariationalState& state);

// Harmonic compromise between within-topic frequency rank and
// across-topic exclusivity rank, both as empirical CDFs over terms;
// w weights exclusivity. Layout [(k V + v) T + t], values in (0, 1].
std::vector<double> frex_scores(const VariationalState& state, double w);

// Divergence between two topic-period term distributions: summed
// symmetrised KL between the marginal normals of every term.
double dtc_pair(const VariationalState& state, int k1, int t1, int k2, int t2);

// Same across whole paths: per term the symmetrised KL between the
// T-dimensional normals, averaged by 1/T, summed over terms.
double dtc_topics(const VariationalState& state, int k1, int k2);

struct TopTerm {
  int term = 0;
  double frex = 0.0;
};

// Terms of topic k in period t ranked by FREX (ties by term id).
std::vector<TopTerm> top_terms(const VariationalState& state, int k, int t,
                               int n, double w);

void write_prevalence_csv(const VariationalState& state, const Corpus& corpus,
                          const std::string& path);
void write_topics_json(const VariationalState& state, const Corpus& corpus,
                       const std::string& path, double w, int top_n);
void write_dtc_time_csv(const VariationalState& state, const std::string& path);
void write_dtc_topics_csv(const VariationalState& state,
                          const std::string& path);

}  // namespace tpf
