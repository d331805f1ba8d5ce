#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tpf/corpus.hpp"

namespace tpf {

struct SynthConfig {
  int A = 100;       // documents per period (one author each)
  int V = 200;       // vocabulary size
  int K = 6;         // topics, at most 5 vowel-aligned + 1 redundant
  int T = 10;        // periods
  double delta = 0.0;
  double tau = 10.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticTruth {
  int A = 0, V = 0, K = 0, T = 0;
  double delta = 0.0;
  double tau = 0.0;
  std::vector<std::string> words;  // V strings of length 2T
  std::vector<double> mu;          // K*V, [k*V + v]
  std::vector<double> h;           // K*V*T, [(k*V + v)*T + t]
  std::vector<double> theta;       // D*K, [d*K + k], D = A*T
};

// h_1 - mu ~ N(0, 1/tau); h_t - mu | h_{t-1} ~ N(delta*(h_{t-1} - mu), 1/tau).
std::vector<double> sample_ar(int T, double mu, double delta, double tau,
                              std::mt19937_64& rng);

// Maps a real to one of 21 consonants via a uniform grid of width 0.3
// starting at -3.15 (clamped at the ends); 0 falls in the middle cell 'n'.
char interval_consonant(double x);

std::pair<Corpus, SyntheticTruth> simulate(const SynthConfig& cfg);

// Writes triplets.csv, docs.csv, vocab.txt and truth.json into dir.
void write_synthetic(const Corpus& corpus, const SyntheticTruth& truth,
                     const std::string& dir);

}  // namespace tpf
