#include "tpf/synthgen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "tpf/errors.hpp"
#include "tpf/rng.hpp"

namespace tpf {

namespace {

constexpr char kVowels[] = "aeiou";
// 21 consonants; index 10 ('n') is the middle interval of the grid.
constexpr char kConsonants[] = "bcdfghjklmnpqrstvwxyz";
constexpr double kGridLo = -3.15;
constexpr double kGridWidth = 0.3;

}  // namespace

char interval_consonant(double x) {
  int idx = static_cast<int>(std::floor((x - kGridLo) / kGridWidth));
  if (idx < 0) idx = 0;
  if (idx > 20) idx = 20;
  return kConsonants[idx];
}

void SynthConfig::validate() const {
  if (A < 1) throw usage_error("A must be positive");
  if (V < 1) throw usage_error("V must be positive");
  if (K < 1 || K > 6) throw usage_error("K must lie in 1..6");
  if (T < 1) throw usage_error("T must be positive");
  if (!(tau > 0.0)) throw usage_error("tau must be positive");
  if (!std::isfinite(delta)) throw usage_error("delta must be finite");
}

std::vector<double> sample_ar(int T, double mu, double delta, double tau,
                              std::mt19937_64& rng) {
  if (T < 1) throw usage_error("T must be positive");
  if (!(tau > 0.0)) throw usage_error("tau must be positive");
  std::normal_distribution<double> innov(0.0, 1.0 / std::sqrt(tau));
  std::vector<double> h(T);
  h[0] = mu + innov(rng);
  for (int t = 1; t < T; ++t) {
    h[t] = mu + delta * (h[t - 1] - mu) + innov(rng);
  }
  return h;
}

std::pair<Corpus, SyntheticTruth> simulate(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = substream(cfg.seed, "simulation");
  const int A = cfg.A, V = cfg.V, K = cfg.K, T = cfg.T;
  const int D = A * T;

  SyntheticTruth truth;
  truth.A = A;
  truth.V = V;
  truth.K = K;
  truth.T = T;
  truth.delta = cfg.delta;
  truth.tau = cfg.tau;
  truth.words.resize(V);
  truth.mu.assign(static_cast<std::size_t>(K) * V, 0.0);
  truth.h.assign(static_cast<std::size_t>(K) * V * T, 0.0);
  truth.theta.resize(static_cast<std::size_t>(D) * K);

  std::uniform_int_distribution<int> pick_vowel(0, 4);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> h_shared(static_cast<std::size_t>(V) * T);

  for (int v = 0; v < V; ++v) {
    // One favoured vowel per word; each position favours it with odds 5:1:1:1:1.
    const int favoured = pick_vowel(rng);
    std::vector<int> vowel_count(5, 0);
    std::vector<int> vowel_at(T);
    for (int t = 0; t < T; ++t) {
      int vw;
      const double u = unif(rng);
      if (u < 5.0 / 9.0) {
        vw = favoured;
      } else {
        const int other = static_cast<int>((u - 5.0 / 9.0) * 9.0);
        vw = other >= favoured ? other + 1 : other;
      }
      vowel_at[t] = vw;
      ++vowel_count[vw];
    }
    const auto seq = sample_ar(T, 0.0, cfg.delta, cfg.tau, rng);
    std::string word;
    word.reserve(2 * T);
    for (int t = 0; t < T; ++t) {
      h_shared[static_cast<std::size_t>(v) * T + t] = seq[t];
      word.push_back(interval_consonant(seq[t]));
      word.push_back(kVowels[vowel_at[t]]);
    }
    truth.words[v] = std::move(word);
    for (int k = 0; k < K; ++k) {
      // Vowel-aligned topics peak on words full of their vowel; the sixth
      // topic has no vowel and stays at the floor everywhere.
      const double mu = k < 5 ? -3.0 + 4.0 * vowel_count[k] / T : -3.0;
      truth.mu[static_cast<std::size_t>(k) * V + v] = mu;
      for (int t = 0; t < T; ++t) {
        truth.h[(static_cast<std::size_t>(k) * V + v) * T + t] = mu + seq[t];
      }
    }
  }

  std::uniform_int_distribution<int> pick_level(0, 4);
  for (int d = 0; d < D; ++d) {
    for (int k = 0; k < K; ++k) {
      truth.theta[static_cast<std::size_t>(d) * K + k] =
          0.8 + 0.1 * pick_level(rng);
    }
  }

  std::vector<Corpus::Triplet> triplets;
  std::vector<int> periods(D);
  std::vector<int> authors(D);
  for (int t = 0; t < T; ++t) {
    for (int a = 0; a < A; ++a) {
      const int d = t * A + a;
      periods[d] = t;
      authors[d] = a;
      for (int v = 0; v < V; ++v) {
        double lambda = 0.0;
        for (int k = 0; k < K; ++k) {
          lambda += truth.theta[static_cast<std::size_t>(d) * K + k] *
                    std::exp(truth.h[(static_cast<std::size_t>(k) * V + v) * T + t]);
        }
        std::poisson_distribution<std::uint32_t> pois(lambda);
        const std::uint32_t y = pois(rng);
        if (y > 0) triplets.push_back({d, v, y});
      }
    }
  }

  Corpus corpus = Corpus::build(std::move(triplets), std::move(periods),
                                truth.words, std::move(authors));
  return {std::move(corpus), std::move(truth)};
}

void write_synthetic(const Corpus& corpus, const SyntheticTruth& truth,
                     const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create directory " + dir);
  const auto at = [&dir](const char* name) {
    return (std::filesystem::path(dir) / name).string();
  };
  save_corpus(corpus, at("triplets.csv"), at("docs.csv"), at("vocab.txt"));

  nlohmann::json root;
  root["A"] = truth.A;
  root["V"] = truth.V;
  root["K"] = truth.K;
  root["T"] = truth.T;
  root["delta"] = truth.delta;
  root["tau"] = truth.tau;
  const int D = truth.A * truth.T;
  nlohmann::json theta_mean = nlohmann::json::array();
  for (int k = 0; k < truth.K; ++k) {
    double s = 0.0;
    for (int d = 0; d < D; ++d) s += truth.theta[static_cast<std::size_t>(d) * truth.K + k];
    theta_mean.push_back(s / D);
  }
  root["theta_mean"] = std::move(theta_mean);
  nlohmann::json mu = nlohmann::json::array();
  for (int k = 0; k < truth.K; ++k) {
    nlohmann::json row = nlohmann::json::array();
    for (int v = 0; v < truth.V; ++v) {
      row.push_back(truth.mu[static_cast<std::size_t>(k) * truth.V + v]);
    }
    mu.push_back(std::move(row));
  }
  root["mu"] = std::move(mu);

  std::ofstream out(at("truth.json"));
  if (!out) throw io_error("cannot write truth.json in " + dir);
  out << root.dump(2) << '\n';
  if (!out.flush()) throw io_error("failed writing truth.json in " + dir);
}

}  // namespace tpf
