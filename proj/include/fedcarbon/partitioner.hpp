#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedcarbon/error.hpp"
#include "fedcarbon/io.hpp"
#include "fedcarbon/rng.hpp"

namespace fedcarbon {

// Class-label distribution p over m >= 2 classes.
struct ClassPrior {
  std::vector<double> proportions;

  std::size_t classes() const { return proportions.size(); }
  bool operator==(const ClassPrior&) const = default;
};

// Per-client class proportions q_k ~ Dir(alpha * p).
struct Partition {
  double alpha = 1.0;
  ClassPrior prior;
  std::vector<std::vector<double>> per_client;
  std::size_t samples_per_client = 0;

  std::size_t clients() const { return per_client.size(); }
  bool operator==(const Partition&) const = default;
};

// Concrete sample indices per client. `warnings` counts draws where the
// client's preferred class was exhausted and q_k was renormalised over the
// classes that still had samples.
struct Assignment {
  std::vector<std::vector<std::size_t>> per_client;
  std::size_t warnings = 0;

  bool operator==(const Assignment&) const = default;
};

inline ClassPrior uniform_prior(std::size_t classes) {
  if (classes < 2) throw domain_error("uniform_prior needs at least 2 classes");
  return ClassPrior{std::vector<double>(classes, 1.0 / static_cast<double>(classes))};
}

// p_i = N_i / N.
inline ClassPrior empirical_prior(std::span<const std::uint64_t> class_counts) {
  const auto positive = std::count_if(class_counts.begin(), class_counts.end(),
                                      [](std::uint64_t c) { return c > 0; });
  if (positive < 2) throw domain_error("empirical_prior needs at least two classes with samples");
  const double total =
      static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::uint64_t{0}));
  ClassPrior p;
  p.proportions.reserve(class_counts.size());
  for (auto c : class_counts) p.proportions.push_back(static_cast<double>(c) / total);
  return p;
}

// One draw from Dirichlet(alpha_vec) as normalised Gamma variates, combined in
// log space (log-sum-exp) so shapes far below 1 stay on the simplex.
inline std::vector<double> sample_dirichlet(std::span<const double> alpha_vec, Rng& rng) {
  if (alpha_vec.empty()) throw domain_error("sample_dirichlet needs a non-empty alpha vector");
  for (double a : alpha_vec)
    if (!(std::isfinite(a) && a > 0.0))
      throw domain_error("Dirichlet concentration components must be > 0 (got " + format_double(a) + ")");

  std::vector<double> logs(alpha_vec.size());
  for (std::size_t i = 0; i < alpha_vec.size(); ++i) logs[i] = rng.log_gamma_variate(alpha_vec[i]);
  const double peak = *std::max_element(logs.begin(), logs.end());
  double sum = 0.0;
  for (double& l : logs) {
    l = std::exp(l - peak);
    sum += l;
  }
  for (double& l : logs) l /= sum;
  return logs;
}

inline constexpr std::uint64_t kPartitionStream = 0x7061727469746e31ULL;
inline constexpr std::uint64_t kAssignStream = 0x61737369676e3031ULL;

// Each client draws q_k ~ Dir(alpha * p) from its own sub-seed, so clients
// can be generated in any order with identical results.
inline Partition lda_partition(const ClassPrior& prior, double alpha, std::size_t num_clients,
                               std::size_t samples_per_client, std::uint64_t seed) {
  if (!(std::isfinite(alpha) && alpha > 0.0)) throw domain_error("alpha > 0 (got " + format_double(alpha) + ")");
  if (num_clients < 1) throw domain_error("num_clients >= 1");
  if (samples_per_client < 1) throw domain_error("samples_per_client >= 1");
  if (prior.classes() < 2) throw domain_error("prior needs at least 2 classes");

  // Classes with zero prior mass get no samples; keep them out of the draw.
  std::vector<std::size_t> support;
  std::vector<double> concentration;
  for (std::size_t i = 0; i < prior.classes(); ++i) {
    if (prior.proportions[i] > 0.0) {
      support.push_back(i);
      concentration.push_back(alpha * prior.proportions[i]);
    }
  }
  if (support.empty()) throw domain_error("prior has no positive component");

  Partition part;
  part.alpha = alpha;
  part.prior = prior;
  part.samples_per_client = samples_per_client;
  part.per_client.reserve(num_clients);
  for (std::size_t k = 0; k < num_clients; ++k) {
    Rng rng(derive_seed(seed, {kPartitionStream, k}));
    const auto draw = sample_dirichlet(concentration, rng);
    std::vector<double> q(prior.classes(), 0.0);
    for (std::size_t s = 0; s < support.size(); ++s) q[support[s]] = draw[s];
    part.per_client.push_back(std::move(q));
  }
  return part;
}

// Draws samples_per_client labels per client from Categorical(q_k) without
// replacement from the shared pool. Clients are served in id order.
inline Assignment assign_samples(std::span<const std::size_t> labels, const Partition& partition,
                                 std::uint64_t seed) {
  const std::size_t m = partition.prior.classes();
  const std::size_t need = partition.clients() * partition.samples_per_client;
  if (labels.size() < need)
    throw exhaustion_error("label pool has " + std::to_string(labels.size()) + " samples but " +
                           std::to_string(need) + " are required");

  std::vector<std::vector<std::size_t>> pools(m);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= m)
      throw validation_error("label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(m) + ")");
    pools[labels[i]].push_back(i);
  }
  Rng rng(derive_seed(seed, {kAssignStream}));
  for (auto& pool : pools) rng.shuffle(std::span<std::size_t>(pool));

  Assignment out;
  out.per_client.resize(partition.clients());
  std::vector<double> weights(m);
  for (std::size_t k = 0; k < partition.clients(); ++k) {
    const auto& q = partition.per_client[k];
    auto& mine = out.per_client[k];
    mine.reserve(partition.samples_per_client);
    for (std::size_t draw = 0; draw < partition.samples_per_client; ++draw) {
      double mass = 0.0;
      bool exhausted = false;
      for (std::size_t c = 0; c < m; ++c) {
        const bool available = !pools[c].empty();
        exhausted = exhausted || (!available && q[c] > 0.0);
        weights[c] = available ? q[c] : 0.0;
        mass += weights[c];
      }
      if (exhausted) ++out.warnings;
      if (!(mass > 0.0)) {
        // Every class q_k favours is empty: fall back to what is left.
        mass = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
          weights[c] = static_cast<double>(pools[c].size());
          mass += weights[c];
        }
        if (!(mass > 0.0)) throw exhaustion_error("label pool exhausted");
      }
      double u = rng.uniform() * mass;
      std::size_t pick = m;
      for (std::size_t c = 0; c < m; ++c) {
        if (weights[c] <= 0.0) continue;
        pick = c;
        if (u < weights[c]) break;
        u -= weights[c];
      }
      mine.push_back(pools[pick].back());
      pools[pick].pop_back();
    }
  }
  return out;
}

}  // namespace fedcarbon
