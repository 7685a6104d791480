#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fedcarbon/carbon_model.hpp"
#include "fedcarbon/config.hpp"
#include "fedcarbon/error.hpp"
#include "fedcarbon/profiles.hpp"
#include "fedcarbon/rng.hpp"

namespace fedcarbon {

// Flat weight vector of the softmax-regression model. Layout per class c:
// features weights w[c*(f+1) .. c*(f+1)+f-1] followed by the bias.
using ModelParams = std::vector<double>;

inline bool all_finite(std::span<const double> w) {
  return std::all_of(w.begin(), w.end(), [](double x) { return std::isfinite(x); });
}

// Gaussian-mixture classification task, row-major features.
struct SimDataset {
  std::size_t classes = 0;
  std::size_t features = 0;
  std::vector<double> x;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * features, features}; }
  bool operator==(const SimDataset&) const = default;
};

inline constexpr std::uint64_t kTaskStream = 0x7461736b00000001ULL;
inline constexpr std::uint64_t kShuffleStream = 0x7368756666000001ULL;
inline constexpr std::uint64_t kSelectStream = 0x73656c6563740001ULL;
inline constexpr std::uint64_t kTrainStream = 0x747261696e000001ULL;

// Class c is a unit-covariance Gaussian centred `separation * (c / f + 1)`
// along axis c % f. Labels cycle through the classes so the pool is
// balanced; the first 80% of a seeded permutation is the training split.
inline SimDataset make_task(std::size_t classes, std::size_t features, std::size_t samples,
                            std::uint64_t seed, double separation = 3.0) {
  if (classes < 2) throw domain_error("make_task needs at least 2 classes");
  if (features < 1) throw domain_error("make_task needs at least 1 feature");
  if (samples < 2) throw domain_error("make_task needs at least 2 samples");
  if (!(separation > 0.0)) throw domain_error("separation > 0");

  Rng rng(derive_seed(seed, {kTaskStream}));
  SimDataset d;
  d.classes = classes;
  d.features = features;
  d.x.resize(samples * features);
  d.labels.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t c = i % classes;
    d.labels[i] = c;
    for (std::size_t j = 0; j < features; ++j) d.x[i * features + j] = rng.normal();
    d.x[i * features + c % features] += separation * static_cast<double>(c / features + 1);
  }
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_train = std::max<std::size_t>(1, samples * 4 / 5);
  d.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return d;
}

inline std::size_t param_count(std::size_t classes, std::size_t features) {
  return classes * (features + 1);
}

inline ModelParams zero_params(const SimDataset& d) {
  return ModelParams(param_count(d.classes, d.features), 0.0);
}

// Class probabilities for one sample, written into `probs` (size m).
inline void softmax_probs(std::span<const double> w, std::span<const double> x, std::size_t classes,
                          std::span<double> probs) {
  const std::size_t f = x.size();
  double peak = -INFINITY;
  for (std::size_t c = 0; c < classes; ++c) {
    const double* wc = w.data() + c * (f + 1);
    double z = wc[f];
    for (std::size_t j = 0; j < f; ++j) z += wc[j] * x[j];
    probs[c] = z;
    peak = std::max(peak, z);
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    probs[c] = std::exp(probs[c] - peak);
    sum += probs[c];
  }
  for (std::size_t c = 0; c < classes; ++c) probs[c] /= sum;
}

// Mean cross-entropy over `batch`.
inline double softmax_loss(std::span<const double> w, const SimDataset& d,
                           std::span<const std::size_t> batch) {
  std::vector<double> probs(d.classes);
  double loss = 0.0;
  for (std::size_t i : batch) {
    softmax_probs(w, d.row(i), d.classes, probs);
    loss -= std::log(probs[d.labels[i]]);
  }
  return loss / static_cast<double>(batch.size());
}

// Gradient of softmax_loss, written into `grad`.
inline void softmax_gradient(std::span<const double> w, const SimDataset& d,
                             std::span<const std::size_t> batch, std::span<double> grad) {
  const std::size_t f = d.features;
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<double> probs(d.classes);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : batch) {
    const auto x = d.row(i);
    softmax_probs(w, x, d.classes, probs);
    for (std::size_t c = 0; c < d.classes; ++c) {
      const double err = (probs[c] - (c == d.labels[i] ? 1.0 : 0.0)) * scale;
      double* gc = grad.data() + c * (f + 1);
      for (std::size_t j = 0; j < f; ++j) gc[j] += err * x[j];
      gc[f] += err;
    }
  }
}

inline std::size_t predict(std::span<const double> w, const SimDataset& d, std::size_t i) {
  std::vector<double> probs(d.classes);
  softmax_probs(w, d.row(i), d.classes, probs);
  return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

inline double accuracy(std::span<const double> w, const SimDataset& d, std::span<const std::size_t> indices) {
  if (indices.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : indices) hits += predict(w, d, i) == d.labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

struct TrainOptions {
  std::size_t epochs = 1;
  double lr = kDefaultFedAvgClientLr;
  std::size_t batch_size = 32;
};

struct LocalResult {
  ModelParams weights;  // w_local
  ModelParams delta;    // w_local - w
  std::size_t num_samples = 0;
};

// Plain mini-batch SGD (no momentum) over `shard`. Epoch e is shuffled with
// the stream (seed, first_epoch + e), so a client that trains across several
// rounds sees the same batch sequence as one long run.
inline LocalResult train_local(const ModelParams& w, const SimDataset& d, std::span<const std::size_t> shard,
                               const TrainOptions& opts, std::uint64_t seed, std::size_t first_epoch = 0) {
  if (shard.empty()) throw domain_error("train_local needs a non-empty shard");
  if (opts.batch_size == 0) throw domain_error("batch_size >= 1");
  if (w.size() != param_count(d.classes, d.features))
    throw dimension_mismatch("model has " + std::to_string(w.size()) + " parameters, task needs " +
                             std::to_string(param_count(d.classes, d.features)));

  LocalResult out;
  out.weights = w;
  out.num_samples = shard.size();
  std::vector<std::size_t> order(shard.begin(), shard.end());
  std::vector<double> grad(w.size());
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    Rng rng(derive_seed(seed, {kShuffleStream, first_epoch + e}));
    std::copy(shard.begin(), shard.end(), order.begin());
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t len = std::min(opts.batch_size, order.size() - start);
      softmax_gradient(out.weights, d, std::span<const std::size_t>(order).subspan(start, len), grad);
      for (std::size_t k = 0; k < grad.size(); ++k) out.weights[k] -= opts.lr * grad[k];
    }
  }
  out.delta.resize(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) out.delta[k] = out.weights[k] - w[k];
  return out;
}

// Training stream used by client `client` under master seed `seed`.
inline std::uint64_t client_training_seed(std::uint64_t seed, std::uint64_t client) {
  return derive_seed(seed, {kTrainStream, client});
}

// Centralised reference: `epochs` of SGD over `indices`, driven by the same
// stream as client 0.
inline ModelParams centralized_sgd(const ModelParams& w, const SimDataset& d,
                                   std::span<const std::size_t> indices, const TrainOptions& opts,
                                   std::uint64_t seed) {
  return train_local(w, d, indices, opts, client_training_seed(seed, 0)).weights;
}

// n distinct ids from [0, N), sorted; deterministic per (seed, round).
inline std::vector<std::size_t> select_clients(std::size_t pool_size, std::size_t per_round,
                                               std::uint64_t round, std::uint64_t seed) {
  if (per_round < 1 || per_round > pool_size)
    throw domain_error("select_clients needs 1 <= n <= N (n=" + std::to_string(per_round) +
                       ", N=" + std::to_string(pool_size) + ")");
  std::vector<std::size_t> ids(pool_size);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {kSelectStream, round}));
  for (std::size_t i = 0; i < per_round; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_int(pool_size - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(per_round);
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct ClientUpdate {
  ModelParams delta;
  std::size_t num_samples = 0;
};

namespace detail {

// sum_k p_k v_k with p_k = n_k / sum n, evaluated as v_0 + sum_k p_k (v_k - v_0):
// bit-exact when all v_k coincide (including the single-client case).
template <typename Get>
ModelParams weighted_average(std::size_t count, std::span<const std::size_t> sizes, Get&& get) {
  if (count == 0) throw domain_error("aggregation needs at least one update");
  const std::size_t dim = get(0).size();
  double total = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    if (get(k).size() != dim)
      throw dimension_mismatch("update " + std::to_string(k) + " has dimension " +
                               std::to_string(get(k).size()) + ", expected " + std::to_string(dim));
    total += static_cast<double>(sizes[k]);
  }
  if (!(total > 0.0)) throw domain_error("aggregation needs a positive total sample count");
  ModelParams out = get(0);
  for (std::size_t k = 1; k < count; ++k) {
    const double p = static_cast<double>(sizes[k]) / total;
    const auto& v = get(k);
    for (std::size_t i = 0; i < dim; ++i) out[i] += p * (v[i] - get(0)[i]);
  }
  return out;
}

}  // namespace detail

// Pseudo-gradient: the n_k-weighted mean of client deltas.
inline ModelParams weighted_mean_delta(std::span<const ClientUpdate> updates) {
  std::vector<std::size_t> sizes;
  sizes.reserve(updates.size());
  for (const auto& u : updates) sizes.push_back(u.num_samples);
  return detail::weighted_average(updates.size(), sizes,
                                  [&](std::size_t k) -> const ModelParams& { return updates[k].delta; });
}

// w' = w + sum_k (n_k / sum n) delta_k.
inline ModelParams fedavg_aggregate(const ModelParams& w, std::span<const ClientUpdate> updates) {
  const ModelParams mean = weighted_mean_delta(updates);
  if (mean.size() != w.size()) throw dimension_mismatch("update dimension differs from model");
  ModelParams out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] + mean[i];
  return out;
}

// The FedAVG result computed from client weights directly, sum_k p_k w_k.
// Mathematically identical to fedavg_aggregate; a lone client's model is
// returned unchanged.
inline ModelParams average_local_weights(std::span<const LocalResult> results) {
  std::vector<std::size_t> sizes;
  sizes.reserve(results.size());
  for (const auto& r : results) sizes.push_back(r.num_samples);
  return detail::weighted_average(results.size(), sizes,
                                  [&](std::size_t k) -> const ModelParams& { return results[k].weights; });
}

struct FedAdamState {
  ModelParams m;
  ModelParams v;

  static FedAdamState zeros(std::size_t dim) { return {ModelParams(dim, 0.0), ModelParams(dim, 0.0)}; }
  bool operator==(const FedAdamState&) const = default;
};

struct FedAdamOptions {
  double server_lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 0.001;
};

// Server-side Adam step on the pseudo-gradient (no bias correction):
//   m <- b1 m + (1-b1) d,  v <- b2 v + (1-b2) d^2,  w <- w + lr m / (sqrt(v) + tau)
inline std::pair<ModelParams, FedAdamState> fedadam_aggregate(const FedAdamState& state, const ModelParams& w,
                                                              const ModelParams& pseudo_gradient,
                                                              const FedAdamOptions& opts) {
  const std::size_t dim = w.size();
  if (state.m.size() != dim || state.v.size() != dim || pseudo_gradient.size() != dim)
    throw dimension_mismatch("FedADAM state, model and pseudo-gradient must share one dimension");
  if (!(opts.server_lr > 0.0) || !(opts.tau > 0.0)) throw domain_error("FedADAM needs server_lr > 0 and tau > 0");
  if (!(opts.beta1 >= 0.0 && opts.beta1 < 1.0) || !(opts.beta2 >= 0.0 && opts.beta2 < 1.0))
    throw domain_error("FedADAM needs beta1, beta2 in [0, 1)");

  FedAdamState next{ModelParams(dim), ModelParams(dim)};
  ModelParams out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double g = pseudo_gradient[i];
    next.m[i] = opts.beta1 * state.m[i] + (1.0 - opts.beta1) * g;
    next.v[i] = opts.beta2 * state.v[i] + (1.0 - opts.beta2) * g * g;
    out[i] = w[i] + opts.server_lr * next.m[i] / (std::sqrt(next.v[i]) + opts.tau);
  }
  return {std::move(out), std::move(next)};
}

struct SimConfig {
  std::size_t pool_size = 1;
  std::size_t clients_per_round = 1;
  std::size_t max_rounds = 100;
  std::size_t local_epochs = 1;
  std::size_t batch_size = 32;
  double client_lr = kDefaultFedAvgClientLr;
  double server_lr = 0.1;
  double tau = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.99;
  Strategy strategy = Strategy::fedavg;
  double target_accuracy = 0.5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

inline void validate(const SimConfig& c) {
  using detail::require;
  require(c.clients_per_round >= 1 && c.clients_per_round <= c.pool_size, "1 <= clients_per_round <= pool_size");
  require(c.local_epochs >= 1, "local_epochs >= 1");
  require(c.max_rounds >= 1, "max_rounds >= 1");
  require(c.batch_size >= 1, "batch_size >= 1");
  require(c.client_lr > 0.0, "client_lr > 0");
  require(c.server_lr > 0.0, "server_lr > 0");
  require(c.tau > 0.0, "tau > 0");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0, "beta1, beta2 in [0,1)");
  require(c.target_accuracy >= 0.0 && c.target_accuracy <= 1.0, "target_accuracy in [0,1]");
  require(c.threads >= 1, "threads >= 1");
}

inline SimConfig make_sim_config(const ExperimentConfig& cfg) {
  SimConfig s;
  s.pool_size = cfg.fl.pool_size;
  s.clients_per_round = cfg.fl.clients_per_round;
  s.max_rounds = cfg.sim.max_rounds;
  s.local_epochs = cfg.fl.local_epochs;
  s.batch_size = cfg.sim.batch_size;
  s.client_lr = cfg.sim.client_lr;
  s.server_lr = cfg.sim.server_lr;
  s.tau = cfg.sim.tau;
  s.beta1 = cfg.sim.beta1;
  s.beta2 = cfg.sim.beta2;
  s.strategy = cfg.fl.strategy;
  s.target_accuracy = cfg.sim.target_accuracy;
  s.seed = cfg.seed;
  s.threads = cfg.sim.threads;
  return s;
}

struct AccuracyTrace {
  std::vector<double> accuracy;  // test accuracy after each round
  double round_time_s = 0.0;     // local_epochs * time_per_local_epoch_s

  std::size_t rounds() const { return accuracy.size(); }
  bool operator==(const AccuracyTrace&) const = default;
};

struct SimResult {
  AccuracyTrace trace;
  RoundSchedule schedule;
  ModelParams weights;
};

// 1-based index of the first round reaching `target`, or nullopt.
inline std::optional<std::size_t> rounds_to_target(const AccuracyTrace& trace, double target) {
  for (std::size_t r = 0; r < trace.accuracy.size(); ++r)
    if (trace.accuracy[r] >= target) return r + 1;
  return std::nullopt;
}

// Runs rounds until the test accuracy reaches the target or max_rounds is
// spent. `shards` holds each pool client's sample indices.
inline SimResult simulate(const SimConfig& cfg, const SimDataset& data,
                          std::span<const std::vector<std::size_t>> shards, const HardwareProfile& hardware) {
  validate(cfg);
  validate(hardware);
  if (shards.size() != cfg.pool_size)
    throw validation_error("partition has " + std::to_string(shards.size()) + " clients, pool_size is " +
                           std::to_string(cfg.pool_size));
  for (std::size_t k = 0; k < shards.size(); ++k)
    if (shards[k].empty()) throw validation_error("client " + std::to_string(k) + " has an empty shard");

  const TrainOptions opts{cfg.local_epochs, cfg.client_lr, cfg.batch_size};
  const FedAdamOptions adam{cfg.server_lr, cfg.beta1, cfg.beta2, cfg.tau};
  const double round_time_s = static_cast<double>(cfg.local_epochs) * hardware.time_per_local_epoch_s;

  SimResult out;
  out.trace.round_time_s = round_time_s;
  ModelParams w = zero_params(data);
  FedAdamState adam_state = FedAdamState::zeros(w.size());
  std::vector<std::size_t> epochs_done(cfg.pool_size, 0);

  for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
    const auto selected = select_clients(cfg.pool_size, cfg.clients_per_round, round, cfg.seed);
    std::vector<LocalResult> results(selected.size());
    auto run = [&](std::size_t slot) {
      const std::size_t c = selected[slot];
      results[slot] = train_local(w, data, shards[c], opts, client_training_seed(cfg.seed, c), epochs_done[c]);
    };
    const std::size_t workers = std::min(cfg.threads, selected.size());
    if (workers <= 1) {
      for (std::size_t s = 0; s < selected.size(); ++s) run(s);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t s = t; s < selected.size(); s += workers) run(s);
        });
    }
    // Reduction happens in client-id order after the barrier above.
    for (std::size_t c : selected) epochs_done[c] += cfg.local_epochs;

    if (cfg.strategy == Strategy::fedavg) {
      w = average_local_weights(results);
    } else {
      std::vector<ClientUpdate> updates;
      updates.reserve(results.size());
      for (auto& r : results) updates.push_back(ClientUpdate{std::move(r.delta), r.num_samples});
      auto [next_w, next_state] = fedadam_aggregate(adam_state, w, weighted_mean_delta(updates), adam);
      w = std::move(next_w);
      adam_state = std::move(next_state);
    }
    if (!all_finite(w)) throw domain_error("model diverged (non-finite weights) in round " + std::to_string(round));

    const double acc = accuracy(w, data, data.test);
    out.trace.accuracy.push_back(acc);
    for (std::size_t c : selected)
      out.schedule.participation.push_back(Participation{round, c, round_time_s, hardware});
    out.schedule.rounds = round + 1;
    if (acc >= cfg.target_accuracy) break;
  }
  out.weights = std::move(w);
  return out;
}

}  // namespace fedcarbon
