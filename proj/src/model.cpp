#include "advrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "advrec/errors.hpp"

namespace advrec {

namespace {

// ln(1 + e^z) without overflow.
double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (d < 1) throw ConfigError("train: embedding dimension must be >= 1");
  if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
  if (l2_reg < 0.0) throw ConfigError("train: l2_reg must be >= 0");
}

GradBuffer::GradBuffer(std::size_t num_users, std::size_t num_items,
                       std::size_t d)
    : d_(d),
      gp_(num_users * d, 0.0),
      gq_(num_items * d, 0.0),
      touched_p_flag_(num_users, 0),
      touched_q_flag_(num_items, 0) {}

void GradBuffer::clear() {
  for (std::uint32_t u : touched_p_) {
    std::fill_n(gp_.data() + std::size_t(u) * d_, d_, 0.0);
    touched_p_flag_[u] = 0;
  }
  for (std::uint32_t i : touched_q_) {
    std::fill_n(gq_.data() + std::size_t(i) * d_, d_, 0.0);
    touched_q_flag_[i] = 0;
  }
  touched_p_.clear();
  touched_q_.clear();
}

std::span<double> GradBuffer::user_row(std::uint32_t u) {
  if (!touched_p_flag_[u]) {
    touched_p_flag_[u] = 1;
    touched_p_.push_back(u);
  }
  return {gp_.data() + std::size_t(u) * d_, d_};
}

std::span<double> GradBuffer::item_row(std::uint32_t i) {
  if (!touched_q_flag_[i]) {
    touched_q_flag_[i] = 1;
    touched_q_.push_back(i);
  }
  return {gq_.data() + std::size_t(i) * d_, d_};
}

std::span<const double> GradBuffer::user_row(std::uint32_t u) const {
  return {gp_.data() + std::size_t(u) * d_, d_};
}

std::span<const double> GradBuffer::item_row(std::uint32_t i) const {
  return {gq_.data() + std::size_t(i) * d_, d_};
}

bool GradBuffer::all_finite() const {
  for (std::uint32_t u : touched_p_)
    for (double v : user_row(u))
      if (!std::isfinite(v)) return false;
  for (std::uint32_t i : touched_q_)
    for (double v : item_row(i))
      if (!std::isfinite(v)) return false;
  return true;
}

ModelParams init_params(std::size_t num_users, std::size_t num_items,
                        std::size_t d, std::uint64_t seed) {
  if (d == 0) throw ConfigError("init_params: embedding dimension is 0");
  if (num_users == 0 || num_items == 0)
    throw ConfigError("init_params: empty user or item space");
  ModelParams params{MatF(num_users, d), MatF(num_items, d)};
  Rng rng(seed);
  for (float& v : params.P.data) v = static_cast<float>(rng.normal(0.0, 0.01));
  for (float& v : params.Q.data) v = static_cast<float>(rng.normal(0.0, 0.01));
  return params;
}

double score(const ModelParams& params, std::uint32_t u, std::uint32_t i) {
  if (u >= params.num_users() || i >= params.num_items())
    throw std::out_of_range("score: index out of range (u=" +
                            std::to_string(u) + ", i=" + std::to_string(i) +
                            ")");
  return dot(params.P.row(u), params.Q.row(i));
}

double bpr_loss(const ModelParams& params, std::span<const Triple> triples,
                double l2_reg) {
  double loss = 0.0;
  for (const Triple& t : triples) {
    const auto pu = params.P.row(t.u);
    const auto qi = params.Q.row(t.i);
    const auto qj = params.Q.row(t.j);
    const double x = dot(pu, qi) - dot(pu, qj);
    loss += softplus(-x);  // == -ln sigmoid(x)
    if (l2_reg > 0.0) {
      double sq = 0.0;
      for (std::size_t k = 0; k < pu.size(); ++k)
        sq += double(pu[k]) * pu[k] + double(qi[k]) * qi[k] +
              double(qj[k]) * qj[k];
      loss += l2_reg * sq;
    }
  }
  return loss;
}

double bpr_gradients(const ModelParams& params, std::span<const Triple> batch,
                     double l2_reg, GradBuffer& out, double scale) {
  double loss = 0.0;
  for (const Triple& t : batch) {
    const auto pu = params.P.row(t.u);
    const auto qi = params.Q.row(t.i);
    const auto qj = params.Q.row(t.j);
    const double x = dot(pu, qi) - dot(pu, qj);
    loss += softplus(-x);
    // d(-ln sigmoid(x))/dx = -sigmoid(-x)
    const double g = -1.0 / (1.0 + std::exp(x));

    auto gp = out.user_row(t.u);
    auto gi = out.item_row(t.i);
    auto gj = out.item_row(t.j);
    for (std::size_t k = 0; k < pu.size(); ++k) {
      gp[k] += scale * (g * (double(qi[k]) - qj[k]) + 2.0 * l2_reg * pu[k]);
      gi[k] += scale * (g * pu[k] + 2.0 * l2_reg * qi[k]);
      gj[k] += scale * (-g * pu[k] + 2.0 * l2_reg * qj[k]);
    }
    if (l2_reg > 0.0) {
      double sq = 0.0;
      for (std::size_t k = 0; k < pu.size(); ++k)
        sq += double(pu[k]) * pu[k] + double(qi[k]) * qi[k] +
              double(qj[k]) * qj[k];
      loss += l2_reg * sq;
    }
  }
  return loss;
}

void adagrad_step(ModelParams& params, AdagradState& state,
                  const GradBuffer& grads) {
  const std::size_t d = grads.dim();
  for (std::uint32_t u : grads.touched_users()) {
    const auto g = grads.user_row(u);
    auto row = params.P.row(u);
    double* acc = state.accum_p.data() + std::size_t(u) * d;
    for (std::size_t k = 0; k < d; ++k) {
      acc[k] += g[k] * g[k];
      row[k] = static_cast<float>(
          double(row[k]) -
          state.lr * g[k] / (std::sqrt(acc[k]) + state.eps_stability));
    }
  }
  for (std::uint32_t i : grads.touched_items()) {
    const auto g = grads.item_row(i);
    auto row = params.Q.row(i);
    double* acc = state.accum_q.data() + std::size_t(i) * d;
    for (std::size_t k = 0; k < d; ++k) {
      acc[k] += g[k] * g[k];
      row[k] = static_cast<float>(
          double(row[k]) -
          state.lr * g[k] / (std::sqrt(acc[k]) + state.eps_stability));
    }
  }
}

TripleSampler::TripleSampler(const ImplicitDataset& train, std::uint64_t seed)
    : train_(train), rng_(seed) {
  for (std::uint32_t u = 0; u < train.num_users(); ++u) {
    const std::size_t n = train.items_of(u).size();
    if (n >= 1 && n < train.num_items()) eligible_.push_back(u);
  }
  if (eligible_.empty())
    throw ConfigError("triple sampler: no user admits a negative item");
}

Triple TripleSampler::next() {
  const std::uint32_t u =
      eligible_[static_cast<std::size_t>(rng_.below(eligible_.size()))];
  const auto& positives = train_.items_of(u);
  const std::uint32_t i =
      positives[static_cast<std::size_t>(rng_.below(positives.size()))];
  std::uint32_t j;
  do {
    j = static_cast<std::uint32_t>(rng_.below(train_.num_items()));
  } while (std::binary_search(positives.begin(), positives.end(), j));
  return {u, i, j};
}

std::vector<Triple> TripleSampler::batch(std::size_t n) {
  std::vector<Triple> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(next());
  return out;
}

std::vector<Triple> all_triples(const ImplicitDataset& train,
                                std::uint64_t seed) {
  std::vector<Triple> out;
  out.reserve(train.num_interactions());
  Rng rng(seed);
  for (std::uint32_t u = 0; u < train.num_users(); ++u) {
    const auto& positives = train.items_of(u);
    if (positives.size() >= train.num_items()) continue;  // no negative exists
    for (std::uint32_t i : positives) {
      std::uint32_t j;
      do {
        j = static_cast<std::uint32_t>(rng.below(train.num_items()));
      } while (std::binary_search(positives.begin(), positives.end(), j));
      out.push_back({u, i, j});
    }
  }
  return out;
}

namespace {

TrainResult run_bpr(const ImplicitDataset& train, const TrainConfig& config,
                    const ModelParams* initial) {
  config.validate();
  if (train.empty()) throw ConfigError("train: dataset is empty");

  TrainResult result;
  result.params =
      initial ? *initial
              : init_params(train.num_users(), train.num_items(), config.d,
                            mix_seed(config.seed, kTrainInitSalt));
  if (initial && initial->dim() != config.d)
    throw ConfigError("train: warm-start dimension differs from config.d");

  AdagradState state(train.num_users(), train.num_items(), config.d,
                     config.lr);
  TripleSampler sampler(train, mix_seed(config.seed, kTrainSamplerSalt));
  GradBuffer grads(train.num_users(), train.num_items(), config.d);

  const std::size_t batches =
      (train.num_interactions() + config.batch_size - 1) / config.batch_size;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto batch = sampler.batch(config.batch_size);
      grads.clear();
      const double loss =
          bpr_gradients(result.params, batch, config.l2_reg, grads);
      if (!std::isfinite(loss) || !grads.all_finite())
        throw TrainingError("non-finite loss at epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(b + 1));
      adagrad_step(result.params, state, grads);
      epoch_loss += loss;
    }
    result.epoch_mean_loss.push_back(
        epoch_loss / (double(batches) * double(config.batch_size)));
    if (config.checkpoint_epochs.count(epoch))
      result.checkpoints.emplace(epoch, result.params);
  }
  return result;
}

}  // namespace

TrainResult train_bpr(const ImplicitDataset& train, const TrainConfig& config) {
  return run_bpr(train, config, nullptr);
}

TrainResult train_bpr_from(const ImplicitDataset& train,
                           const TrainConfig& config,
                           const ModelParams& initial) {
  return run_bpr(train, config, &initial);
}

TopK topk_from_scores(std::span<const double> scores, std::size_t k,
                      std::span<const std::uint32_t> exclusions) {
  std::vector<std::uint32_t> candidates;
  candidates.reserve(scores.size());
  for (std::uint32_t i = 0; i < scores.size(); ++i)
    if (!std::binary_search(exclusions.begin(), exclusions.end(), i))
      candidates.push_back(i);

  const std::size_t take = std::min(k, candidates.size());
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(candidates.begin(),
                    candidates.begin() + static_cast<std::ptrdiff_t>(take),
                    candidates.end(), better);
  candidates.resize(take);

  TopK out;
  out.short_list = take < k;
  out.items = std::move(candidates);
  out.scores.reserve(take);
  for (std::uint32_t i : out.items) out.scores.push_back(scores[i]);
  return out;
}

TopK recommend_topk(const ModelParams& params, std::uint32_t u, std::size_t k,
                    std::span<const std::uint32_t> exclusions) {
  if (k < 1) throw ConfigError("recommend_topk: k must be >= 1");
  if (u >= params.num_users())
    throw std::out_of_range("recommend_topk: user index out of range");
  std::vector<double> scores(params.num_items());
  const auto pu = params.P.row(u);
  for (std::uint32_t i = 0; i < params.num_items(); ++i)
    scores[i] = dot(pu, params.Q.row(i));
  return topk_from_scores(scores, k, exclusions);
}

TopK random_recommendation(std::size_t num_items, std::uint32_t u,
                           std::size_t k,
                           std::span<const std::uint32_t> exclusions,
                           std::uint64_t seed) {
  if (k < 1) throw ConfigError("random_recommendation: k must be >= 1");
  std::vector<std::uint32_t> candidates;
  candidates.reserve(num_items);
  for (std::uint32_t i = 0; i < num_items; ++i)
    if (!std::binary_search(exclusions.begin(), exclusions.end(), i))
      candidates.push_back(i);
  Rng rng(mix_seed(seed, u));
  rng.shuffle(candidates);
  TopK out;
  out.short_list = candidates.size() < k;
  candidates.resize(std::min(k, candidates.size()));
  out.items = std::move(candidates);
  out.scores.assign(out.items.size(), 0.0);
  return out;
}

}  // namespace advrec
