#include "advrec/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "advrec/errors.hpp"
#include "advrec/rng.hpp"

namespace advrec {

namespace {

constexpr std::uint64_t kSaltPgdInit = 0;
constexpr std::uint64_t kSaltTriples = 1;

bool targets_p(TargetSet t) { return t != TargetSet::Q; }
bool targets_q(TargetSet t) { return t != TargetSet::P; }

std::vector<Triple> loss_triples(const ImplicitDataset& train,
                                 const LossBatch& lb,
                                 std::uint64_t attack_seed) {
  if (lb.kind == LossBatch::Kind::AllTriples)
    return all_triples(train, mix_seed(attack_seed, kSaltTriples));
  TripleSampler sampler(train, mix_seed(lb.seed, kSaltTriples));
  return sampler.batch(lb.count);
}

// Rescale each touched nonzero gradient row to L2 norm `budget` and add it
// to the corresponding rows of dst (dst may be a delta or a parameter set).
// Returns true if any row moved.
bool add_normalized_rows(MatF& dst, const GradBuffer& grads, bool user_side,
                         double budget) {
  bool moved = false;
  const auto& touched =
      user_side ? grads.touched_users() : grads.touched_items();
  for (std::uint32_t r : touched) {
    const auto g = user_side ? grads.user_row(r) : grads.item_row(r);
    const double norm = l2_norm(g);
    if (norm <= 0.0) continue;
    auto row = dst.row(r);
    const double scale = budget / norm;
    for (std::size_t k = 0; k < row.size(); ++k)
      row[k] = static_cast<float>(double(row[k]) + scale * g[k]);
    moved = true;
  }
  return moved;
}

double global_grad_norm(const GradBuffer& grads, TargetSet targets) {
  double acc = 0.0;
  if (targets_p(targets))
    for (std::uint32_t u : grads.touched_users())
      for (double v : grads.user_row(u)) acc += v * v;
  if (targets_q(targets))
    for (std::uint32_t i : grads.touched_items())
      for (double v : grads.item_row(i)) acc += v * v;
  return std::sqrt(acc);
}

bool add_scaled_rows(MatF& dst, const GradBuffer& grads, bool user_side,
                     double scale) {
  bool moved = false;
  const auto& touched =
      user_side ? grads.touched_users() : grads.touched_items();
  for (std::uint32_t r : touched) {
    const auto g = user_side ? grads.user_row(r) : grads.item_row(r);
    auto row = dst.row(r);
    for (std::size_t k = 0; k < row.size(); ++k)
      row[k] = static_cast<float>(double(row[k]) + scale * g[k]);
    moved = true;
  }
  return moved;
}

// Ascent step into dst (pre-filled with the current adversarial params).
bool ascend(ModelParams& dst, const GradBuffer& grads, double budget,
            TargetSet targets, NormScope scope) {
  bool moved = false;
  if (scope == NormScope::PerRow) {
    if (targets_p(targets)) moved |= add_normalized_rows(dst.P, grads, true, budget);
    if (targets_q(targets)) moved |= add_normalized_rows(dst.Q, grads, false, budget);
  } else {
    const double norm = global_grad_norm(grads, targets);
    if (norm > 0.0) {
      const double scale = budget / norm;
      if (targets_p(targets)) moved |= add_scaled_rows(dst.P, grads, true, scale);
      if (targets_q(targets)) moved |= add_scaled_rows(dst.Q, grads, false, scale);
    }
  }
  return moved;
}

void clip_rows_in_place(MatF& adv, const MatF& orig,
                        const std::vector<std::uint32_t>& rows, double eps) {
  for (std::uint32_t r : rows) {
    auto a = adv.row(r);
    const auto o = orig.row(r);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double lo = double(o[k]) - eps;
      const double hi = double(o[k]) + eps;
      a[k] = static_cast<float>(std::clamp(double(a[k]), lo, hi));
    }
  }
}

Delta delta_between(const ModelParams& adv, const ModelParams& orig) {
  Delta d;
  d.dP = MatF(orig.P.rows, orig.P.cols);
  d.dQ = MatF(orig.Q.rows, orig.Q.cols);
  for (std::size_t n = 0; n < d.dP.data.size(); ++n)
    d.dP.data[n] =
        static_cast<float>(double(adv.P.data[n]) - double(orig.P.data[n]));
  for (std::size_t n = 0; n < d.dQ.data.size(); ++n)
    d.dQ.data[n] =
        static_cast<float>(double(adv.Q.data[n]) - double(orig.Q.data[n]));
  return d;
}

}  // namespace

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Fgsm: return "fgsm";
    case Strategy::Bim: return "bim";
    case Strategy::Pgd: return "pgd";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "fgsm") return Strategy::Fgsm;
  if (name == "bim") return Strategy::Bim;
  if (name == "pgd") return Strategy::Pgd;
  throw ConfigError("unknown perturbation strategy: " + name);
}

PerturbationConfig PerturbationConfig::make(Strategy s, double epsilon,
                                            std::uint64_t seed,
                                            std::size_t iterations) {
  PerturbationConfig c;
  c.strategy = s;
  c.epsilon = epsilon;
  c.alpha = epsilon / 4.0;
  c.seed = seed;
  c.iterations = s == Strategy::Fgsm ? 1 : iterations;
  c.init_mode = s == Strategy::Pgd ? InitMode::Uniform : InitMode::Zeros;
  return c;
}

void PerturbationConfig::validate() const {
  if (epsilon <= 0.0) throw ConfigError("perturbation: epsilon must be > 0");
  if (alpha <= 0.0) throw ConfigError("perturbation: alpha must be > 0");
  if (alpha > epsilon)
    throw ConfigError("perturbation: alpha must not exceed epsilon");
  if (iterations < 1) throw ConfigError("perturbation: iterations must be >= 1");
  if (strategy == Strategy::Fgsm &&
      (iterations != 1 || init_mode != InitMode::Zeros))
    throw ConfigError("perturbation: fgsm implies one iteration and zero init");
  if (strategy == Strategy::Bim && init_mode != InitMode::Zeros)
    throw ConfigError("perturbation: bim starts from a zero perturbation");
  // Pgd with zero init is allowed: it degenerates to bim by construction and
  // is used as a test hook.
}

Delta fgsm_delta_over_triples(const ModelParams& params,
                              std::span<const Triple> triples, double epsilon,
                              TargetSet targets, NormScope norm_scope) {
  if (epsilon <= 0.0) throw ConfigError("fgsm: epsilon must be > 0");
  GradBuffer grads(params.num_users(), params.num_items(), params.dim());
  bpr_gradients(params, triples, 0.0, grads);

  Delta d;
  d.dP = MatF(params.P.rows, params.P.cols);
  d.dQ = MatF(params.Q.rows, params.Q.cols);
  d.epsilon = epsilon;
  d.strategy = Strategy::Fgsm;
  d.iterations_run = 1;

  bool moved = false;
  if (norm_scope == NormScope::PerRow) {
    if (targets_p(targets)) moved |= add_normalized_rows(d.dP, grads, true, epsilon);
    if (targets_q(targets)) moved |= add_normalized_rows(d.dQ, grads, false, epsilon);
  } else {
    const double norm = global_grad_norm(grads, targets);
    if (norm > 0.0) {
      const double scale = epsilon / norm;
      if (targets_p(targets)) moved |= add_scaled_rows(d.dP, grads, true, scale);
      if (targets_q(targets)) moved |= add_scaled_rows(d.dQ, grads, false, scale);
    }
  }
  d.zero_gradient = !moved;
  return d;
}

Delta fgsm_delta(const ModelParams& params, const ImplicitDataset& train,
                 double epsilon, const LossBatch& loss_batch,
                 std::uint64_t seed, TargetSet targets, NormScope norm_scope) {
  const auto triples = loss_triples(train, loss_batch, seed);
  Delta d = fgsm_delta_over_triples(params, triples, epsilon, targets,
                                    norm_scope);
  d.seed = seed;
  return d;
}

ModelParams apply_delta(const ModelParams& params, const Delta& delta) {
  if (!delta.shape_matches(params))
    throw std::domain_error("apply_delta: shape mismatch");
  ModelParams out = params;
  for (std::size_t n = 0; n < out.P.data.size(); ++n)
    out.P.data[n] = static_cast<float>(double(params.P.data[n]) +
                                       double(delta.dP.data[n]));
  for (std::size_t n = 0; n < out.Q.data.size(); ++n)
    out.Q.data[n] = static_cast<float>(double(params.Q.data[n]) +
                                       double(delta.dQ.data[n]));
  return out;
}

ModelParams clip_to_budget(const ModelParams& theta_adv,
                           const ModelParams& theta_orig, double epsilon) {
  if (!theta_adv.same_shape(theta_orig))
    throw std::domain_error("clip_to_budget: shape mismatch");
  ModelParams out = theta_adv;
  for (std::size_t n = 0; n < out.P.data.size(); ++n) {
    const double o = theta_orig.P.data[n];
    out.P.data[n] = static_cast<float>(
        std::clamp(double(out.P.data[n]), o - epsilon, o + epsilon));
  }
  for (std::size_t n = 0; n < out.Q.data.size(); ++n) {
    const double o = theta_orig.Q.data[n];
    out.Q.data[n] = static_cast<float>(
        std::clamp(double(out.Q.data[n]), o - epsilon, o + epsilon));
  }
  return out;
}

std::vector<Delta> iterative_delta_snapshots(
    const ModelParams& params, const ImplicitDataset& train,
    const PerturbationConfig& config,
    std::span<const std::size_t> snapshot_iters) {
  config.validate();
  if (config.strategy == Strategy::Fgsm)
    throw ConfigError("iterative perturbation requires bim or pgd");
  if (snapshot_iters.empty()) return {};
  std::vector<std::size_t> snaps(snapshot_iters.begin(), snapshot_iters.end());
  std::sort(snaps.begin(), snaps.end());
  if (snaps.front() < 1)
    throw ConfigError("iterative perturbation: snapshot iteration must be >= 1");

  ModelParams adv = params;
  if (config.init_mode == InitMode::Uniform) {
    Rng rng(mix_seed(config.seed, kSaltPgdInit));
    if (targets_p(config.targets))
      for (float& v : adv.P.data)
        v = static_cast<float>(
            double(v) + rng.uniform(-config.epsilon, config.epsilon));
    if (targets_q(config.targets))
      for (float& v : adv.Q.data)
        v = static_cast<float>(
            double(v) + rng.uniform(-config.epsilon, config.epsilon));
  }

  GradBuffer grads(params.num_users(), params.num_items(), params.dim());
  std::vector<Delta> out;
  std::size_t next_snap = 0;
  const std::size_t max_iter = snaps.back();
  // One fixed attack objective: the triples are drawn once and every
  // iteration ascends the same loss surface. Re-drawing negatives per step
  // makes the walk incoherent and measurably weakens the attack.
  const auto triples = loss_triples(train, config.loss_batch, config.seed);
  for (std::size_t l = 1; l <= max_iter; ++l) {
    grads.clear();
    bpr_gradients(adv, triples, 0.0, grads);
    if (!grads.all_finite())
      throw TrainingError("non-finite attack gradient at iteration " +
                          std::to_string(l));
    ascend(adv, grads, config.alpha, config.targets, config.norm_scope);
    // only stepped rows can have left the band; the init is inside it
    if (targets_p(config.targets))
      clip_rows_in_place(adv.P, params.P, grads.touched_users(),
                         config.epsilon);
    if (targets_q(config.targets))
      clip_rows_in_place(adv.Q, params.Q, grads.touched_items(),
                         config.epsilon);

    while (next_snap < snaps.size() && snaps[next_snap] == l) {
      Delta d = delta_between(adv, params);
      d.epsilon = config.epsilon;
      d.alpha = config.alpha;
      d.strategy = config.strategy;
      d.iterations_run = l;
      d.seed = config.seed;
      out.push_back(std::move(d));
      ++next_snap;
    }
  }
  return out;
}

Delta iterative_delta(const ModelParams& params, const ImplicitDataset& train,
                      const PerturbationConfig& config) {
  const std::size_t snaps[] = {config.iterations};
  auto v = iterative_delta_snapshots(params, train, config, snaps);
  return std::move(v.front());
}

Delta make_delta(const ModelParams& params, const ImplicitDataset& train,
                 const PerturbationConfig& config) {
  config.validate();
  if (config.strategy == Strategy::Fgsm) {
    Delta d = fgsm_delta(params, train, config.epsilon, config.loss_batch,
                         config.seed, config.targets, config.norm_scope);
    d.alpha = config.alpha;
    return d;
  }
  return iterative_delta(params, train, config);
}

void AprConfig::validate() const {
  if (lambda < 0.0) throw ConfigError("apr: lambda must be >= 0");
  if (epsilon_adv <= 0.0) throw ConfigError("apr: epsilon_adv must be > 0");
  if (apr_epochs < 1) throw ConfigError("apr: apr_epochs must be >= 1");
}

TrainResult apr_train(const ImplicitDataset& train,
                      const ModelParams& bpr_checkpoint,
                      const AprConfig& apr_config,
                      const TrainConfig& train_config) {
  apr_config.validate();
  TrainConfig config = train_config;
  config.epochs = apr_config.apr_epochs;
  config.validate();
  if (train.empty()) throw ConfigError("apr: dataset is empty");
  if (bpr_checkpoint.dim() != config.d)
    throw ConfigError("apr: checkpoint dimension differs from config.d");

  TrainResult result;
  result.params = bpr_checkpoint;
  AdagradState state(train.num_users(), train.num_items(), config.d,
                     config.lr);
  TripleSampler sampler(train, mix_seed(config.seed, kTrainSamplerSalt));
  GradBuffer grads(train.num_users(), train.num_items(), config.d);
  GradBuffer attack_grads(train.num_users(), train.num_items(), config.d);

  // Adversarial evaluation point; rows touched by the current batch are
  // refreshed from params each time, so stale rows are never read.
  ModelParams adv = result.params;
  const bool adversarial = apr_config.lambda > 0.0;

  const std::size_t batches =
      (train.num_interactions() + config.batch_size - 1) / config.batch_size;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const auto batch = sampler.batch(config.batch_size);
      grads.clear();
      double loss =
          bpr_gradients(result.params, batch, config.l2_reg, grads);

      if (adversarial) {
        // The perturbation direction is the plain loss gradient over this
        // batch. When l2_reg is active the attack gradient differs from the
        // training gradient and needs its own pass.
        const GradBuffer* direction = &grads;
        if (config.l2_reg > 0.0) {
          attack_grads.clear();
          bpr_gradients(result.params, batch, 0.0, attack_grads);
          direction = &attack_grads;
        }
        for (std::uint32_t u : direction->touched_users()) {
          auto dst = adv.P.row(u);
          const auto src = result.params.P.row(u);
          std::copy(src.begin(), src.end(), dst.begin());
        }
        for (std::uint32_t i : direction->touched_items()) {
          auto dst = adv.Q.row(i);
          const auto src = result.params.Q.row(i);
          std::copy(src.begin(), src.end(), dst.begin());
        }
        add_normalized_rows(adv.P, *direction, true, apr_config.epsilon_adv);
        add_normalized_rows(adv.Q, *direction, false, apr_config.epsilon_adv);

        const double adv_loss = bpr_gradients(adv, batch, config.l2_reg,
                                              grads, apr_config.lambda);
        loss += apr_config.lambda * adv_loss;
      }

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

}  // namespace advrec
