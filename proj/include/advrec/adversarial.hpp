#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "advrec/dataset.hpp"
#include "advrec/matrix.hpp"
#include "advrec/model.hpp"

namespace advrec {

enum class Strategy : std::uint32_t { Fgsm = 0, Bim = 1, Pgd = 2 };
enum class InitMode : int { Zeros, Uniform };
enum class TargetSet : int { P, Q, Both };
enum class NormScope : int { PerRow, Global };

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

// Which triples the attacker's gradient is computed over. AllTriples builds
// one triple per observed train interaction (negatives re-sampled per
// iteration); Sampled draws `count` triples from the uniform sampler.
struct LossBatch {
  enum class Kind : int { AllTriples, Sampled };
  Kind kind = Kind::AllTriples;
  std::size_t count = 0;       // Sampled only
  std::uint64_t seed = 0;      // Sampled only; AllTriples uses the attack seed
};

struct PerturbationConfig {
  Strategy strategy = Strategy::Fgsm;
  double epsilon = 0.5;
  double alpha = 0.125;        // per-iteration step budget
  std::size_t iterations = 1;  // L
  InitMode init_mode = InitMode::Zeros;
  std::uint64_t seed = 0;
  TargetSet targets = TargetSet::Both;
  NormScope norm_scope = NormScope::PerRow;
  LossBatch loss_batch;

  // Defaults per strategy: alpha = epsilon/4, FGSM pins L = 1 and zero init,
  // PGD starts from a uniform draw.
  static PerturbationConfig make(Strategy s, double epsilon,
                                 std::uint64_t seed,
                                 std::size_t iterations = 25);
  void validate() const;
};

// Additive perturbation of the embedding matrices, plus the budget metadata
// it was generated under.
struct Delta {
  MatF dP;
  MatF dQ;
  double epsilon = 0.0;
  double alpha = 0.0;
  Strategy strategy = Strategy::Fgsm;
  std::size_t iterations_run = 0;
  std::uint64_t seed = 0;
  bool zero_gradient = false;  // gradient vanished; delta is all zeros

  bool shape_matches(const ModelParams& p) const {
    return dP.same_shape(p.P) && dQ.same_shape(p.Q);
  }
};

// Single-step perturbation: the loss gradient at the unperturbed parameters,
// each nonzero embedding row rescaled to L2 norm epsilon (or the whole
// matrix set rescaled once under NormScope::Global).
Delta fgsm_delta(const ModelParams& params, const ImplicitDataset& train,
                 double epsilon, const LossBatch& loss_batch,
                 std::uint64_t seed = 0, TargetSet targets = TargetSet::Both,
                 NormScope norm_scope = NormScope::PerRow);

// Same construction over a caller-supplied triple batch.
Delta fgsm_delta_over_triples(const ModelParams& params,
                              std::span<const Triple> triples, double epsilon,
                              TargetSet targets = TargetSet::Both,
                              NormScope norm_scope = NormScope::PerRow);

// params + delta, elementwise; inputs untouched.
ModelParams apply_delta(const ModelParams& params, const Delta& delta);

// Clamp every entry of theta_adv into [theta_orig - eps, theta_orig + eps].
ModelParams clip_to_budget(const ModelParams& theta_adv,
                           const ModelParams& theta_orig, double epsilon);

// Multi-step perturbation: L normalized ascent steps of size alpha, each
// clipped elementwise into the epsilon band around the original parameters.
Delta iterative_delta(const ModelParams& params, const ImplicitDataset& train,
                      const PerturbationConfig& config);

// One pass to max(snapshot_iters), capturing the delta after each requested
// iteration count. Valid because iteration l depends only on iterations
// 1..l-1: the delta at snapshot L equals iterative_delta run with L.
std::vector<Delta> iterative_delta_snapshots(
    const ModelParams& params, const ImplicitDataset& train,
    const PerturbationConfig& config, std::span<const std::size_t> snapshot_iters);

// Dispatch on config.strategy.
Delta make_delta(const ModelParams& params, const ImplicitDataset& train,
                 const PerturbationConfig& config);

struct AprConfig {
  double lambda = 1.0;
  double epsilon_adv = 0.5;
  std::size_t apr_epochs = 1000;
  // which stored checkpoint to continue from; unset: the latest one
  std::optional<std::size_t> warm_start_epoch;

  void validate() const;
};

// Adversarially regularized training: each batch minimizes
// bpr_loss(theta) + lambda * bpr_loss(theta + fgsm delta over the batch),
// the delta treated as a constant. Parameters are never left perturbed.
// Starts from the warm-start checkpoint with fresh optimizer state.
TrainResult apr_train(const ImplicitDataset& train,
                      const ModelParams& bpr_checkpoint,
                      const AprConfig& apr_config,
                      const TrainConfig& train_config);

}  // namespace advrec
