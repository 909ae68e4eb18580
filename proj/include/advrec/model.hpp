#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "advrec/dataset.hpp"
#include "advrec/matrix.hpp"
#include "advrec/rng.hpp"

namespace advrec {

// User and item embedding matrices (P: |U| x d, Q: |I| x d).
struct ModelParams {
  MatF P;
  MatF Q;

  std::size_t num_users() const { return P.rows; }
  std::size_t num_items() const { return Q.rows; }
  std::size_t dim() const { return P.cols; }
  bool same_shape(const ModelParams& o) const {
    return P.same_shape(o.P) && Q.same_shape(o.Q);
  }
};

// Per-entry accumulated squared gradients. Accumulators live in double and
// are never serialized.
struct AdagradState {
  std::vector<double> accum_p;
  std::vector<double> accum_q;
  double lr = 0.05;
  double eps_stability = 1e-8;

  AdagradState(std::size_t num_users, std::size_t num_items, std::size_t d,
               double learning_rate)
      : accum_p(num_users * d, 0.0),
        accum_q(num_items * d, 0.0),
        lr(learning_rate) {}
};

struct TrainConfig {
  std::size_t epochs = 2000;
  std::size_t batch_size = 512;
  double lr = 0.05;
  std::size_t d = 64;
  std::uint64_t seed = 42;
  std::set<std::size_t> checkpoint_epochs = {1000};
  double l2_reg = 0.0;

  void validate() const;
};

struct Triple {
  std::uint32_t u;  // user
  std::uint32_t i;  // interacted item
  std::uint32_t j;  // non-interacted item
};

// Seed stream salts shared by the trainers, so a warm-started continuation
// with the same seed replays the exact sampling sequence of the plain loop.
inline constexpr std::uint64_t kTrainInitSalt = 0x494e4954;
inline constexpr std::uint64_t kTrainSamplerSalt = 0x53414d50;

// Sparse per-row gradient accumulator over (P, Q). Rows are zeroed lazily
// through the touched lists so clearing costs O(touched), not O(|U|+|I|).
class GradBuffer {
 public:
  GradBuffer(std::size_t num_users, std::size_t num_items, std::size_t d);

  void clear();
  std::span<double> user_row(std::uint32_t u);
  std::span<double> item_row(std::uint32_t i);
  std::span<const double> user_row(std::uint32_t u) const;
  std::span<const double> item_row(std::uint32_t i) const;
  bool user_touched(std::uint32_t u) const { return touched_p_flag_[u] != 0; }
  bool item_touched(std::uint32_t i) const { return touched_q_flag_[i] != 0; }
  const std::vector<std::uint32_t>& touched_users() const { return touched_p_; }
  const std::vector<std::uint32_t>& touched_items() const { return touched_q_; }
  std::size_t dim() const { return d_; }
  bool all_finite() const;

 private:
  std::size_t d_;
  std::vector<double> gp_, gq_;
  std::vector<std::uint8_t> touched_p_flag_, touched_q_flag_;
  std::vector<std::uint32_t> touched_p_, touched_q_;
};

// Entries drawn i.i.d. from N(0, 0.01^2); deterministic per seed.
ModelParams init_params(std::size_t num_users, std::size_t num_items,
                        std::size_t d, std::uint64_t seed);

// Preference score p_u . q_i. Throws std::out_of_range on bad indices.
double score(const ModelParams& params, std::uint32_t u, std::uint32_t i);

// Pairwise ranking loss: sum over triples of -ln sigmoid(s(u,i) - s(u,j)),
// plus l2_reg * (squared norms of the rows each triple touches).
double bpr_loss(const ModelParams& params, std::span<const Triple> triples,
                double l2_reg = 0.0);

// Accumulates closed-form gradients of bpr_loss into `out`, scaled by
// `scale`. Returns the (unscaled) loss over the batch. Rows not touched by
// any triple keep exactly zero gradient.
double bpr_gradients(const ModelParams& params, std::span<const Triple> batch,
                     double l2_reg, GradBuffer& out, double scale = 1.0);

// accum += g^2; param -= lr * g / (sqrt(accum) + eps). Touched rows only.
void adagrad_step(ModelParams& params, AdagradState& state,
                  const GradBuffer& grads);

// Uniform (user, positive, rejected negative) sampler. Users whose positives
// cover the whole catalog are excluded (they admit no negative).
class TripleSampler {
 public:
  TripleSampler(const ImplicitDataset& train, std::uint64_t seed);
  Triple next();
  std::vector<Triple> batch(std::size_t n);
  std::size_t eligible_users() const { return eligible_.size(); }

 private:
  const ImplicitDataset& train_;
  std::vector<std::uint32_t> eligible_;
  Rng rng_;
};

// One triple per observed train interaction, users and positives in index
// order, negatives rejection-sampled from the given seed.
std::vector<Triple> all_triples(const ImplicitDataset& train,
                                std::uint64_t seed);

struct TrainResult {
  ModelParams params;
  std::map<std::size_t, ModelParams> checkpoints;
  std::vector<double> epoch_mean_loss;  // objective per triple, by epoch
};

// Mini-batch BPR training with Adagrad. One epoch runs
// ceil(|F| / batch_size) batches. Checkpoints are bit-identical snapshots
// taken at the end of the configured epochs.
TrainResult train_bpr(const ImplicitDataset& train, const TrainConfig& config);

// Same loop warm-started from existing parameters (fresh optimizer state).
TrainResult train_bpr_from(const ImplicitDataset& train,
                           const TrainConfig& config,
                           const ModelParams& initial);

struct TopK {
  std::vector<std::uint32_t> items;  // descending score, ties by index
  std::vector<double> scores;
  bool short_list = false;  // fewer than K candidates existed
};

// K highest-scoring items outside `exclusions` (a sorted index list).
TopK recommend_topk(const ModelParams& params, std::uint32_t u, std::size_t k,
                    std::span<const std::uint32_t> exclusions);

// Rank pre-computed scores; recommend_topk delegates here.
TopK topk_from_scores(std::span<const double> scores, std::size_t k,
                      std::span<const std::uint32_t> exclusions);

// Seeded uniform draw of K non-excluded items (per-user stream).
TopK random_recommendation(std::size_t num_items, std::uint32_t u,
                           std::size_t k,
                           std::span<const std::uint32_t> exclusions,
                           std::uint64_t seed);

}  // namespace advrec
