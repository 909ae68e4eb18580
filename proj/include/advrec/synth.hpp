#pragma once

#include <cstdint>
#include <filesystem>

#include "advrec/dataset.hpp"

namespace advrec {

// Clustered implicit-feedback generator. Items belong to latent clusters
// with a popularity skew inside each cluster; every user draws most
// interactions from one primary cluster and the rest uniformly from the
// catalog. The structure is learnable by matrix factorization and the skew
// gives k-core subsampling a real tail to prune.
struct SynthConfig {
  std::size_t num_users = 200;
  std::size_t num_items = 300;
  std::size_t num_clusters = 8;
  double in_cluster_prob = 0.8;
  std::size_t min_user_interactions = 2;
  std::size_t max_user_interactions = 90;
  // user activity ~ min + (max-min) * U(0,1)^skew: most users light, a few
  // heavy, so k-core levels separate structurally distinct subsamples
  double activity_skew = 2.0;
  std::uint64_t seed = 1;
};

// Records carry strictly increasing per-user timestamps so the
// last-interaction split is well defined.
InteractionLog synth_interactions(const SynthConfig& config);

// Write a log as "user<TAB>item<TAB>rating<TAB>timestamp" lines.
void write_interaction_tsv(const InteractionLog& log,
                           const std::filesystem::path& path);

}  // namespace advrec
