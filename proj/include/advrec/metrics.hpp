#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advrec/dataset.hpp"
#include "advrec/model.hpp"

namespace advrec {

// Per-user ranked top-K list, already filtered of the user's train profile.
struct Slate {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> items;
};

struct RecommendationSlates {
  std::vector<Slate> slates;  // ascending user order
  std::size_t k = 0;
};

struct Provenance {
  std::string dataset_id;
  std::string model_id;
  std::string perturbation_id;
  std::uint64_t seed = 0;
};

struct EvalReport {
  std::size_t k = 0;
  double pr = 0.0;
  double re = 0.0;
  double ndcg = 0.0;
  double efd = 0.0;
  double se = 0.0;
  std::size_t icov = 0;
  std::size_t num_users_evaluated = 0;
  Provenance provenance;
};

struct DegradationPoint {
  double x = 0.0;    // density | size | shape value
  double rho = 0.0;  // percentage
};

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points_used = 0;
};

// All means below are over the users holding a test item. Under the
// one-held-out protocol each user has a single relevant item, so per-user
// hits are 0/1 and the ideal DCG is 1.

double precision_at_k(const RecommendationSlates& slates,
                      const HeldOutMap& test);
double recall_at_k(const RecommendationSlates& slates, const HeldOutMap& test);
double ndcg_at_k(const RecommendationSlates& slates, const HeldOutMap& test);

// Novelty: mean over users of (1/K) * sum over hit ranks of -log2 p(item),
// with p(i) = max(train popularity of i, 1) / |U|.
double efd_at_k(const RecommendationSlates& slates, const HeldOutMap& test,
                const ImplicitDataset& train);

// Diversity: entropy of the item exposure distribution across all slates,
// p(i) = occurrences / (num_slates * K).
double shannon_entropy_at_k(const RecommendationSlates& slates);

// Distinct items recommended to anyone.
std::size_t item_coverage_at_k(const RecommendationSlates& slates);

// Relative percentage accuracy drop; requires ndcg_init > 0.
double rho(double ndcg_init, double ndcg_after);

// Ordinary least squares over (x, y) pairs; needs >= 2 distinct x.
LineFit fit_line(std::span<const DegradationPoint> points);
double two_point_slope(const DegradationPoint& a, const DegradationPoint& b);

// Slates for every test user via top-K scoring with train-profile exclusion.
RecommendationSlates build_slates(const ModelParams& params,
                                  const ImplicitDataset& train,
                                  const HeldOutMap& test, std::size_t k);

// Seeded random slates over the same exclusion rule (baseline recommender).
RecommendationSlates build_random_slates(const ImplicitDataset& train,
                                         const HeldOutMap& test, std::size_t k,
                                         std::uint64_t seed);

EvalReport evaluate_slates(const RecommendationSlates& slates,
                           const ImplicitDataset& train, const HeldOutMap& test,
                           Provenance provenance = {});

// build_slates + evaluate_slates.
EvalReport evaluate(const ModelParams& params, const ImplicitDataset& train,
                    const HeldOutMap& test, std::size_t k,
                    Provenance provenance = {});

}  // namespace advrec
