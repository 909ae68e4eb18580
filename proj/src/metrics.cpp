#include "advrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advrec/errors.hpp"

namespace advrec {

namespace {

void require_nonempty(const RecommendationSlates& slates) {
  if (slates.slates.empty())
    throw std::domain_error("metrics: no slates to evaluate");
}

// Rank (1-based) of the user's held-out item in their slate, 0 if absent.
std::size_t hit_rank(const Slate& s, const HeldOutMap& test) {
  const std::int64_t target = test[s.user];
  if (target == kNotHeldOut) return 0;
  for (std::size_t r = 0; r < s.items.size(); ++r)
    if (s.items[r] == static_cast<std::uint32_t>(target)) return r + 1;
  return 0;
}

}  // namespace

double precision_at_k(const RecommendationSlates& slates,
                      const HeldOutMap& test) {
  require_nonempty(slates);
  double acc = 0.0;
  for (const Slate& s : slates.slates)
    acc += (hit_rank(s, test) > 0 ? 1.0 : 0.0) / double(slates.k);
  return acc / double(slates.slates.size());
}

double recall_at_k(const RecommendationSlates& slates, const HeldOutMap& test) {
  require_nonempty(slates);
  // one relevant item per user, so per-user recall is the hit indicator
  double acc = 0.0;
  for (const Slate& s : slates.slates) acc += hit_rank(s, test) > 0 ? 1.0 : 0.0;
  return acc / double(slates.slates.size());
}

double ndcg_at_k(const RecommendationSlates& slates, const HeldOutMap& test) {
  require_nonempty(slates);
  double acc = 0.0;
  for (const Slate& s : slates.slates) {
    const std::size_t r = hit_rank(s, test);
    if (r > 0) acc += 1.0 / std::log2(double(r) + 1.0);  // ideal DCG is 1
  }
  return acc / double(slates.slates.size());
}

double efd_at_k(const RecommendationSlates& slates, const HeldOutMap& test,
                const ImplicitDataset& train) {
  require_nonempty(slates);
  std::vector<std::size_t> popularity(train.num_items(), 0);
  for (std::uint32_t u = 0; u < train.num_users(); ++u)
    for (std::uint32_t i : train.items_of(u)) ++popularity[i];

  const double num_users = double(train.num_users());
  double acc = 0.0;
  for (const Slate& s : slates.slates) {
    const std::size_t r = hit_rank(s, test);
    if (r == 0) continue;
    const std::uint32_t item = s.items[r - 1];
    if (item >= popularity.size())
      throw std::out_of_range("efd: slate item outside the train id space");
    const double p = double(std::max<std::size_t>(popularity[item], 1)) /
                     num_users;  // floor keeps cold items finite
    acc += -std::log2(p) / double(slates.k);
  }
  return acc / double(slates.slates.size());
}

double shannon_entropy_at_k(const RecommendationSlates& slates) {
  require_nonempty(slates);
  std::vector<std::pair<std::uint32_t, std::size_t>> counts;
  {
    std::vector<std::uint32_t> all;
    for (const Slate& s : slates.slates)
      all.insert(all.end(), s.items.begin(), s.items.end());
    std::sort(all.begin(), all.end());
    for (std::size_t n = 0; n < all.size();) {
      std::size_t m = n;
      while (m < all.size() && all[m] == all[n]) ++m;
      counts.emplace_back(all[n], m - n);
      n = m;
    }
  }
  const double total = double(slates.slates.size()) * double(slates.k);
  double se = 0.0;
  for (const auto& [item, c] : counts) {
    const double p = double(c) / total;
    se -= p * std::log2(p);
  }
  return se;
}

std::size_t item_coverage_at_k(const RecommendationSlates& slates) {
  std::vector<std::uint32_t> all;
  for (const Slate& s : slates.slates)
    all.insert(all.end(), s.items.begin(), s.items.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all.size();
}

double rho(double ndcg_init, double ndcg_after) {
  if (ndcg_init <= 0.0)
    throw std::domain_error("rho: undefined for ndcg_init <= 0");
  return (ndcg_init - ndcg_after) / ndcg_init * 100.0;
}

LineFit fit_line(std::span<const DegradationPoint> points) {
  double min_x = 0.0, max_x = 0.0;
  for (std::size_t n = 0; n < points.size(); ++n) {
    min_x = n == 0 ? points[n].x : std::min(min_x, points[n].x);
    max_x = n == 0 ? points[n].x : std::max(max_x, points[n].x);
  }
  if (points.size() < 2 || min_x == max_x)
    throw std::domain_error("fit_line: need >= 2 distinct x values");

  const double n = double(points.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& p : points) {
    sx += p.x;
    sy += p.rho;
    sxx += p.x * p.x;
    sxy += p.x * p.rho;
  }
  LineFit fit;
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.points_used = points.size();
  return fit;
}

double two_point_slope(const DegradationPoint& a, const DegradationPoint& b) {
  if (a.x == b.x) throw std::domain_error("two_point_slope: equal x values");
  return (b.rho - a.rho) / (b.x - a.x);
}

RecommendationSlates build_slates(const ModelParams& params,
                                  const ImplicitDataset& train,
                                  const HeldOutMap& test, std::size_t k) {
  RecommendationSlates out;
  out.k = k;
  for (std::uint32_t u = 0; u < test.size(); ++u) {
    if (test[u] == kNotHeldOut) continue;
    const auto& profile = train.items_of(u);
    TopK top = recommend_topk(params, u, k, profile);
    out.slates.push_back({u, std::move(top.items)});
  }
  return out;
}

RecommendationSlates build_random_slates(const ImplicitDataset& train,
                                         const HeldOutMap& test, std::size_t k,
                                         std::uint64_t seed) {
  RecommendationSlates out;
  out.k = k;
  for (std::uint32_t u = 0; u < test.size(); ++u) {
    if (test[u] == kNotHeldOut) continue;
    const auto& profile = train.items_of(u);
    TopK top = random_recommendation(train.num_items(), u, k, profile, seed);
    out.slates.push_back({u, std::move(top.items)});
  }
  return out;
}

EvalReport evaluate_slates(const RecommendationSlates& slates,
                           const ImplicitDataset& train, const HeldOutMap& test,
                           Provenance provenance) {
  require_nonempty(slates);
  EvalReport r;
  r.k = slates.k;
  r.pr = precision_at_k(slates, test);
  r.re = recall_at_k(slates, test);
  r.ndcg = ndcg_at_k(slates, test);
  r.efd = efd_at_k(slates, test, train);
  r.se = shannon_entropy_at_k(slates);
  r.icov = item_coverage_at_k(slates);
  r.num_users_evaluated = slates.slates.size();
  r.provenance = std::move(provenance);
  return r;
}

EvalReport evaluate(const ModelParams& params, const ImplicitDataset& train,
                    const HeldOutMap& test, std::size_t k,
                    Provenance provenance) {
  return evaluate_slates(build_slates(params, train, test, k), train, test,
                         std::move(provenance));
}

}  // namespace advrec
