#include "advrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "advrec/errors.hpp"
#include "advrec/rng.hpp"

namespace advrec {

InteractionLog synth_interactions(const SynthConfig& config) {
  if (config.num_users == 0 || config.num_items == 0 ||
      config.num_clusters == 0)
    throw ConfigError("synth: users, items and clusters must be > 0");
  if (config.min_user_interactions < 2 ||
      config.max_user_interactions < config.min_user_interactions)
    throw ConfigError("synth: interaction bounds invalid (need min >= 2)");

  Rng rng(config.seed);

  // Zipf-weighted catalog over a seeded rank permutation; clusters are
  // striped across the ranks so each one owns a popular head and a long
  // tail. The tail keeps low item degrees, which is what gives k-core
  // subsampling distinct levels to find.
  std::vector<std::uint32_t> by_rank(config.num_items);
  for (std::uint32_t i = 0; i < config.num_items; ++i) by_rank[i] = i;
  rng.shuffle(by_rank);
  std::vector<double> weight(config.num_items);
  for (std::size_t rank = 0; rank < by_rank.size(); ++rank)
    weight[by_rank[rank]] = 1.0 / std::pow(double(rank + 1), 1.1);

  std::vector<std::vector<std::uint32_t>> cluster_items(config.num_clusters);
  for (std::size_t rank = 0; rank < by_rank.size(); ++rank)
    cluster_items[rank % config.num_clusters].push_back(by_rank[rank]);

  auto make_cdf = [&](const std::vector<std::uint32_t>& items) {
    std::vector<double> cdf;
    double acc = 0.0;
    for (std::uint32_t i : items) {
      acc += weight[i];
      cdf.push_back(acc);
    }
    return cdf;
  };
  std::vector<std::vector<double>> cluster_cdf;
  for (const auto& items : cluster_items) cluster_cdf.push_back(make_cdf(items));
  std::vector<std::uint32_t> all_items(config.num_items);
  for (std::uint32_t i = 0; i < config.num_items; ++i) all_items[i] = i;
  const std::vector<double> global_cdf = make_cdf(all_items);

  auto draw = [&](const std::vector<std::uint32_t>& items,
                  const std::vector<double>& cdf) {
    const double v = rng.uniform(0.0, cdf.back());
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), v);
    return items[std::size_t(it - cdf.begin())];
  };

  InteractionLog log;
  for (std::uint32_t u = 0; u < config.num_users; ++u) {
    const double span =
        double(config.max_user_interactions - config.min_user_interactions);
    const std::size_t want =
        config.min_user_interactions +
        std::size_t(std::floor(
            std::pow(rng.uniform(), config.activity_skew) * (span + 1.0)));
    // taste breadth grows with activity (heavy users stay in-taste instead
    // of spilling into the tail once one cluster is exhausted), while light
    // profiles carry more exploration noise; sparse users are the weakly
    // modeled, attack-fragile population, as in real interaction data
    const double activity = span > 0 ? double(want - config.min_user_interactions) / span : 1.0;
    const std::size_t breadth = std::min<std::size_t>(
        config.num_clusters, 1 + std::size_t(std::floor(activity * 2.5)));
    const double p_in =
        config.in_cluster_prob * (0.5 + 0.5 * std::sqrt(activity));
    std::vector<std::size_t> prefs;
    while (prefs.size() < breadth) {
      const std::size_t c = std::size_t(rng.below(config.num_clusters));
      if (std::find(prefs.begin(), prefs.end(), c) == prefs.end())
        prefs.push_back(c);
    }
    std::set<std::uint32_t> chosen;
    std::size_t attempts = 0;
    while (chosen.size() < want && attempts < want * 40) {
      ++attempts;
      const std::size_t c = prefs[std::size_t(rng.below(prefs.size()))];
      const std::uint32_t item = rng.uniform() < p_in
                                     ? draw(cluster_items[c], cluster_cdf[c])
                                     : draw(all_items, global_cdf);
      chosen.insert(item);
    }
    std::vector<std::uint32_t> order(chosen.begin(), chosen.end());
    rng.shuffle(order);  // consumption order, not index order
    std::int64_t t = std::int64_t(u) * 100000;
    for (std::uint32_t item : order) {
      log.records.push_back({"u" + std::to_string(u), "i" + std::to_string(item),
                             1.0, t});
      t += 1 + std::int64_t(rng.below(50));
    }
  }
  return log;
}

void write_interaction_tsv(const InteractionLog& log,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& rec : log.records) {
    out << rec.user << '\t' << rec.item << '\t' << rec.rating;
    if (rec.timestamp) out << '\t' << *rec.timestamp;
    out << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace advrec
