#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "advrec/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a clustered synthetic implicit-feedback dataset"};
  advrec::SynthConfig config;
  std::string out = "synthetic.tsv";
  app.add_option("--users", config.num_users, "number of users");
  app.add_option("--items", config.num_items, "catalog size");
  app.add_option("--clusters", config.num_clusters, "latent clusters");
  app.add_option("--in-cluster-prob", config.in_cluster_prob,
                 "probability an interaction stays in the user's cluster");
  app.add_option("--min-interactions", config.min_user_interactions,
                 "minimum interactions per user");
  app.add_option("--max-interactions", config.max_user_interactions,
                 "maximum interactions per user");
  app.add_option("--seed", config.seed, "generator seed");
  app.add_option("--out", out, "output TSV path");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    const auto log = advrec::synth_interactions(config);
    advrec::write_interaction_tsv(log, out);
    std::cout << "wrote " << log.records.size() << " interactions to " << out
              << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
