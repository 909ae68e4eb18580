#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advrec/adversarial.hpp"
#include "advrec/dataset.hpp"
#include "advrec/metrics.hpp"
#include "advrec/model.hpp"

namespace advrec {

inline constexpr const char* kLibraryVersion = "advrec 0.1.0";

struct SweepSpec {
  std::vector<std::size_t> iterations = {1, 5, 10, 25, 50};
  std::vector<double> epsilons = {0.001, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0};
  std::vector<int> kcore_levels = {2, 3, 4, 6, 8};
};

// Everything a run needs, hydrated from a sectioned key=value file plus
// command-line overrides. Field names in the file mirror the struct fields.
struct ExperimentConfig {
  std::filesystem::path dataset_path;
  TsvSpec tsv;
  std::string dataset_id;  // defaults to the dataset file stem
  SplitMode split_mode = SplitMode::LastByTimestamp;
  TrainConfig train;
  std::optional<AprConfig> apr;
  std::vector<PerturbationConfig> attacks;  // one per configured strategy
  std::size_t eval_k = 10;
  SweepSpec sweep;
  std::filesystem::path out_dir;
  std::uint64_t seed = 42;
  std::size_t kcore_train_epochs = 200;

  std::uint64_t config_hash = 0;  // of the file text + applied overrides

  std::uint64_t split_seed() const;
  std::uint64_t eval_seed() const;  // random-recommender stream
};

// Parse the config file, then apply "section.key=value" overrides in order.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

// One line of the evaluation report CSV:
// dataset,model,strategy,epsilon,alpha,iterations,seed,k,pr,re,ndcg,efd,se,icov,rho
struct ReportRow {
  std::string dataset;
  std::string model;
  std::string strategy;  // "none" for unperturbed baselines
  double epsilon = 0.0;
  double alpha = 0.0;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  double pr = 0.0, re = 0.0, ndcg = 0.0, efd = 0.0, se = 0.0;
  std::size_t icov = 0;
  double rho = 0.0;

  static const char* header();
  std::string to_csv() const;
  static ReportRow from_csv(const std::string& line);
  std::string key() const;  // provenance key: all non-metric fields
};

void write_rows(const std::filesystem::path& path,
                const std::vector<ReportRow>& rows);
std::vector<ReportRow> read_rows(const std::filesystem::path& path);

struct ManifestArtifact {
  std::string path;  // relative to the run directory
  std::uint64_t checksum = 0;
  std::uint64_t bytes = 0;
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::string library_version = kLibraryVersion;
  std::vector<ManifestArtifact> artifacts;
  std::map<std::string, double> timings_sec;
  std::vector<std::string> notes;

  // Record (or re-record) a file under the run dir, hashing its bytes.
  void record(const std::filesystem::path& run_dir,
              const std::filesystem::path& file);
  void save(const std::filesystem::path& run_dir) const;
  static RunManifest load_or_create(const std::filesystem::path& run_dir,
                                    std::uint64_t config_hash);
  // True when every artifact exists and matches its checksum.
  bool verify(const std::filesystem::path& run_dir,
              std::string* first_bad = nullptr) const;
};

// Load, binarize, split; writes the split archive plus characteristics JSON.
void cmd_prepare(const ExperimentConfig& config);

// Train BPR-MF (with its mid-training checkpoint) and, when an APR section
// is configured, the adversarially regularized model warm-started from the
// checkpoint. Writes model files and per-epoch loss CSVs.
void cmd_train(const ExperimentConfig& config);

// Perturb a trained model across the iteration and epsilon sweeps, writing
// delta files and one evaluation row per sweep point, plus unperturbed and
// random-recommender baseline rows.
void cmd_attack(const ExperimentConfig& config,
                const std::filesystem::path& model_path);

// k-core subsample, re-split, retrain (scaled epochs), attack once per
// strategy, and relate the accuracy drop to density/size/shape.
void cmd_kcore_study(const ExperimentConfig& config);

// Merge every evaluation CSV in the run dir (deduplicated by provenance
// key), split plot-ready series per figure family, and aggregate iteration
// curves into normalized areas under the curve.
void cmd_report(const std::filesystem::path& run_dir);

}  // namespace advrec
