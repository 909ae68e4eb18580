#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace advrec {

// How to read a delimited interaction file. Default column order is
// user, item, [rating], [timestamp]; the *_column indices remap it, and
// rating/timestamp are optional (absent column index or short line).
struct TsvSpec {
  std::string delimiter = "\t";  // multi-char delimiters OK ("::" for MovieLens)
  int header_lines = 0;
  bool strict = false;  // strict: any malformed line is a parse error
  int user_column = 0;
  int item_column = 1;
  int rating_column = 2;     // -1: no rating column
  int timestamp_column = 3;  // -1: no timestamp column
};

struct Interaction {
  std::string user;
  std::string item;
  double rating = 1.0;
  std::optional<std::int64_t> timestamp;
};

// Raw parsed records, file order preserved. May contain duplicate
// (user, item) pairs; binarize() collapses them.
struct InteractionLog {
  std::vector<Interaction> records;
  std::size_t malformed_lines = 0;
};

enum class SplitMode : int { LastByTimestamp, RandomSeeded };
struct SplitPair;

// Binarized implicit-feedback store. Internal indices are assigned in
// first-appearance order and every user has at least one interaction.
// Immutable after construction; safe to share across threads read-only.
class ImplicitDataset {
 public:
  std::size_t num_users() const { return user_items_.size(); }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_interactions() const { return num_interactions_; }
  bool empty() const { return user_items_.empty(); }
  bool has_timestamps() const { return has_timestamps_; }

  // Sorted item indices for one user.
  const std::vector<std::uint32_t>& items_of(std::uint32_t u) const {
    return user_items_[u];
  }
  // Timestamps aligned with items_of(u); empty when has_timestamps() is false.
  const std::vector<std::int64_t>& timestamps_of(std::uint32_t u) const {
    return user_item_ts_[u];
  }

  bool contains(std::uint32_t u, std::uint32_t i) const;

  const std::string& user_id(std::uint32_t u) const { return user_ids_[u]; }
  const std::string& item_id(std::uint32_t i) const { return item_ids_[i]; }
  const std::unordered_map<std::string, std::uint32_t>& user_index() const {
    return user_index_;
  }
  const std::unordered_map<std::string, std::uint32_t>& item_index() const {
    return item_index_;
  }

  struct Builder;

 private:
  std::size_t num_items_ = 0;
  std::size_t num_interactions_ = 0;
  bool has_timestamps_ = false;
  std::vector<std::vector<std::uint32_t>> user_items_;
  std::vector<std::vector<std::int64_t>> user_item_ts_;
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::unordered_map<std::string, std::uint32_t> user_index_;
  std::unordered_map<std::string, std::uint32_t> item_index_;

  friend SplitPair leave_one_out_split(const ImplicitDataset&, SplitMode,
                                       std::uint64_t);
  friend SplitPair read_split(const std::filesystem::path&);
};

// Incremental construction helper; validates the dataset invariants once
// at build().
struct ImplicitDataset::Builder {
  // add() collapses duplicate (user, item) pairs keeping the max timestamp.
  void add(const std::string& user, const std::string& item,
           std::optional<std::int64_t> timestamp);
  ImplicitDataset build();

 private:
  std::vector<std::string> user_ids_, item_ids_;
  std::unordered_map<std::string, std::uint32_t> user_index_, item_index_;
  // per user: item -> timestamp (or missing)
  std::vector<std::unordered_map<std::uint32_t, std::optional<std::int64_t>>> pairs_;
  bool any_missing_ts_ = false;
  std::size_t num_records_ = 0;
};

// Held-out test item per user; kNotHeldOut for users that stay train-only.
inline constexpr std::int64_t kNotHeldOut = -1;
using HeldOutMap = std::vector<std::int64_t>;

inline std::size_t test_user_count(const HeldOutMap& m) {
  std::size_t n = 0;
  for (auto v : m) n += (v != kNotHeldOut);
  return n;
}

struct SplitPair {
  ImplicitDataset train;
  HeldOutMap test;  // indexed by internal user id, same id space as train
  SplitMode mode = SplitMode::LastByTimestamp;
  std::uint64_t seed = 0;
};

struct DatasetCharacteristics {
  double density = 0.0;  // |F| / (|U|*|I|)
  double size = 0.0;     // |U| * |I|
  double shape = 0.0;    // |U| / |I|
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_interactions = 0;
  std::optional<int> k_core_level;
};

InteractionLog load_interactions(const std::filesystem::path& path,
                                 const TsvSpec& spec);

ImplicitDataset binarize(const InteractionLog& log);

SplitPair leave_one_out_split(const ImplicitDataset& ds, SplitMode mode,
                              std::uint64_t seed);

// Iterates removal of users/items with degree < k until fixpoint. The result
// may be empty (check .empty()); id maps are rebuilt over the survivors.
ImplicitDataset k_core(const ImplicitDataset& ds, int k);

DatasetCharacteristics characteristics(const ImplicitDataset& ds,
                                       std::optional<int> k_core_level = {});
DatasetCharacteristics characteristics_from_counts(
    std::size_t num_users, std::size_t num_items, std::size_t num_interactions,
    std::optional<int> k_core_level = {});

// Canonical archive form: sorted "user_idx<TAB>item_idx<TAB>timestamp" lines
// (timestamp column omitted when absent). Reproducible byte-for-byte.
void write_canonical_tsv(const ImplicitDataset& ds,
                         const std::filesystem::path& path);

// Split archive: canonical train TSV + test map + a small JSON sidecar with
// the index-space sizes, so a split reloads exactly as written.
void write_split(const SplitPair& split, const std::filesystem::path& dir);
SplitPair read_split(const std::filesystem::path& dir);

}  // namespace advrec
