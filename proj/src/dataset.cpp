#include "advrec/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "advrec/errors.hpp"
#include "advrec/rng.hpp"

namespace advrec {

namespace {

std::vector<std::string> split_fields(const std::string& line,
                                      const std::string& delim) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(delim, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + delim.size();
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && !s.empty();
}

bool parse_i64(const std::string& s, std::int64_t& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && !s.empty();
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

InteractionLog load_interactions(const std::filesystem::path& path,
                                 const TsvSpec& spec) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interaction file: " + path.string());

  InteractionLog log;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t skip = spec.header_lines > 0 ? std::size_t(spec.header_lines) : 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no <= skip) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;

    auto fields = split_fields(line, spec.delimiter);
    auto field_at = [&fields](int col) -> const std::string* {
      if (col < 0 || std::size_t(col) >= fields.size()) return nullptr;
      return fields[std::size_t(col)].empty() ? nullptr : &fields[std::size_t(col)];
    };
    const std::string* user = field_at(spec.user_column);
    const std::string* item = field_at(spec.item_column);
    bool ok = user && item;
    Interaction rec;
    if (ok) {
      rec.user = *user;
      rec.item = *item;
      if (const std::string* rating = field_at(spec.rating_column))
        ok = parse_double(*rating, rec.rating);
      if (ok) {
        if (const std::string* ts_field = field_at(spec.timestamp_column)) {
          std::int64_t ts = 0;
          ok = parse_i64(*ts_field, ts);
          if (ok) rec.timestamp = ts;
        }
      }
    }
    if (!ok) {
      if (spec.strict)
        throw ParseError("malformed line " + std::to_string(line_no) + " in " +
                         path.string() + ": " + line);
      ++log.malformed_lines;
      continue;
    }
    log.records.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return log;
}

void ImplicitDataset::Builder::add(const std::string& user,
                                   const std::string& item,
                                   std::optional<std::int64_t> timestamp) {
  auto [uit, uinserted] =
      user_index_.try_emplace(user, static_cast<std::uint32_t>(user_ids_.size()));
  if (uinserted) {
    user_ids_.push_back(user);
    pairs_.emplace_back();
  }
  auto [iit, iinserted] =
      item_index_.try_emplace(item, static_cast<std::uint32_t>(item_ids_.size()));
  if (iinserted) item_ids_.push_back(item);

  if (!timestamp.has_value()) any_missing_ts_ = true;
  auto& items = pairs_[uit->second];
  auto [pit, pinserted] = items.try_emplace(iit->second, timestamp);
  if (!pinserted) {
    // duplicate pair: keep the max timestamp
    if (timestamp.has_value() &&
        (!pit->second.has_value() || *timestamp > *pit->second))
      pit->second = timestamp;
  }
  ++num_records_;
}

ImplicitDataset ImplicitDataset::Builder::build() {
  ImplicitDataset ds;
  ds.user_ids_ = std::move(user_ids_);
  ds.item_ids_ = std::move(item_ids_);
  ds.user_index_ = std::move(user_index_);
  ds.item_index_ = std::move(item_index_);
  ds.num_items_ = ds.item_ids_.size();
  ds.has_timestamps_ = !any_missing_ts_ && num_records_ > 0;

  ds.user_items_.resize(pairs_.size());
  ds.user_item_ts_.resize(pairs_.size());
  std::size_t total = 0;
  for (std::size_t u = 0; u < pairs_.size(); ++u) {
    auto& items = ds.user_items_[u];
    items.reserve(pairs_[u].size());
    for (const auto& [i, ts] : pairs_[u]) items.push_back(i);
    std::sort(items.begin(), items.end());
    if (ds.has_timestamps_) {
      auto& tss = ds.user_item_ts_[u];
      tss.reserve(items.size());
      for (std::uint32_t i : items) tss.push_back(*pairs_[u].at(i));
    }
    total += items.size();
  }
  ds.num_interactions_ = total;
  return ds;
}

bool ImplicitDataset::contains(std::uint32_t u, std::uint32_t i) const {
  const auto& items = user_items_[u];
  return std::binary_search(items.begin(), items.end(), i);
}

ImplicitDataset binarize(const InteractionLog& log) {
  if (log.records.empty())
    throw ConfigError("binarize: interaction log is empty");
  ImplicitDataset::Builder b;
  for (const auto& rec : log.records) b.add(rec.user, rec.item, rec.timestamp);
  return b.build();
}

SplitPair leave_one_out_split(const ImplicitDataset& ds, SplitMode mode,
                              std::uint64_t seed) {
  if (mode == SplitMode::LastByTimestamp && !ds.has_timestamps())
    throw ConfigError(
        "leave_one_out_split: LastByTimestamp requires timestamps");

  const std::size_t nu = ds.num_users();
  HeldOutMap test(nu, kNotHeldOut);

  ImplicitDataset train = ds;  // copy, then carve out held-out items
  for (std::uint32_t u = 0; u < nu; ++u) {
    const auto& items = ds.items_of(u);
    if (items.size() < 2) continue;  // single-interaction users stay train-only

    std::size_t held = 0;
    if (mode == SplitMode::LastByTimestamp) {
      const auto& tss = ds.timestamps_of(u);
      // max timestamp; ties broken by greatest internal item index, which is
      // the later position since items are sorted ascending
      for (std::size_t p = 1; p < items.size(); ++p)
        if (tss[p] >= tss[held]) held = p;
    } else {
      Rng rng(mix_seed(seed, u));
      held = static_cast<std::size_t>(rng.below(items.size()));
    }

    test[u] = items[held];
    auto& titems = train.user_items_[u];
    titems.erase(titems.begin() + static_cast<std::ptrdiff_t>(held));
    if (train.has_timestamps_) {
      auto& tts = train.user_item_ts_[u];
      tts.erase(tts.begin() + static_cast<std::ptrdiff_t>(held));
    }
    --train.num_interactions_;
  }

  SplitPair out;
  out.train = std::move(train);
  out.test = std::move(test);
  out.mode = mode;
  out.seed = seed;
  return out;
}

ImplicitDataset k_core(const ImplicitDataset& ds, int k) {
  if (k < 1) throw ConfigError("k_core: k must be >= 1");
  const std::size_t nu = ds.num_users();
  const std::size_t ni = ds.num_items();
  std::vector<bool> keep_user(nu, true), keep_item(ni, true);

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::size_t> user_deg(nu, 0), item_deg(ni, 0);
    for (std::uint32_t u = 0; u < nu; ++u) {
      if (!keep_user[u]) continue;
      for (std::uint32_t i : ds.items_of(u)) {
        if (!keep_item[i]) continue;
        ++user_deg[u];
        ++item_deg[i];
      }
    }
    for (std::uint32_t u = 0; u < nu; ++u)
      if (keep_user[u] && user_deg[u] < static_cast<std::size_t>(k)) {
        keep_user[u] = false;
        changed = true;
      }
    for (std::uint32_t i = 0; i < ni; ++i)
      if (keep_item[i] && item_deg[i] < static_cast<std::size_t>(k)) {
        keep_item[i] = false;
        changed = true;
      }
  }

  ImplicitDataset::Builder b;
  for (std::uint32_t u = 0; u < nu; ++u) {
    if (!keep_user[u]) continue;
    const auto& items = ds.items_of(u);
    for (std::size_t p = 0; p < items.size(); ++p) {
      if (!keep_item[items[p]]) continue;
      std::optional<std::int64_t> ts;
      if (ds.has_timestamps()) ts = ds.timestamps_of(u)[p];
      b.add(ds.user_id(u), ds.item_id(items[p]), ts);
    }
  }
  return b.build();
}

DatasetCharacteristics characteristics_from_counts(
    std::size_t num_users, std::size_t num_items, std::size_t num_interactions,
    std::optional<int> k_core_level) {
  if (num_users == 0 || num_items == 0)
    throw std::domain_error("characteristics: empty dataset");
  DatasetCharacteristics c;
  c.num_users = num_users;
  c.num_items = num_items;
  c.num_interactions = num_interactions;
  c.size = static_cast<double>(num_users) * static_cast<double>(num_items);
  c.density = static_cast<double>(num_interactions) / c.size;
  c.shape = static_cast<double>(num_users) / static_cast<double>(num_items);
  c.k_core_level = k_core_level;
  return c;
}

DatasetCharacteristics characteristics(const ImplicitDataset& ds,
                                       std::optional<int> k_core_level) {
  return characteristics_from_counts(ds.num_users(), ds.num_items(),
                                     ds.num_interactions(), k_core_level);
}

void write_canonical_tsv(const ImplicitDataset& ds,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::uint32_t u = 0; u < ds.num_users(); ++u) {
    const auto& items = ds.items_of(u);
    for (std::size_t p = 0; p < items.size(); ++p) {
      out << u << '\t' << items[p];
      if (ds.has_timestamps()) out << '\t' << ds.timestamps_of(u)[p];
      out << '\n';
    }
  }
  if (!out) throw IoError("write failure on " + path.string());
}

void write_split(const SplitPair& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_canonical_tsv(split.train, dir / "train.tsv");

  std::ofstream test(dir / "test.tsv", std::ios::trunc);
  if (!test) throw IoError("cannot write " + (dir / "test.tsv").string());
  for (std::uint32_t u = 0; u < split.test.size(); ++u)
    if (split.test[u] != kNotHeldOut) test << u << '\t' << split.test[u] << '\n';

  nlohmann::json meta;
  meta["num_users"] = split.train.num_users();
  meta["num_items"] = split.train.num_items();
  meta["has_timestamps"] = split.train.has_timestamps();
  meta["mode"] =
      split.mode == SplitMode::LastByTimestamp ? "last_by_timestamp" : "random";
  meta["seed"] = split.seed;
  meta["user_ids"] = nlohmann::json::array();
  meta["item_ids"] = nlohmann::json::array();
  for (std::uint32_t u = 0; u < split.train.num_users(); ++u)
    meta["user_ids"].push_back(split.train.user_id(u));
  for (std::uint32_t i = 0; i < split.train.num_items(); ++i)
    meta["item_ids"].push_back(split.train.item_id(i));
  std::ofstream ms(dir / "split.json", std::ios::trunc);
  ms << meta.dump(2) << '\n';
  if (!ms) throw IoError("cannot write " + (dir / "split.json").string());
}

SplitPair read_split(const std::filesystem::path& dir) {
  std::ifstream ms(dir / "split.json");
  if (!ms) throw IoError("cannot open " + (dir / "split.json").string());
  nlohmann::json meta = nlohmann::json::parse(ms);

  const std::size_t nu = meta.at("num_users").get<std::size_t>();
  const std::size_t ni = meta.at("num_items").get<std::size_t>();
  const bool has_ts = meta.at("has_timestamps").get<bool>();
  std::vector<std::string> user_ids = meta.at("user_ids");
  std::vector<std::string> item_ids = meta.at("item_ids");
  if (user_ids.size() != nu || item_ids.size() != ni)
    throw FormatError("split.json: id map sizes disagree with counts");

  std::ifstream tr(dir / "train.tsv");
  if (!tr) throw IoError("cannot open " + (dir / "train.tsv").string());
  // Rebuilt directly from indices: the archive already fixes the id space,
  // so first-appearance assignment must not run again here.
  std::vector<std::vector<std::uint32_t>> items(nu);
  std::vector<std::vector<std::int64_t>> tss(nu);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(tr, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::uint64_t u = 0, i = 0;
    std::int64_t ts = 0;
    ss >> u >> i;
    if (!ss)
      throw ParseError("train.tsv: malformed line " + std::to_string(line_no));
    if (u >= nu || i >= ni)
      throw ParseError("train.tsv: index out of range at line " +
                       std::to_string(line_no));
    if (!items[u].empty() && items[u].back() >= i)
      throw ParseError("train.tsv: items not strictly ascending at line " +
                       std::to_string(line_no));
    items[u].push_back(static_cast<std::uint32_t>(i));
    if (has_ts) {
      ss >> ts;
      if (!ss)
        throw ParseError("train.tsv: missing timestamp at line " +
                         std::to_string(line_no));
      tss[u].push_back(ts);
    }
  }

  SplitPair out;
  ImplicitDataset& ds = out.train;
  ds.num_items_ = ni;
  ds.num_interactions_ = 0;
  ds.has_timestamps_ = has_ts;
  ds.user_ids_ = std::move(user_ids);
  ds.item_ids_ = std::move(item_ids);
  for (std::uint32_t u = 0; u < nu; ++u) ds.user_index_[ds.user_ids_[u]] = u;
  for (std::uint32_t i = 0; i < ni; ++i) ds.item_index_[ds.item_ids_[i]] = i;
  ds.user_items_ = std::move(items);
  ds.user_item_ts_ = std::move(tss);
  for (auto& v : ds.user_items_) ds.num_interactions_ += v.size();

  out.test.assign(nu, kNotHeldOut);
  std::ifstream te(dir / "test.tsv");
  if (!te) throw IoError("cannot open " + (dir / "test.tsv").string());
  while (std::getline(te, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::uint64_t u = 0, i = 0;
    ss >> u >> i;
    if (!ss || u >= nu || i >= ni) throw ParseError("test.tsv: malformed line");
    out.test[u] = static_cast<std::int64_t>(i);
  }
  out.mode = meta.at("mode").get<std::string>() == "random"
                 ? SplitMode::RandomSeeded
                 : SplitMode::LastByTimestamp;
  out.seed = meta.at("seed").get<std::uint64_t>();
  return out;
}

}  // namespace advrec
