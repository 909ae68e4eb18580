#include "advrec/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "advrec/errors.hpp"
#include "advrec/rng.hpp"
#include "advrec/serialize.hpp"

namespace advrec {

namespace {

constexpr std::uint64_t kSaltSplit = 0x53504c49;
constexpr std::uint64_t kSaltTrain = 0x5452414e;
constexpr std::uint64_t kSaltAttack = 0x41545441;
constexpr std::uint64_t kSaltEval = 0x4556414c;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// sectioned key=value config text

using ConfigMap = std::map<std::string, std::map<std::string, std::string>>;

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

ConfigMap parse_config_text(const std::string& text,
                            const std::string& origin) {
  ConfigMap map;
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ParseError(origin + ": bad section header at line " +
                         std::to_string(line_no));
      section = trim(t.substr(1, t.size() - 2));
      map[section];
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(origin + ": expected key=value at line " +
                       std::to_string(line_no));
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParseError(origin + ": empty key at line " + std::to_string(line_no));
    map[section][key] = value;
  }
  return map;
}

double to_double(const std::string& v, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: " + what + ": not a number: " + v);
  }
}

std::uint64_t to_u64(const std::string& v, const std::string& what) {
  try {
    std::size_t pos = 0;
    const std::uint64_t n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config: " + what + ": not an integer: " + v);
  }
}

bool to_bool(const std::string& v, const std::string& what) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + what + ": not a boolean: " + v);
}

std::vector<std::string> split_csv(const std::string& v) {
  std::vector<std::string> out;
  std::istringstream in(v);
  std::string field;
  while (std::getline(in, field, ',')) {
    field = trim(field);
    if (!field.empty()) out.push_back(field);
  }
  return out;
}

const std::set<std::string> kKnownKeys = {
    "dataset.path", "dataset.id", "dataset.delimiter", "dataset.header_lines",
    "dataset.strict", "dataset.user_column", "dataset.item_column",
    "dataset.rating_column", "dataset.timestamp_column",
    "split.mode",
    "train.epochs", "train.batch_size", "train.lr", "train.d", "train.seed",
    "train.l2_reg", "train.checkpoint_epochs",
    "apr.lambda", "apr.epsilon_adv", "apr.apr_epochs", "apr.warm_start",
    "attack.strategies", "attack.epsilon", "attack.alpha", "attack.iterations",
    "attack.loss_batch", "attack.seed", "attack.norm_scope", "attack.targets",
    "sweep.iterations", "sweep.epsilons", "sweep.kcore",
    "eval.k",
    "output.dir",
    "kcore.train_epochs",
    "global.seed",
};

ExperimentConfig materialize(const ConfigMap& map, std::uint64_t hash) {
  for (const auto& [section, kv] : map)
    for (const auto& [key, value] : kv)
      if (!kKnownKeys.count(section + "." + key))
        throw ConfigError("config: unknown key " + section + "." + key);

  auto get = [&map](const std::string& section,
                    const std::string& key) -> const std::string* {
    auto sit = map.find(section);
    if (sit == map.end()) return nullptr;
    auto kit = sit->second.find(key);
    return kit == sit->second.end() ? nullptr : &kit->second;
  };

  ExperimentConfig c;
  c.config_hash = hash;

  if (const auto* v = get("global", "seed")) c.seed = to_u64(*v, "global.seed");

  if (const auto* v = get("dataset", "path")) c.dataset_path = *v;
  if (const auto* v = get("dataset", "id")) c.dataset_id = *v;
  if (c.dataset_id.empty() && !c.dataset_path.empty())
    c.dataset_id = c.dataset_path.stem().string();
  if (const auto* v = get("dataset", "delimiter"))
    c.tsv.delimiter = *v == "tab" ? "\t" : *v;
  if (const auto* v = get("dataset", "header_lines"))
    c.tsv.header_lines = int(to_u64(*v, "dataset.header_lines"));
  if (const auto* v = get("dataset", "strict"))
    c.tsv.strict = to_bool(*v, "dataset.strict");
  auto column = [&](const char* key, int& slot) {
    if (const auto* v = get("dataset", key))
      slot = *v == "none" ? -1 : int(to_u64(*v, std::string("dataset.") + key));
  };
  column("user_column", c.tsv.user_column);
  column("item_column", c.tsv.item_column);
  column("rating_column", c.tsv.rating_column);
  column("timestamp_column", c.tsv.timestamp_column);

  if (const auto* v = get("split", "mode")) {
    if (*v == "last_by_timestamp")
      c.split_mode = SplitMode::LastByTimestamp;
    else if (*v == "random")
      c.split_mode = SplitMode::RandomSeeded;
    else
      throw ConfigError("config: split.mode must be last_by_timestamp|random");
  }

  c.train.seed = mix_seed(c.seed, kSaltTrain);
  if (const auto* v = get("train", "epochs"))
    c.train.epochs = to_u64(*v, "train.epochs");
  if (const auto* v = get("train", "batch_size"))
    c.train.batch_size = to_u64(*v, "train.batch_size");
  if (const auto* v = get("train", "lr")) c.train.lr = to_double(*v, "train.lr");
  if (const auto* v = get("train", "d")) c.train.d = to_u64(*v, "train.d");
  if (const auto* v = get("train", "seed"))
    c.train.seed = to_u64(*v, "train.seed");
  if (const auto* v = get("train", "l2_reg"))
    c.train.l2_reg = to_double(*v, "train.l2_reg");
  if (const auto* v = get("train", "checkpoint_epochs")) {
    c.train.checkpoint_epochs.clear();
    for (const auto& f : split_csv(*v))
      c.train.checkpoint_epochs.insert(to_u64(f, "train.checkpoint_epochs"));
  }

  if (map.count("apr")) {
    AprConfig apr;
    if (const auto* v = get("apr", "lambda"))
      apr.lambda = to_double(*v, "apr.lambda");
    if (const auto* v = get("apr", "epsilon_adv"))
      apr.epsilon_adv = to_double(*v, "apr.epsilon_adv");
    if (const auto* v = get("apr", "apr_epochs"))
      apr.apr_epochs = to_u64(*v, "apr.apr_epochs");
    if (const auto* v = get("apr", "warm_start"))
      apr.warm_start_epoch = to_u64(*v, "apr.warm_start");
    c.apr = apr;
  }

  std::vector<std::string> strategies = {"fgsm", "bim", "pgd"};
  if (const auto* v = get("attack", "strategies")) strategies = split_csv(*v);
  double eps = 0.5;
  if (const auto* v = get("attack", "epsilon"))
    eps = to_double(*v, "attack.epsilon");
  std::size_t iters = 25;
  if (const auto* v = get("attack", "iterations"))
    iters = to_u64(*v, "attack.iterations");
  std::uint64_t attack_seed = mix_seed(c.seed, kSaltAttack);
  if (const auto* v = get("attack", "seed"))
    attack_seed = to_u64(*v, "attack.seed");
  for (const auto& name : strategies) {
    PerturbationConfig pc = PerturbationConfig::make(
        strategy_from_name(name), eps, attack_seed, iters);
    if (const auto* v = get("attack", "alpha"))
      pc.alpha = to_double(*v, "attack.alpha");
    if (const auto* v = get("attack", "loss_batch")) {
      if (*v == "all") {
        pc.loss_batch.kind = LossBatch::Kind::AllTriples;
      } else if (v->rfind("sampled:", 0) == 0) {
        pc.loss_batch.kind = LossBatch::Kind::Sampled;
        pc.loss_batch.count = to_u64(v->substr(8), "attack.loss_batch count");
        pc.loss_batch.seed = attack_seed;
      } else {
        throw ConfigError("config: attack.loss_batch must be all|sampled:N");
      }
    }
    if (const auto* v = get("attack", "norm_scope")) {
      if (*v == "per_row")
        pc.norm_scope = NormScope::PerRow;
      else if (*v == "global")
        pc.norm_scope = NormScope::Global;
      else
        throw ConfigError("config: attack.norm_scope must be per_row|global");
    }
    if (const auto* v = get("attack", "targets")) {
      if (*v == "p")
        pc.targets = TargetSet::P;
      else if (*v == "q")
        pc.targets = TargetSet::Q;
      else if (*v == "both")
        pc.targets = TargetSet::Both;
      else
        throw ConfigError("config: attack.targets must be p|q|both");
    }
    pc.validate();
    c.attacks.push_back(pc);
  }

  if (const auto* v = get("sweep", "iterations")) {
    c.sweep.iterations.clear();
    for (const auto& f : split_csv(*v))
      c.sweep.iterations.push_back(to_u64(f, "sweep.iterations"));
  }
  if (const auto* v = get("sweep", "epsilons")) {
    c.sweep.epsilons.clear();
    for (const auto& f : split_csv(*v))
      c.sweep.epsilons.push_back(to_double(f, "sweep.epsilons"));
  }
  if (const auto* v = get("sweep", "kcore")) {
    c.sweep.kcore_levels.clear();
    for (const auto& f : split_csv(*v))
      c.sweep.kcore_levels.push_back(int(to_u64(f, "sweep.kcore")));
  }

  if (const auto* v = get("eval", "k")) c.eval_k = to_u64(*v, "eval.k");
  if (const auto* v = get("output", "dir")) c.out_dir = *v;
  if (const auto* v = get("kcore", "train_epochs"))
    c.kcore_train_epochs = to_u64(*v, "kcore.train_epochs");

  if (c.eval_k < 1) throw ConfigError("config: eval.k must be >= 1");
  return c;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

ReportRow make_row(const ExperimentConfig& config, const std::string& dataset,
                   const std::string& model, const std::string& strategy,
                   double epsilon, double alpha, std::size_t iterations,
                   const EvalReport& report, double ndcg_init) {
  ReportRow row;
  row.dataset = dataset;
  row.model = model;
  row.strategy = strategy;
  row.epsilon = epsilon;
  row.alpha = alpha;
  row.iterations = iterations;
  row.seed = config.seed;
  row.k = report.k;
  row.pr = report.pr;
  row.re = report.re;
  row.ndcg = report.ndcg;
  row.efd = report.efd;
  row.se = report.se;
  row.icov = report.icov;
  row.rho = ndcg_init > 0.0 ? rho(ndcg_init, report.ndcg) : 0.0;
  return row;
}

std::string delta_file_name(const PerturbationConfig& pc, double eps,
                            std::size_t iters) {
  return std::string(strategy_name(pc.strategy)) + "_eps" + fmt(eps) + "_L" +
         std::to_string(iters) + ".bin";
}

std::string model_name_from_path(const std::filesystem::path& p) {
  std::string stem = p.stem().string();
  if (stem.rfind("model_", 0) == 0) stem = stem.substr(6);
  return stem;
}

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<double>& losses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e)
    out << (e + 1) << ',' << fmt(losses[e]) << '\n';
}

double max_abs_entry(const MatF& m) {
  double v = 0.0;
  for (float x : m.data) v = std::max(v, std::abs(double(x)));
  return v;
}

}  // namespace

std::uint64_t ExperimentConfig::split_seed() const {
  return mix_seed(seed, kSaltSplit);
}

std::uint64_t ExperimentConfig::eval_seed() const {
  return mix_seed(seed, kSaltEval);
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::string text = read_text_file(path);
  ConfigMap map = parse_config_text(text, path.string());
  std::string hashed = text;
  for (const auto& ov : overrides) {
    const std::size_t dot = ov.find('.');
    const std::size_t eq = ov.find('=');
    if (dot == std::string::npos || eq == std::string::npos || dot > eq)
      throw UsageError("override must look like section.key=value: " + ov);
    map[trim(ov.substr(0, dot))][trim(ov.substr(dot + 1, eq - dot - 1))] =
        trim(ov.substr(eq + 1));
    hashed += "\n@override " + ov;
  }
  const std::uint64_t hash = fnv1a64(
      {reinterpret_cast<const unsigned char*>(hashed.data()), hashed.size()});
  return materialize(map, hash);
}

const char* ReportRow::header() {
  return "dataset,model,strategy,epsilon,alpha,iterations,seed,k,pr,re,ndcg,"
         "efd,se,icov,rho";
}

std::string ReportRow::to_csv() const {
  std::ostringstream ss;
  ss << dataset << ',' << model << ',' << strategy << ',' << fmt(epsilon)
     << ',' << fmt(alpha) << ',' << iterations << ',' << seed << ',' << k
     << ',' << fmt(pr) << ',' << fmt(re) << ',' << fmt(ndcg) << ',' << fmt(efd)
     << ',' << fmt(se) << ',' << icov << ',' << fmt(rho);
  return ss.str();
}

ReportRow ReportRow::from_csv(const std::string& line) {
  const auto fields = split_csv(line);
  if (fields.size() != 15)
    throw ParseError("report row: expected 15 fields, got " +
                     std::to_string(fields.size()) + ": " + line);
  ReportRow r;
  r.dataset = fields[0];
  r.model = fields[1];
  r.strategy = fields[2];
  r.epsilon = to_double(fields[3], "epsilon");
  r.alpha = to_double(fields[4], "alpha");
  r.iterations = to_u64(fields[5], "iterations");
  r.seed = to_u64(fields[6], "seed");
  r.k = to_u64(fields[7], "k");
  r.pr = to_double(fields[8], "pr");
  r.re = to_double(fields[9], "re");
  r.ndcg = to_double(fields[10], "ndcg");
  r.efd = to_double(fields[11], "efd");
  r.se = to_double(fields[12], "se");
  r.icov = to_u64(fields[13], "icov");
  r.rho = to_double(fields[14], "rho");
  return r;
}

std::string ReportRow::key() const {
  std::ostringstream ss;
  ss << dataset << '|' << model << '|' << strategy << '|' << fmt(epsilon)
     << '|' << fmt(alpha) << '|' << iterations << '|' << seed << '|' << k;
  return ss.str();
}

void write_rows(const std::filesystem::path& path,
                const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << ReportRow::header() << '\n';
  for (const auto& r : rows) out << r.to_csv() << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

std::vector<ReportRow> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<ReportRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != ReportRow::header())
        throw ParseError(path.string() + ": unexpected header: " + line);
      continue;
    }
    rows.push_back(ReportRow::from_csv(line));
  }
  return rows;
}

void RunManifest::record(const std::filesystem::path& run_dir,
                         const std::filesystem::path& file) {
  ManifestArtifact a;
  a.path = std::filesystem::relative(file, run_dir).generic_string();
  a.checksum = fnv1a64_file(file);
  a.bytes = std::filesystem::file_size(file);
  for (auto& existing : artifacts)
    if (existing.path == a.path) {
      existing = a;
      return;
    }
  artifacts.push_back(a);
}

void RunManifest::save(const std::filesystem::path& run_dir) const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  j["library_version"] = library_version;
  j["artifacts"] = nlohmann::json::array();
  for (const auto& a : artifacts)
    j["artifacts"].push_back(
        {{"path", a.path}, {"checksum", a.checksum}, {"bytes", a.bytes}});
  j["timings_sec"] = timings_sec;
  j["notes"] = notes;
  std::ofstream out(run_dir / "manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest.json");
  out << j.dump(2) << '\n';
}

RunManifest RunManifest::load_or_create(const std::filesystem::path& run_dir,
                                        std::uint64_t config_hash) {
  RunManifest m;
  m.config_hash = config_hash;
  std::ifstream in(run_dir / "manifest.json");
  if (!in) return m;
  nlohmann::json j = nlohmann::json::parse(in);
  m.config_hash = j.value("config_hash", config_hash);
  m.library_version = j.value("library_version", std::string(kLibraryVersion));
  for (const auto& a : j.value("artifacts", nlohmann::json::array()))
    m.artifacts.push_back({a.at("path").get<std::string>(),
                           a.at("checksum").get<std::uint64_t>(),
                           a.at("bytes").get<std::uint64_t>()});
  if (j.contains("timings_sec"))
    m.timings_sec = j["timings_sec"].get<std::map<std::string, double>>();
  if (j.contains("notes"))
    m.notes = j["notes"].get<std::vector<std::string>>();
  return m;
}

bool RunManifest::verify(const std::filesystem::path& run_dir,
                         std::string* first_bad) const {
  for (const auto& a : artifacts) {
    const auto p = run_dir / a.path;
    if (!std::filesystem::exists(p) || fnv1a64_file(p) != a.checksum) {
      if (first_bad) *first_bad = a.path;
      return false;
    }
  }
  return true;
}

void cmd_prepare(const ExperimentConfig& config) {
  if (config.dataset_path.empty())
    throw UsageError("prepare: dataset.path is not configured");
  if (config.out_dir.empty())
    throw UsageError("prepare: output.dir is not configured");
  Stopwatch timer;
  std::filesystem::create_directories(config.out_dir);
  RunManifest manifest =
      RunManifest::load_or_create(config.out_dir, config.config_hash);

  const InteractionLog log = load_interactions(config.dataset_path, config.tsv);
  if (log.malformed_lines > 0)
    std::cerr << "prepare: skipped " << log.malformed_lines
              << " malformed lines\n";
  const ImplicitDataset ds = binarize(log);
  const SplitPair split =
      leave_one_out_split(ds, config.split_mode, config.split_seed());
  write_split(split, config.out_dir / "split");

  const DatasetCharacteristics chars = characteristics(ds);
  nlohmann::json j;
  j["dataset"] = config.dataset_id;
  j["num_users"] = chars.num_users;
  j["num_items"] = chars.num_items;
  j["num_interactions"] = chars.num_interactions;
  j["density"] = chars.density;
  j["size"] = chars.size;
  j["shape"] = chars.shape;
  j["test_users"] = test_user_count(split.test);
  std::ofstream out(config.out_dir / "characteristics.json", std::ios::trunc);
  out << j.dump(2) << '\n';
  out.close();  // flushed before the manifest hashes it
  if (!out) throw IoError("cannot write characteristics.json");

  for (const char* f :
       {"split/train.tsv", "split/test.tsv", "split/split.json",
        "characteristics.json"})
    manifest.record(config.out_dir, config.out_dir / f);
  manifest.timings_sec["prepare"] = timer.seconds();
  manifest.save(config.out_dir);
}

void cmd_train(const ExperimentConfig& config) {
  if (config.out_dir.empty())
    throw UsageError("train: output.dir is not configured");
  if (!std::filesystem::exists(config.out_dir / "split" / "split.json"))
    throw UsageError("train: no prepared split under " +
                     config.out_dir.string() + " (run prepare first)");
  Stopwatch timer;
  RunManifest manifest =
      RunManifest::load_or_create(config.out_dir, config.config_hash);

  const SplitPair split = read_split(config.out_dir / "split");
  const TrainResult bpr = train_bpr(split.train, config.train);

  save_params(bpr.params, config.out_dir / "model_bpr.bin");
  manifest.record(config.out_dir, config.out_dir / "model_bpr.bin");
  write_loss_csv(config.out_dir / "train_loss_bpr.csv", bpr.epoch_mean_loss);
  manifest.record(config.out_dir, config.out_dir / "train_loss_bpr.csv");
  for (const auto& [epoch, params] : bpr.checkpoints) {
    const auto p =
        config.out_dir / ("model_bpr_ckpt" + std::to_string(epoch) + ".bin");
    save_params(params, p);
    manifest.record(config.out_dir, p);
  }

  if (config.apr) {
    if (bpr.checkpoints.empty())
      throw ConfigError(
          "train: apr requested but no checkpoint epoch was captured; "
          "set train.checkpoint_epochs within the epoch range");
    const std::size_t warm_epoch =
        config.apr->warm_start_epoch.value_or(bpr.checkpoints.rbegin()->first);
    const auto warm_it = bpr.checkpoints.find(warm_epoch);
    if (warm_it == bpr.checkpoints.end())
      throw ConfigError("train: no checkpoint at apr warm-start epoch " +
                        std::to_string(warm_epoch));
    const ModelParams& warm_params = warm_it->second;
    TrainConfig apr_tc = config.train;
    const TrainResult amf =
        apr_train(split.train, warm_params, *config.apr, apr_tc);
    save_params(amf.params, config.out_dir / "model_amf.bin");
    manifest.record(config.out_dir, config.out_dir / "model_amf.bin");
    write_loss_csv(config.out_dir / "train_loss_amf.csv", amf.epoch_mean_loss);
    manifest.record(config.out_dir, config.out_dir / "train_loss_amf.csv");
    manifest.notes.push_back("amf warm-started from bpr epoch " +
                             std::to_string(warm_epoch));
  }

  manifest.timings_sec["train"] = timer.seconds();
  manifest.save(config.out_dir);
}

void cmd_attack(const ExperimentConfig& config,
                const std::filesystem::path& model_path) {
  if (config.out_dir.empty())
    throw UsageError("attack: output.dir is not configured");
  if (!std::filesystem::exists(model_path))
    throw UsageError("attack: model file not found: " + model_path.string());
  if (!std::filesystem::exists(config.out_dir / "split" / "split.json"))
    throw UsageError("attack: no prepared split under " +
                     config.out_dir.string());
  Stopwatch timer;
  RunManifest manifest =
      RunManifest::load_or_create(config.out_dir, config.config_hash);

  const SplitPair split = read_split(config.out_dir / "split");
  const ModelParams params = load_params(model_path);
  const std::string model = model_name_from_path(model_path);
  const auto delta_dir = config.out_dir / "deltas";
  std::filesystem::create_directories(delta_dir);

  const EvalReport initial = evaluate(params, split.train, split.test,
                                      config.eval_k,
                                      {config.dataset_id, model, "none",
                                       config.seed});
  const double ndcg_init = initial.ndcg;

  std::vector<ReportRow> iter_rows;
  iter_rows.push_back(make_row(config, config.dataset_id, model, "none", 0.0,
                               0.0, 0, initial, ndcg_init));
  {
    const RecommendationSlates random_slates = build_random_slates(
        split.train, split.test, config.eval_k, config.eval_seed());
    const EvalReport random_report =
        evaluate_slates(random_slates, split.train, split.test,
                        {config.dataset_id, "random", "none", config.seed});
    // the floor baseline is not a perturbation of this model, so rho stays 0
    // and the row is identical whichever model the attack run targets
    iter_rows.push_back(make_row(config, config.dataset_id, "random", "none",
                                 0.0, 0.0, 0, random_report, 0.0));
  }

  auto evaluate_delta = [&](const Delta& delta) {
    const ModelParams perturbed = apply_delta(params, delta);
    return evaluate(perturbed, split.train, split.test, config.eval_k,
                    {config.dataset_id, model,
                     strategy_name(delta.strategy), config.seed});
  };

  auto check_budget = [](const Delta& delta) {
    if (delta.strategy == Strategy::Fgsm) return;
    const double m = std::max(max_abs_entry(delta.dP), max_abs_entry(delta.dQ));
    if (m > delta.epsilon + 1e-6)
      throw TrainingError("attack: delta exceeds budget: max|entry| " +
                          fmt(m) + " > epsilon " + fmt(delta.epsilon));
  };

  // Iteration sweep at the configured budget.
  for (const PerturbationConfig& pc : config.attacks) {
    if (pc.strategy == Strategy::Fgsm) {
      const Delta d = make_delta(params, split.train, pc);
      save_delta(d, delta_dir / delta_file_name(pc, pc.epsilon, 1));
      manifest.record(config.out_dir,
                      delta_dir / delta_file_name(pc, pc.epsilon, 1));
      iter_rows.push_back(make_row(config, config.dataset_id, model, "fgsm",
                                   pc.epsilon, 0.0, 1, evaluate_delta(d),
                                   ndcg_init));
      continue;
    }
    const auto deltas = iterative_delta_snapshots(params, split.train, pc,
                                                  config.sweep.iterations);
    for (const Delta& d : deltas) {
      check_budget(d);
      const auto name = delta_file_name(pc, pc.epsilon, d.iterations_run);
      save_delta(d, delta_dir / name);
      manifest.record(config.out_dir, delta_dir / name);
      iter_rows.push_back(make_row(config, config.dataset_id, model,
                                   strategy_name(pc.strategy), pc.epsilon,
                                   pc.alpha, d.iterations_run,
                                   evaluate_delta(d), ndcg_init));
    }
  }
  const auto iter_csv = config.out_dir / ("attack_iterations_" + model + ".csv");
  write_rows(iter_csv, iter_rows);
  manifest.record(config.out_dir, iter_csv);

  // Budget sweep at the configured iteration count.
  std::vector<ReportRow> eps_rows;
  for (const PerturbationConfig& base : config.attacks) {
    for (double eps : config.sweep.epsilons) {
      PerturbationConfig pc = base;
      pc.epsilon = eps;
      pc.alpha = eps / 4.0;
      const Delta d = make_delta(params, split.train, pc);
      check_budget(d);
      const auto name = delta_file_name(pc, eps, pc.iterations);
      save_delta(d, delta_dir / name);
      manifest.record(config.out_dir, delta_dir / name);
      eps_rows.push_back(make_row(
          config, config.dataset_id, model, strategy_name(pc.strategy), eps,
          pc.strategy == Strategy::Fgsm ? 0.0 : pc.alpha,
          pc.strategy == Strategy::Fgsm ? 1 : pc.iterations,
          evaluate_delta(d), ndcg_init));
    }
  }
  const auto eps_csv = config.out_dir / ("attack_epsilons_" + model + ".csv");
  write_rows(eps_csv, eps_rows);
  manifest.record(config.out_dir, eps_csv);

  manifest.timings_sec["attack_" + model] = timer.seconds();
  manifest.save(config.out_dir);
}

void cmd_kcore_study(const ExperimentConfig& config) {
  if (config.dataset_path.empty())
    throw UsageError("kcore-study: dataset.path is not configured");
  if (config.out_dir.empty())
    throw UsageError("kcore-study: output.dir is not configured");
  if (config.sweep.kcore_levels.empty())
    throw UsageError("kcore-study: sweep.kcore is empty");
  Stopwatch timer;
  std::filesystem::create_directories(config.out_dir);
  RunManifest manifest =
      RunManifest::load_or_create(config.out_dir, config.config_hash);

  const InteractionLog log = load_interactions(config.dataset_path, config.tsv);
  const ImplicitDataset base = binarize(log);

  std::ofstream skipped(config.out_dir / "kcore_skipped.csv", std::ios::trunc);
  skipped << "k,reason\n";

  struct StudyRow {
    int k;
    DatasetCharacteristics chars;
    std::string model, strategy;
    double epsilon;
    std::size_t iterations;
    double ndcg_init, ndcg_after, rho_value;
  };
  std::vector<StudyRow> rows;

  std::vector<int> levels = config.sweep.kcore_levels;
  std::sort(levels.begin(), levels.end());
  double prev_density = -1.0;
  bool density_monotone = true;

  for (int k : levels) {
    const ImplicitDataset sub = k_core(base, k);
    if (sub.empty()) {
      skipped << k << ",empty after k-core\n";
      continue;
    }
    if (sub.num_items() <= config.eval_k) {
      skipped << k << ",catalog smaller than eval cutoff\n";
      continue;
    }
    const SplitPair split =
        leave_one_out_split(sub, config.split_mode, config.split_seed());
    if (test_user_count(split.test) == 0) {
      skipped << k << ",no user has two interactions\n";
      continue;
    }
    const DatasetCharacteristics chars = characteristics(sub, k);
    if (chars.density < prev_density) density_monotone = false;
    prev_density = chars.density;

    TrainConfig tc = config.train;
    tc.epochs = config.kcore_train_epochs;
    tc.checkpoint_epochs = {config.kcore_train_epochs / 2};
    const TrainResult bpr = train_bpr(split.train, tc);

    struct ModelUnderTest {
      std::string name;
      const ModelParams* params;
    };
    std::vector<ModelUnderTest> models;
    models.push_back({"bpr", &bpr.params});
    TrainResult amf;
    if (config.apr && !bpr.checkpoints.empty()) {
      AprConfig apr = *config.apr;
      apr.apr_epochs = std::max<std::size_t>(1, config.kcore_train_epochs / 2);
      amf = apr_train(split.train, bpr.checkpoints.rbegin()->second, apr, tc);
      models.push_back({"amf", &amf.params});
    }

    for (const auto& m : models) {
      const EvalReport initial =
          evaluate(*m.params, split.train, split.test, config.eval_k);
      if (initial.ndcg <= 0.0) {
        skipped << k << "," << m.name << " initial ndcg is zero\n";
        continue;
      }
      for (const PerturbationConfig& pc : config.attacks) {
        const Delta d = make_delta(*m.params, split.train, pc);
        const EvalReport after = evaluate(apply_delta(*m.params, d),
                                          split.train, split.test,
                                          config.eval_k);
        rows.push_back({k, chars, m.name, strategy_name(pc.strategy),
                        pc.epsilon,
                        pc.strategy == Strategy::Fgsm ? 1 : pc.iterations,
                        initial.ndcg, after.ndcg,
                        rho(initial.ndcg, after.ndcg)});
      }
    }
  }
  if (!skipped) throw IoError("cannot write kcore_skipped.csv");
  skipped.close();

  if (!density_monotone) {
    std::cerr << "kcore-study: density is not nondecreasing across k levels\n";
    manifest.notes.push_back("density not monotone across k levels");
  }

  std::ofstream out(config.out_dir / "kcore_rows.csv", std::ios::trunc);
  out << "dataset,k,density,size,shape,model,strategy,epsilon,iterations,seed,"
         "ndcg_init,ndcg_after,rho\n";
  for (const auto& r : rows)
    out << config.dataset_id << '-' << 'k' << r.k << ',' << r.k << ','
        << fmt(r.chars.density) << ',' << fmt(r.chars.size) << ','
        << fmt(r.chars.shape) << ',' << r.model << ',' << r.strategy << ','
        << fmt(r.epsilon) << ',' << r.iterations << ',' << config.seed << ','
        << fmt(r.ndcg_init) << ',' << fmt(r.ndcg_after) << ','
        << fmt(r.rho_value) << '\n';
  if (!out) throw IoError("cannot write kcore_rows.csv");
  out.close();

  // least-squares fits of rho against each structural characteristic
  std::ofstream fits(config.out_dir / "kcore_fits.csv", std::ios::trunc);
  fits << "model,strategy,characteristic,slope,intercept,points,"
          "endpoint_slope\n";
  std::set<std::pair<std::string, std::string>> groups;
  for (const auto& r : rows) groups.insert({r.model, r.strategy});
  for (const auto& [model, strategy] : groups) {
    for (const char* characteristic : {"density", "size", "shape"}) {
      std::vector<DegradationPoint> pts;
      for (const auto& r : rows) {
        if (r.model != model || r.strategy != strategy) continue;
        double x = r.chars.density;
        if (std::string(characteristic) == "size") x = r.chars.size;
        if (std::string(characteristic) == "shape") x = r.chars.shape;
        pts.push_back({x, r.rho_value});
      }
      bool distinct = false;
      for (std::size_t n = 1; n < pts.size(); ++n)
        distinct |= pts[n].x != pts[0].x;
      if (pts.size() < 2 || !distinct) continue;
      const LineFit fit = fit_line(pts);
      fits << model << ',' << strategy << ',' << characteristic << ','
           << fmt(fit.slope) << ',' << fmt(fit.intercept) << ','
           << fit.points_used << ','
           << fmt(two_point_slope(pts.front(), pts.back())) << '\n';
    }
  }
  if (!fits) throw IoError("cannot write kcore_fits.csv");
  fits.close();

  for (const char* f : {"kcore_rows.csv", "kcore_fits.csv", "kcore_skipped.csv"})
    manifest.record(config.out_dir, config.out_dir / f);
  manifest.timings_sec["kcore_study"] = timer.seconds();
  manifest.save(config.out_dir);
}

void cmd_report(const std::filesystem::path& run_dir) {
  if (!std::filesystem::is_directory(run_dir))
    throw UsageError("report: not a directory: " + run_dir.string());

  std::vector<std::filesystem::path> iter_files, eps_files;
  for (const auto& entry : std::filesystem::directory_iterator(run_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("attack_iterations_", 0) == 0 && name.ends_with(".csv"))
      iter_files.push_back(entry.path());
    else if (name.rfind("attack_epsilons_", 0) == 0 && name.ends_with(".csv"))
      eps_files.push_back(entry.path());
  }
  std::sort(iter_files.begin(), iter_files.end());
  std::sort(eps_files.begin(), eps_files.end());
  if (iter_files.empty() && eps_files.empty())
    throw UsageError("report: no evaluation CSVs under " + run_dir.string());

  std::vector<ReportRow> iter_rows, eps_rows;
  for (const auto& f : iter_files)
    for (auto& r : read_rows(f)) iter_rows.push_back(std::move(r));
  for (const auto& f : eps_files)
    for (auto& r : read_rows(f)) eps_rows.push_back(std::move(r));

  // Merge with provenance-key dedup; identical duplicates collapse,
  // conflicting ones are an error.
  std::map<std::string, ReportRow> merged;
  std::vector<std::string> conflicts;
  auto merge_in = [&](const ReportRow& r) {
    auto [it, inserted] = merged.try_emplace(r.key(), r);
    if (!inserted && it->second.to_csv() != r.to_csv())
      conflicts.push_back(r.key());
  };
  for (const auto& r : iter_rows) merge_in(r);
  for (const auto& r : eps_rows) merge_in(r);
  if (!conflicts.empty()) {
    std::string msg = "report: conflicting duplicate rows:";
    for (const auto& k : conflicts) msg += "\n  " + k;
    throw ReportError(msg);
  }

  const auto report_dir = run_dir / "report";
  std::filesystem::create_directories(report_dir);
  {
    std::vector<ReportRow> rows;
    rows.reserve(merged.size());
    for (const auto& [key, r] : merged) rows.push_back(r);
    write_rows(report_dir / "merged.csv", rows);
  }
  write_rows(report_dir / "series_iterations.csv", iter_rows);
  write_rows(report_dir / "series_epsilon.csv", eps_rows);
  if (std::filesystem::exists(run_dir / "kcore_rows.csv"))
    std::filesystem::copy_file(
        run_dir / "kcore_rows.csv",
        report_dir / "series_characteristics.csv",
        std::filesystem::copy_options::overwrite_existing);

  // Normalized area under the iteration curves (trapezoid / iteration span)
  // for groups with at least two iteration points.
  std::map<std::string, std::vector<const ReportRow*>> curves;
  for (const auto& r : iter_rows) {
    if (r.strategy == "none") continue;
    std::ostringstream ss;
    ss << r.dataset << '|' << r.model << '|' << r.strategy << '|'
       << fmt(r.epsilon) << '|' << r.seed << '|' << r.k;
    curves[ss.str()].push_back(&r);
  }
  std::ofstream auc(report_dir / "summary_auc.csv", std::ios::trunc);
  auc << "dataset,model,strategy,epsilon,seed,k,pr,re,ndcg,efd,se,icov\n";
  for (auto& [key, rows] : curves) {
    std::sort(rows.begin(), rows.end(),
              [](const ReportRow* a, const ReportRow* b) {
                return a->iterations < b->iterations;
              });
    if (rows.size() < 2 || rows.front()->iterations == rows.back()->iterations)
      continue;
    const double span =
        double(rows.back()->iterations) - double(rows.front()->iterations);
    auto trapezoid = [&](auto metric) {
      double area = 0.0;
      for (std::size_t n = 1; n < rows.size(); ++n)
        area += (double(rows[n]->iterations) - double(rows[n - 1]->iterations)) *
                (metric(*rows[n]) + metric(*rows[n - 1])) / 2.0;
      return area / span;
    };
    const auto& f = *rows.front();
    auc << f.dataset << ',' << f.model << ',' << f.strategy << ','
        << fmt(f.epsilon) << ',' << f.seed << ',' << f.k << ','
        << fmt(trapezoid([](const ReportRow& r) { return r.pr; })) << ','
        << fmt(trapezoid([](const ReportRow& r) { return r.re; })) << ','
        << fmt(trapezoid([](const ReportRow& r) { return r.ndcg; })) << ','
        << fmt(trapezoid([](const ReportRow& r) { return r.efd; })) << ','
        << fmt(trapezoid([](const ReportRow& r) { return r.se; })) << ','
        << fmt(trapezoid([](const ReportRow& r) { return double(r.icov); }))
        << '\n';
  }
  if (!auc) throw IoError("cannot write summary_auc.csv");
}

}  // namespace advrec
