#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "advrec/errors.hpp"
#include "advrec/runner.hpp"
#include "advrec/synth.hpp"
#include "support/testutil.hpp"

using namespace advrec;
using testutil::TempDir;

namespace {

std::string base_config(const std::filesystem::path& data,
                        const std::filesystem::path& out) {
  return "[dataset]\n"
         "path = " + data.string() + "\n"
         "id = toy\n"
         "[split]\n"
         "mode = last_by_timestamp\n"
         "[train]\n"
         "epochs = 60\n"
         "batch_size = 64\n"
         "d = 8\n"
         "lr = 0.05\n"
         "checkpoint_epochs = 30\n"
         "[apr]\n"
         "lambda = 1\n"
         "epsilon_adv = 0.5\n"
         "apr_epochs = 30\n"
         "[attack]\n"
         "strategies = fgsm,bim,pgd\n"
         "epsilon = 0.5\n"
         "iterations = 5\n"
         "[sweep]\n"
         "iterations = 1,3,5\n"
         "epsilons = 0.1,0.5\n"
         "[eval]\n"
         "k = 5\n"
         "[output]\n"
         "dir = " + out.string() + "\n"
         "[kcore]\n"
         "train_epochs = 20\n";
}

std::filesystem::path write_toy_dataset(const TempDir& dir) {
  SynthConfig sc;
  sc.num_users = 60;
  sc.num_items = 80;
  sc.num_clusters = 4;
  sc.min_user_interactions = 8;
  sc.max_user_interactions = 20;
  sc.seed = 5;
  const auto log = synth_interactions(sc);
  const auto path = dir / "data.tsv";
  write_interaction_tsv(log, path);
  return path;
}

ExperimentConfig config_for(const TempDir& dir, const std::string& text,
                            const std::vector<std::string>& overrides = {}) {
  const auto cfg_path = dir / "exp.cfg";
  testutil::write_file(cfg_path, text);
  return load_config(cfg_path, overrides);
}

}  // namespace

TEST_CASE("config parsing, defaults and overrides") {
  TempDir dir("config");
  const auto data = write_toy_dataset(dir);
  auto cfg = config_for(dir, base_config(data, dir / "out"));
  CHECK(cfg.dataset_id == "toy");
  CHECK(cfg.train.epochs == 60);
  CHECK(cfg.train.checkpoint_epochs == std::set<std::size_t>{30});
  CHECK(cfg.apr.has_value());
  CHECK(cfg.apr->lambda == 1.0);
  CHECK(cfg.attacks.size() == 3);
  CHECK(cfg.attacks[0].strategy == Strategy::Fgsm);
  CHECK(cfg.attacks[0].iterations == 1);
  CHECK(cfg.attacks[1].iterations == 5);
  CHECK(cfg.attacks[1].alpha == doctest::Approx(0.125));
  CHECK(cfg.attacks[2].init_mode == InitMode::Uniform);
  CHECK(cfg.eval_k == 5);
  CHECK(cfg.sweep.iterations == std::vector<std::size_t>{1, 3, 5});

  SUBCASE("overrides rewrite values in order") {
    auto cfg2 = config_for(dir, base_config(data, dir / "out"),
                           {"train.epochs=10", "eval.k=7", "global.seed=9"});
    CHECK(cfg2.train.epochs == 10);
    CHECK(cfg2.eval_k == 7);
    CHECK(cfg2.seed == 9);
    CHECK(cfg2.config_hash != cfg.config_hash);
  }
  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(
        config_for(dir, base_config(data, dir / "out") + "[train]\nepoch = 5\n"),
        ConfigError);
  }
  SUBCASE("bad override shape is a usage error") {
    CHECK_THROWS_AS(config_for(dir, base_config(data, dir / "out"), {"nonsense"}),
                    UsageError);
  }
  SUBCASE("missing config file is a usage error") {
    CHECK_THROWS_AS(load_config(dir / "missing.cfg"), UsageError);
  }
}

TEST_CASE("report rows round trip through csv") {
  ReportRow r;
  r.dataset = "toy";
  r.model = "bpr";
  r.strategy = "pgd";
  r.epsilon = 0.5;
  r.alpha = 0.125;
  r.iterations = 25;
  r.seed = 42;
  r.k = 10;
  r.pr = 0.123456789;
  r.re = 0.5;
  r.ndcg = 0.2033;
  r.efd = 0.51;
  r.se = 11.3454;
  r.icov = 6220;
  r.rho = 40.19;
  const auto back = ReportRow::from_csv(r.to_csv());
  CHECK(back.to_csv() == r.to_csv());
  CHECK(back.key() == r.key());
  CHECK(back.ndcg == r.ndcg);
}

TEST_CASE("the pipeline runs end to end and is deterministic") {
  TempDir dir("pipeline");
  const auto data = write_toy_dataset(dir);

  auto run = [&](const std::filesystem::path& out) {
    auto cfg = config_for(dir, base_config(data, out));
    cmd_prepare(cfg);
    cmd_train(cfg);
    cmd_attack(cfg, out / "model_bpr.bin");
    cmd_attack(cfg, out / "model_amf.bin");
    cmd_report(out);
  };
  run(dir / "run1");
  run(dir / "run2");

  for (const char* rel :
       {"characteristics.json", "train_loss_bpr.csv", "train_loss_amf.csv",
        "attack_iterations_bpr.csv", "attack_epsilons_bpr.csv",
        "attack_iterations_amf.csv", "attack_epsilons_amf.csv",
        "report/merged.csv", "report/series_iterations.csv",
        "report/series_epsilon.csv", "report/summary_auc.csv"}) {
    CAPTURE(rel);
    const auto a = testutil::read_file(dir / "run1" / rel);
    const auto b = testutil::read_file(dir / "run2" / rel);
    REQUIRE_FALSE(a.empty());
    CHECK(a == b);
  }

  SUBCASE("attack csv has the expected row structure") {
    const auto rows = read_rows(dir / "run1" / "attack_iterations_bpr.csv");
    // 2 baselines + fgsm + 3 bim + 3 pgd
    CHECK(rows.size() == 9);
    std::size_t fgsm_rows = 0, baseline = 0, random_rows = 0;
    for (const auto& r : rows) {
      if (r.strategy == "fgsm") {
        ++fgsm_rows;
        CHECK(r.iterations == 1);
      }
      if (r.strategy == "none") ++baseline;
      if (r.model == "random") ++random_rows;
    }
    CHECK(fgsm_rows == 1);
    CHECK(baseline == 2);
    CHECK(random_rows == 1);
  }

  SUBCASE("the trained model beats the random baseline") {
    const auto rows = read_rows(dir / "run1" / "attack_iterations_bpr.csv");
    double model_ndcg = -1.0, random_ndcg = -1.0;
    for (const auto& r : rows) {
      if (r.model == "bpr" && r.strategy == "none") model_ndcg = r.ndcg;
      if (r.model == "random") random_ndcg = r.ndcg;
    }
    REQUIRE(model_ndcg >= 0.0);
    REQUIRE(random_ndcg >= 0.0);
    CHECK(model_ndcg > random_ndcg);
  }

  SUBCASE("manifest records verifiable artifacts") {
    auto m = RunManifest::load_or_create(dir / "run1", 0);
    CHECK_FALSE(m.artifacts.empty());
    std::string bad;
    CHECK(m.verify(dir / "run1", &bad));
    testutil::write_file(dir / "run1" / "model_bpr.bin", "corrupted");
    CHECK_FALSE(m.verify(dir / "run1", &bad));
    CHECK(bad == "model_bpr.bin");
  }

  SUBCASE("merged report deduplicates overlapping sweep points") {
    const auto merged = read_rows(dir / "run1" / "report" / "merged.csv");
    std::set<std::string> keys;
    for (const auto& r : merged) CHECK(keys.insert(r.key()).second);
    // the (eps=0.5, L=5) bim/pgd rows and the fgsm eps=0.5 row appear in both
    // sweep files but collapse here
    const auto iters = read_rows(dir / "run1" / "report" / "series_iterations.csv");
    const auto eps = read_rows(dir / "run1" / "report" / "series_epsilon.csv");
    CHECK(merged.size() < iters.size() + eps.size());
    CHECK(iters.size() == 18);  // two models x 9
    CHECK(eps.size() == 12);    // two models x 3 strategies x 2 epsilons
  }
}

TEST_CASE("usage errors cover the missing-prerequisite paths") {
  TempDir dir("usage");
  const auto data = write_toy_dataset(dir);
  auto cfg = config_for(dir, base_config(data, dir / "out"));
  CHECK_THROWS_AS(cmd_train(cfg), UsageError);             // no split yet
  CHECK_THROWS_AS(cmd_attack(cfg, dir / "nope.bin"), UsageError);
  CHECK_THROWS_AS(cmd_report(dir / "out"), UsageError);    // nothing to merge
  auto no_out = cfg;
  no_out.out_dir.clear();
  CHECK_THROWS_AS(cmd_prepare(no_out), UsageError);
}

TEST_CASE("conflicting duplicate report rows are rejected with their keys") {
  TempDir dir("conflict");
  ReportRow r;
  r.dataset = "toy";
  r.model = "bpr";
  r.strategy = "fgsm";
  r.epsilon = 0.5;
  r.iterations = 1;
  r.seed = 1;
  r.k = 10;
  r.ndcg = 0.5;
  ReportRow other = r;
  other.ndcg = 0.9;  // same key, different value
  write_rows(dir / "attack_iterations_a.csv", {r});
  write_rows(dir / "attack_iterations_b.csv", {other});
  CHECK_THROWS_WITH_AS(cmd_report(dir.path()),
                       doctest::Contains("toy|bpr|fgsm"), ReportError);
}

TEST_CASE("kcore study emits rows, fits and skip reasons") {
  TempDir dir("kcore");
  const auto data = write_toy_dataset(dir);
  auto text = base_config(data, dir / "out");
  text += "[sweep]\nkcore = 2,3,50\n";  // 50-core of a tiny set must skip
  auto cfg = config_for(dir, text);
  cmd_kcore_study(cfg);

  const auto rows_text = testutil::read_file(dir / "out" / "kcore_rows.csv");
  CHECK(rows_text.find("density") != std::string::npos);
  CHECK(rows_text.find("toy-k2") != std::string::npos);
  CHECK(rows_text.find("toy-k3") != std::string::npos);
  CHECK(rows_text.find("toy-k50") == std::string::npos);
  const auto skipped = testutil::read_file(dir / "out" / "kcore_skipped.csv");
  CHECK(skipped.find("50,") != std::string::npos);
  const auto fits = testutil::read_file(dir / "out" / "kcore_fits.csv");
  CHECK(fits.find("bpr,pgd,density") != std::string::npos);
  CHECK(fits.find("amf,pgd,density") != std::string::npos);

  // rerunning reproduces the same bytes
  cmd_kcore_study(cfg);
  CHECK(testutil::read_file(dir / "out" / "kcore_rows.csv") == rows_text);

  SUBCASE("empty kcore list is a usage error") {
    auto no_sweep = cfg;
    no_sweep.sweep.kcore_levels.clear();
    CHECK_THROWS_AS(cmd_kcore_study(no_sweep), UsageError);
  }
}
