#include <doctest.h>

#include <cstdint>
#include <fstream>

#include "advrec/adversarial.hpp"
#include "advrec/errors.hpp"
#include "advrec/serialize.hpp"
#include "support/testutil.hpp"

using namespace advrec;
using testutil::TempDir;

namespace {

void truncate_file(const std::filesystem::path& p, std::size_t keep) {
  std::filesystem::resize_file(p, keep);
}

void corrupt_byte(const std::filesystem::path& p, std::size_t offset) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekg(std::streamoff(offset));
  char c;
  f.read(&c, 1);
  c = char(c ^ 0x5a);
  f.seekp(std::streamoff(offset));
  f.write(&c, 1);
}

}  // namespace

TEST_CASE("model files round trip bit-exactly") {
  TempDir dir("params_rt");
  const auto params = testutil::random_params(7, 11, 5, 1000);
  save_params(params, dir / "m.bin");
  const auto back = load_params(dir / "m.bin");
  CHECK(back.P.data == params.P.data);
  CHECK(back.Q.data == params.Q.data);
  CHECK(back.dim() == 5);

  // saving the loaded copy reproduces the file bytes
  save_params(back, dir / "m2.bin");
  CHECK(testutil::read_file(dir / "m.bin") == testutil::read_file(dir / "m2.bin"));
}

TEST_CASE("truncated model files name the failing offset") {
  TempDir dir("params_trunc");
  const auto params = testutil::random_params(4, 6, 3, 1001);
  save_params(params, dir / "m.bin");
  const auto size = std::filesystem::file_size(dir / "m.bin");
  truncate_file(dir / "m.bin", size / 2);
  CHECK_THROWS_WITH_AS(load_params(dir / "m.bin"),
                       doctest::Contains("offset"), FormatError);
}

TEST_CASE("bad magic and corrupted payloads are format errors") {
  TempDir dir("params_bad");
  const auto params = testutil::random_params(4, 6, 3, 1002);
  save_params(params, dir / "m.bin");
  SUBCASE("magic") {
    corrupt_byte(dir / "m.bin", 0);
    CHECK_THROWS_WITH_AS(load_params(dir / "m.bin"),
                         doctest::Contains("magic"), FormatError);
  }
  SUBCASE("checksum") {
    corrupt_byte(dir / "m.bin", 24);  // inside the P payload
    CHECK_THROWS_WITH_AS(load_params(dir / "m.bin"),
                         doctest::Contains("checksum"), FormatError);
  }
  SUBCASE("trailing garbage") {
    std::ofstream f(dir / "m.bin", std::ios::app | std::ios::binary);
    f << "extra";
    f.close();
    CHECK_THROWS_AS(load_params(dir / "m.bin"), FormatError);
  }
}

TEST_CASE("the header width matches the loaded row width") {
  TempDir dir("params_width");
  const auto params = testutil::random_params(3, 2, 9, 1003);
  save_params(params, dir / "m.bin");
  const auto back = load_params(dir / "m.bin");
  CHECK(back.P.cols == 9);
  CHECK(back.Q.cols == 9);
  CHECK(back.P.rows == 3);
  CHECK(back.Q.rows == 2);
}

TEST_CASE("delta files carry their attack metadata") {
  TempDir dir("delta_rt");
  Delta d;
  d.dP = MatF(3, 4);
  d.dQ = MatF(5, 4);
  advrec::Rng rng(1004);
  for (auto& v : d.dP.data) v = float(rng.uniform(-0.5, 0.5));
  for (auto& v : d.dQ.data) v = float(rng.uniform(-0.5, 0.5));
  d.strategy = Strategy::Pgd;
  d.epsilon = 0.5;
  d.alpha = 0.125;
  d.iterations_run = 25;
  d.seed = 987654321;

  save_delta(d, dir / "d.bin");
  const auto back = load_delta(dir / "d.bin");
  CHECK(back.dP.data == d.dP.data);
  CHECK(back.dQ.data == d.dQ.data);
  CHECK(back.strategy == Strategy::Pgd);
  CHECK(back.epsilon == 0.5);
  CHECK(back.alpha == 0.125);
  CHECK(back.iterations_run == 25);
  CHECK(back.seed == 987654321);

  SUBCASE("truncation is rejected") {
    truncate_file(dir / "d.bin", 30);
    CHECK_THROWS_AS(load_delta(dir / "d.bin"), FormatError);
  }
  SUBCASE("a model magic is not a delta") {
    const auto params = testutil::random_params(3, 5, 4, 1);
    save_params(params, dir / "p.bin");
    CHECK_THROWS_WITH_AS(load_delta(dir / "p.bin"),
                         doctest::Contains("magic"), FormatError);
  }
}

TEST_CASE("fnv1a64 matches the reference vectors") {
  const auto h = [](const std::string& s) {
    return fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()});
  };
  CHECK(h("") == 14695981039346656037ull);
  CHECK(h("a") == 0xaf63dc4c8601ec8cull);
  CHECK(h("foobar") == 0x85944171f73967e8ull);
}
