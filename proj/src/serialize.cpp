#include "advrec/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "advrec/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "on-disk format is little-endian; big-endian hosts need swaps");

namespace advrec {

namespace {

constexpr char kParamsMagic[8] = {'A', 'D', 'V', 'R', 'E', 'C', '0', '1'};
constexpr char kDeltaMagic[8] = {'A', 'D', 'V', 'D', 'E', 'L', '0', '1'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  template <typename T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failure on " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string());
  }
  template <typename T>
  T get() {
    T v{};
    read_bytes(&v, sizeof(T));
    return v;
  }
  void read_bytes(void* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(path_.string() + ": truncated at offset " +
                        std::to_string(offset_ + in_.gcount()));
    offset_ += n;
  }
  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof())
      throw FormatError(path_.string() + ": trailing bytes at offset " +
                        std::to_string(offset_));
  }
  std::size_t offset() const { return offset_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

std::uint64_t payload_checksum(const MatF& a, const MatF& b) {
  std::uint64_t h = 14695981039346656037ull;
  auto feed = [&h](const MatF& m) {
    const auto* p = reinterpret_cast<const unsigned char*>(m.data.data());
    for (std::size_t n = 0; n < m.data.size() * sizeof(float); ++n) {
      h ^= p[n];
      h *= 1099511628211ull;
    }
  };
  feed(a);
  feed(b);
  return h;
}

void read_matrices(Reader& r, MatF& p, MatF& q) {
  const auto num_users = r.get<std::uint32_t>();
  const auto num_items = r.get<std::uint32_t>();
  const auto d = r.get<std::uint32_t>();
  if (num_users == 0 || num_items == 0 || d == 0)
    throw FormatError(r.path().string() + ": zero dimension in header");
  p = MatF(num_users, d);
  q = MatF(num_items, d);
  r.read_bytes(p.data.data(), p.data.size() * sizeof(float));
  r.read_bytes(q.data.data(), q.data.size() * sizeof(float));
  const auto stored = r.get<std::uint64_t>();
  const auto actual = payload_checksum(p, q);
  if (stored != actual)
    throw FormatError(r.path().string() + ": checksum mismatch at offset " +
                      std::to_string(r.offset() - sizeof(std::uint64_t)));
}

void check_magic(Reader& r, const char (&magic)[8]) {
  char buf[8];
  r.read_bytes(buf, 8);
  if (std::memcmp(buf, magic, 8) != 0)
    throw FormatError(r.path().string() + ": bad magic at offset 0");
}

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize n = 0; n < in.gcount(); ++n) {
      h ^= static_cast<unsigned char>(buf[n]);
      h *= 1099511628211ull;
    }
    if (in.eof()) break;
  }
  return h;
}

void save_params(const ModelParams& params, const std::filesystem::path& path) {
  Writer w(path);
  w.put_bytes(kParamsMagic, 8);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.num_users()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.num_items()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.dim()));
  w.put_bytes(params.P.data.data(), params.P.data.size() * sizeof(float));
  w.put_bytes(params.Q.data.data(), params.Q.data.size() * sizeof(float));
  w.put<std::uint64_t>(payload_checksum(params.P, params.Q));
  w.finish();
}

ModelParams load_params(const std::filesystem::path& path) {
  Reader r(path);
  check_magic(r, kParamsMagic);
  ModelParams params;
  read_matrices(r, params.P, params.Q);
  r.expect_eof();
  return params;
}

void save_delta(const Delta& delta, const std::filesystem::path& path) {
  Writer w(path);
  w.put_bytes(kDeltaMagic, 8);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(delta.strategy));
  w.put<double>(delta.epsilon);
  w.put<double>(delta.alpha);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(delta.iterations_run));
  w.put<std::uint64_t>(delta.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(delta.dP.rows));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(delta.dQ.rows));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(delta.dP.cols));
  w.put_bytes(delta.dP.data.data(), delta.dP.data.size() * sizeof(float));
  w.put_bytes(delta.dQ.data.data(), delta.dQ.data.size() * sizeof(float));
  w.put<std::uint64_t>(payload_checksum(delta.dP, delta.dQ));
  w.finish();
}

Delta load_delta(const std::filesystem::path& path) {
  Reader r(path);
  check_magic(r, kDeltaMagic);
  Delta d;
  const auto strat = r.get<std::uint32_t>();
  if (strat > 2)
    throw FormatError(path.string() + ": unknown strategy code at offset 8");
  d.strategy = static_cast<Strategy>(strat);
  d.epsilon = r.get<double>();
  d.alpha = r.get<double>();
  d.iterations_run = r.get<std::uint32_t>();
  d.seed = r.get<std::uint64_t>();
  read_matrices(r, d.dP, d.dQ);
  r.expect_eof();
  return d;
}

}  // namespace advrec
