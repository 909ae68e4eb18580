#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "advrec/adversarial.hpp"
#include "advrec/model.hpp"

namespace advrec {

// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

// Model file: magic "ADVREC01", u32 LE |U|, |I|, d, then P and Q row-major
// as f32 LE, then the u64 LE fnv1a64 of the float payload.
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

// Delta file: magic "ADVDEL01", u32 strategy, f64 epsilon, f64 alpha,
// u32 iterations, u64 seed, then the same dims/payload/checksum layout.
void save_delta(const Delta& delta, const std::filesystem::path& path);
Delta load_delta(const std::filesystem::path& path);

}  // namespace advrec
