#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "curdkv/cache.hpp"

namespace curdkv {

// CKV1 container: magic "CKV1", one dtype byte (1 = f32, 2 = f64), one ndim
// byte, ndim little-endian u64 dims, then the row-major payload in little
// endian. Round trips are bit-exact for both dtypes.
enum class Dtype : std::uint8_t {
    f32 = 1,
    f64 = 2,
};

std::size_t dtype_size(Dtype d);
const char *to_string(Dtype d);
Dtype dtype_from_string(const std::string &name);

struct TensorData {
    Dtype dtype = Dtype::f64;
    std::vector<std::uint64_t> dims;
    // Always held as doubles in memory; f32 payloads promote losslessly on
    // load and cast back exactly on save.
    std::vector<double> values;

    std::uint64_t element_count() const;
};

void write_tensor(const std::filesystem::path &path, const TensorData &tensor);
TensorData read_tensor(const std::filesystem::path &path);

// (g, n, d) tensor views of a cache half. dims of rank 2 are read back as a
// single group.
TensorData cache_half_to_tensor(const std::vector<Matrix> &half, Dtype dtype);
KVCache cache_from_tensors(const TensorData &keys, const TensorData &values);

} // namespace curdkv
