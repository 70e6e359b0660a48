#include "curdkv/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace curdkv {

namespace {

constexpr char kMagic[4] = {'C', 'K', 'V', '1'};
constexpr std::size_t kMaxDims = 8;

template <typename T>
T byteswap_integral(T value) {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

template <typename T>
T to_little_endian(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        return byteswap_integral(value);
    } else {
        return value;
    }
}

template <typename T>
void put(std::string &buf, T value) {
    value = to_little_endian(value);
    const char *p = reinterpret_cast<const char *>(&value);
    buf.append(p, sizeof(T));
}

template <typename T>
T get(const std::string &buf, std::size_t &offset) {
    T value;
    std::memcpy(&value, buf.data() + offset, sizeof(T));
    offset += sizeof(T);
    return to_little_endian(value);
}

} // namespace

std::size_t dtype_size(Dtype d) {
    return d == Dtype::f32 ? 4 : 8;
}

const char *to_string(Dtype d) {
    return d == Dtype::f32 ? "f32" : "f64";
}

Dtype dtype_from_string(const std::string &name) {
    if (name == "f32") return Dtype::f32;
    if (name == "f64") return Dtype::f64;
    throw ValidationError("unknown dtype: \"" + name + "\" (expected f32 or f64)");
}

std::uint64_t TensorData::element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) {
        n *= d;
    }
    return dims.empty() ? 0 : n;
}

void write_tensor(const std::filesystem::path &path, const TensorData &tensor) {
    if (tensor.dims.empty() || tensor.dims.size() > kMaxDims) {
        throw ValidationError("write_tensor: ndim must lie in [1, " + std::to_string(kMaxDims) +
                              "], got " + std::to_string(tensor.dims.size()));
    }
    for (std::uint64_t d : tensor.dims) {
        if (d == 0) {
            throw ValidationError("write_tensor: zero-length dimension rejected");
        }
    }
    if (tensor.element_count() != tensor.values.size()) {
        throw ValidationError("write_tensor: payload length " +
                              std::to_string(tensor.values.size()) +
                              " does not match dims product " +
                              std::to_string(tensor.element_count()));
    }

    std::string buf;
    buf.append(kMagic, 4);
    buf.push_back(static_cast<char>(tensor.dtype));
    buf.push_back(static_cast<char>(tensor.dims.size()));
    for (std::uint64_t d : tensor.dims) {
        put(buf, d);
    }
    if (tensor.dtype == Dtype::f32) {
        for (double v : tensor.values) {
            put(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        }
    } else {
        for (double v : tensor.values) {
            put(buf, std::bit_cast<std::uint64_t>(v));
        }
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("write_tensor: cannot open " + path.string() + " for writing");
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw IoError("write_tensor: short write to " + path.string());
    }
}

TensorData read_tensor(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("read_tensor: cannot open " + path.string());
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < 6 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw ValidationError("read_tensor: " + path.string() + " is not a CKV1 file");
    }
    std::size_t offset = 4;
    const auto dtype_byte = static_cast<std::uint8_t>(buf[offset++]);
    if (dtype_byte != 1 && dtype_byte != 2) {
        throw ValidationError("read_tensor: " + path.string() + " has invalid dtype byte " +
                              std::to_string(dtype_byte));
    }
    const auto ndim = static_cast<std::uint8_t>(buf[offset++]);
    if (ndim == 0 || ndim > kMaxDims) {
        throw ValidationError("read_tensor: " + path.string() + " has invalid ndim " +
                              std::to_string(ndim));
    }
    if (buf.size() < offset + 8u * ndim) {
        throw ValidationError("read_tensor: " + path.string() + " truncated in dims");
    }

    TensorData tensor;
    tensor.dtype = static_cast<Dtype>(dtype_byte);
    std::uint64_t count = 1;
    for (std::uint8_t i = 0; i < ndim; ++i) {
        const auto d = get<std::uint64_t>(buf, offset);
        if (d == 0) {
            throw ValidationError("read_tensor: " + path.string() +
                                  " has a zero-length dimension");
        }
        if (count > std::numeric_limits<std::uint64_t>::max() / d) {
            throw ValidationError("read_tensor: " + path.string() + " dims overflow");
        }
        count *= d;
        tensor.dims.push_back(d);
    }

    const std::size_t elem = dtype_size(tensor.dtype);
    if (buf.size() - offset != count * elem) {
        throw ValidationError("read_tensor: " + path.string() + " payload is " +
                              std::to_string(buf.size() - offset) + " bytes, expected " +
                              std::to_string(count * elem));
    }

    tensor.values.reserve(count);
    if (tensor.dtype == Dtype::f32) {
        for (std::uint64_t i = 0; i < count; ++i) {
            tensor.values.push_back(
                static_cast<double>(std::bit_cast<float>(get<std::uint32_t>(buf, offset))));
        }
    } else {
        for (std::uint64_t i = 0; i < count; ++i) {
            tensor.values.push_back(std::bit_cast<double>(get<std::uint64_t>(buf, offset)));
        }
    }
    return tensor;
}

TensorData cache_half_to_tensor(const std::vector<Matrix> &half, Dtype dtype) {
    TensorData tensor;
    tensor.dtype = dtype;
    tensor.dims = {half.size(), half.front().rows(), half.front().cols()};
    tensor.values.reserve(half.size() * half.front().size());
    for (const Matrix &m : half) {
        tensor.values.insert(tensor.values.end(), m.data().begin(), m.data().end());
    }
    return tensor;
}

namespace {

std::vector<Matrix> tensor_to_half(const TensorData &tensor, const std::string &what) {
    std::uint64_t g = 1, n = 0, d = 0;
    if (tensor.dims.size() == 3) {
        g = tensor.dims[0];
        n = tensor.dims[1];
        d = tensor.dims[2];
    } else if (tensor.dims.size() == 2) {
        n = tensor.dims[0];
        d = tensor.dims[1];
    } else {
        throw ValidationError(what + ": expected a (g, n, d) or (n, d) tensor, got ndim " +
                              std::to_string(tensor.dims.size()));
    }
    std::vector<Matrix> half;
    half.reserve(g);
    for (std::uint64_t i = 0; i < g; ++i) {
        const auto begin = tensor.values.begin() + static_cast<std::ptrdiff_t>(i * n * d);
        half.emplace_back(n, d, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n * d)));
    }
    return half;
}

} // namespace

KVCache cache_from_tensors(const TensorData &keys, const TensorData &values) {
    if (keys.dims != values.dims) {
        throw ValidationError("cache_from_tensors: key dims do not match value dims");
    }
    return KVCache(tensor_to_half(keys, "keys"), tensor_to_half(values, "values"));
}

} // namespace curdkv
