#ifndef CASGAN_SERIALIZE_HPP
#define CASGAN_SERIALIZE_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "casgan/tensor.hpp"

namespace casgan {

// Binary container holding named tensors: magic, version, dtype width, count,
// then per tensor {name, rank, dims, raw data}. Little-endian on-disk layout.

namespace detail {

constexpr std::uint32_t kBlobMagic = 0x42474743u; // "CGGB"
constexpr std::uint32_t kBlobVersion = 1;

template <typename V>
void write_pod(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::istream& is) {
    V v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is)
        throw io_error("unexpected end of tensor container");
    return v;
}

} // namespace detail

template <typename T>
void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor<T>*>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw io_error("cannot open '" + path + "' for writing");
    detail::write_pod<std::uint32_t>(os, detail::kBlobMagic);
    detail::write_pod<std::uint32_t>(os, detail::kBlobVersion);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(sizeof(T)));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t->rank()));
        for (std::int64_t d : t->shape())
            detail::write_pod<std::int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t->data()),
                 static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(t->numel())));
    }
    if (!os)
        throw io_error("write failure on '" + path + "'");
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw io_error("cannot open '" + path + "'");
    if (detail::read_pod<std::uint32_t>(is) != detail::kBlobMagic)
        throw io_error("'" + path + "' is not a tensor container");
    if (detail::read_pod<std::uint32_t>(is) != detail::kBlobVersion)
        throw io_error("unsupported container version in '" + path + "'");
    if (detail::read_pod<std::uint32_t>(is) != sizeof(T))
        throw io_error("dtype width mismatch in '" + path + "'");
    const std::uint32_t count = detail::read_pod<std::uint32_t>(is);
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = detail::read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const std::uint32_t rank = detail::read_pod<std::uint32_t>(is);
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape)
            d = detail::read_pod<std::int64_t>(is);
        Tensor<T> t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(sizeof(T) * static_cast<std::size_t>(t.numel())));
        if (!is)
            throw io_error("truncated tensor data in '" + path + "'");
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

} // namespace casgan

#endif
