#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "acnn/adam.hpp"
#include "acnn/errors.hpp"
#include "acnn/tensor.hpp"

namespace acnn {

// Little-endian binary tensor table:
//   magic "ACNN", version u32, count u32, then per entry:
//   name length u16, UTF-8 name, dtype tag u8 (0 = f32), rank u8,
//   dims u32 each, row-major f32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
    // Assumes a little-endian host, as everything this project targets is.
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint: unexpected end of file");
    return v;
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const ParamTable<float>& entries) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
        os.write("ACNN", 4);
        detail::write_le<std::uint32_t>(os, kCheckpointVersion);
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
        for (const auto& [name, tensor] : entries) {
            if (name.size() > 0xffff) throw InvalidArgument("checkpoint: entry name too long");
            detail::write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            detail::write_le<std::uint8_t>(os, 0);  // dtype f32
            detail::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(tensor.rank()));
            for (int d = 0; d < tensor.rank(); ++d)
                detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.dim(d)));
            os.write(reinterpret_cast<const char*>(tensor.data()),
                     static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(tensor.numel())));
        }
        if (!os) throw IoError("checkpoint write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

inline ParamTable<float> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "ACNN", 4) != 0)
        throw IoError("checkpoint: bad magic in " + path.string());
    const auto version = detail::read_le<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    const auto count = detail::read_le<std::uint32_t>(is);

    ParamTable<float> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = detail::read_le<std::uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto dtype = detail::read_le<std::uint8_t>(is);
        if (dtype != 0) throw IoError("checkpoint: unknown dtype tag for " + name);
        const auto rank = detail::read_le<std::uint8_t>(is);
        std::vector<std::int64_t> shape;
        std::int64_t numel = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const auto dim = detail::read_le<std::uint32_t>(is);
            shape.push_back(static_cast<std::int64_t>(dim));
            numel *= dim;
        }
        std::vector<float> data(static_cast<std::size_t>(numel));
        is.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(sizeof(float) * data.size()));
        if (!is) throw IoError("checkpoint: truncated payload for " + name);
        entries.emplace(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    }
    return entries;
}

// Strings ride along as one byte per f32 element, which keeps the format to
// a single dtype while letting a checkpoint carry its own network config.
inline Tensor<float> string_to_tensor(const std::string& s) {
    std::vector<float> data(s.size());
    for (std::size_t i = 0; i < s.size(); ++i)
        data[i] = static_cast<float>(static_cast<unsigned char>(s[i]));
    if (data.empty()) data.push_back(0.0f);
    const auto length = static_cast<std::int64_t>(data.size());
    return Tensor<float>({length}, std::move(data));
}

inline std::string tensor_to_string(const Tensor<float>& t) {
    std::string s;
    s.reserve(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const auto c = static_cast<unsigned char>(t[i]);
        if (c != 0) s.push_back(static_cast<char>(c));
    }
    return s;
}

}  // namespace acnn
