#pragma once

// Checkpoint container, all integers and floats little-endian:
//   "MLCKPT" | u32 version | u64 metadata length | metadata JSON (UTF-8)
//   | u32 array count | arrays...
// Each array: u32 name length | name | u32 rank | u64 dims[rank] | f64 data.
// The metadata holds the network configuration under "network" plus any
// caller-supplied fields under "extra".

#include "midlevel/nn/network.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

namespace midlevel::nn {

inline constexpr char kCheckpointMagic[6] = {'M', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const NetworkConfig& c)
{
    nlohmann::json j;
    j["in_channels"] = c.in_channels;
    j["height"] = c.height;
    j["width"] = c.width;
    j["conv_channels"] = c.conv_channels;
    for (const auto& b : c.inception)
        j["inception"].push_back({b.b1x1, b.b3x3, b.b5x5, b.pool});
    j["embedding"] = c.embedding;
    j["n_tags"] = c.n_tags;
    j["midlevel_head"] = c.midlevel_head;
    j["head_hidden"] = c.head_hidden;
    j["n_midlevel"] = c.n_midlevel;
    j["seed"] = c.seed;
    return j;
}

inline NetworkConfig config_from_json(const nlohmann::json& j)
{
    NetworkConfig c;
    try {
        c.in_channels = j.at("in_channels").get<std::size_t>();
        c.height = j.at("height").get<std::size_t>();
        c.width = j.at("width").get<std::size_t>();
        c.conv_channels = j.at("conv_channels").get<std::array<std::size_t, 5>>();
        const auto inc = j.at("inception");
        if (inc.size() != 2)
            throw Error(Errc::CorruptFile, "checkpoint needs two inception blocks");
        for (std::size_t i = 0; i < 2; ++i) {
            const auto b = inc.at(i).get<std::array<std::size_t, 4>>();
            c.inception[i] = {b[0], b[1], b[2], b[3]};
        }
        c.embedding = j.at("embedding").get<std::size_t>();
        c.n_tags = j.at("n_tags").get<std::size_t>();
        c.midlevel_head = j.at("midlevel_head").get<bool>();
        c.head_hidden = j.at("head_hidden").get<std::array<std::size_t, 2>>();
        c.n_midlevel = j.at("n_midlevel").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::CorruptFile, std::string("bad network metadata: ") + e.what());
    }
    return c;
}

namespace detail {

template <class T>
void put(std::ostream& os, T v)
{
    static_assert(std::is_arithmetic_v<T>);
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        std::reverse(b, b + sizeof(T));
        os.write(reinterpret_cast<const char*>(b), sizeof(T));
    } else {
        os.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
}

template <class T>
T get(std::istream& is)
{
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T)))
        throw Error(Errc::CorruptFile, "checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

} // namespace detail

inline void save_checkpoint(Network& net, const std::filesystem::path& path, const nlohmann::json& extra = {})
{
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw Error(Errc::IoFailure, "cannot write " + path.string());
    nlohmann::json meta;
    meta["network"] = config_to_json(net.config());
    meta["extra"] = extra.is_null() ? nlohmann::json::object() : extra;
    const std::string text = meta.dump();
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    detail::put<std::uint64_t>(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto& params = net.parameters();
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const Shape& s = p.param->value.shape();
        detail::put<std::uint32_t>(os, 4);
        for (std::size_t d : {s.n, s.c, s.h, s.w})
            detail::put<std::uint64_t>(os, d);
        for (double v : p.param->value.values())
            detail::put<double>(os, v);
    }
    if (!os)
        throw Error(Errc::IoFailure, "write failed for " + path.string());
}

struct LoadedCheckpoint {
    Network network;
    nlohmann::json extra;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error(Errc::MissingCheckpoint, "cannot open " + path.string());
    char magic[sizeof kCheckpointMagic];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw Error(Errc::CorruptFile, path.string() + " is not a checkpoint");
    const auto version = detail::get<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw Error(Errc::UnsupportedFormat, "checkpoint version " + std::to_string(version));
    const auto meta_len = detail::get<std::uint64_t>(is);
    if (meta_len > (1u << 26))
        throw Error(Errc::CorruptFile, "metadata too large");
    std::string text(meta_len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(meta_len)))
        throw Error(Errc::CorruptFile, "checkpoint truncated");
    nlohmann::json meta = nlohmann::json::parse(text, nullptr, false);
    if (meta.is_discarded() || !meta.contains("network"))
        throw Error(Errc::CorruptFile, "bad checkpoint metadata");

    LoadedCheckpoint out{Network(config_from_json(meta["network"])), meta.value("extra", nlohmann::json::object())};
    std::map<std::string, Parameter*> by_name;
    for (const auto& p : out.network.parameters())
        by_name[p.name] = p.param;

    const auto count = detail::get<std::uint32_t>(is);
    if (count != by_name.size())
        throw Error(Errc::ShapeMismatch, "checkpoint has " + std::to_string(count) + " arrays, network needs " +
                                             std::to_string(by_name.size()));
    for (std::uint32_t a = 0; a < count; ++a) {
        const auto name_len = detail::get<std::uint32_t>(is);
        if (name_len > 4096)
            throw Error(Errc::CorruptFile, "array name too long");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len))
            throw Error(Errc::CorruptFile, "checkpoint truncated");
        const auto rank = detail::get<std::uint32_t>(is);
        if (rank != 4)
            throw Error(Errc::CorruptFile, "array " + name + " has rank " + std::to_string(rank));
        Shape s;
        s.n = detail::get<std::uint64_t>(is);
        s.c = detail::get<std::uint64_t>(is);
        s.h = detail::get<std::uint64_t>(is);
        s.w = detail::get<std::uint64_t>(is);
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw Error(Errc::ShapeMismatch, "unexpected array " + name);
        if (!(it->second->value.shape() == s))
            throw Error(Errc::ShapeMismatch, "array " + name + " has shape " + to_string(s));
        for (double& v : it->second->value.values())
            v = detail::get<double>(is);
    }
    out.network.mark_modified();
    return out;
}

} // namespace midlevel::nn
