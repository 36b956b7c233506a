#pragma once

// Optional download helper. Every pipeline also accepts local files, so
// this header is the only one that needs OpenSSL and cpp-httplib.

#include "midlevel/error.hpp"

#include "httplib.h"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace midlevel::io {

/// Lowercase hex SHA-256 of a file.
inline std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw Error(Errc::IoFailure, "cannot open " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw Error(Errc::IoFailure, "sha256 unavailable");
    std::array<char, 1 << 16> buf;
    while (is) {
        is.read(buf.data(), buf.size());
        if (is.gcount() > 0)
            EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    std::string hex;
    char two[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(two, sizeof two, "%02x", md[i]);
        hex += two;
    }
    return hex;
}

namespace detail {

struct ParsedUrl {
    std::string scheme, host_port, target;
};

inline ParsedUrl split_url(std::string_view url)
{
    const auto sep = url.find("://");
    if (sep == std::string_view::npos)
        throw Error(Errc::InvalidArgument, "not a URL: " + std::string(url));
    ParsedUrl u;
    u.scheme = std::string(url.substr(0, sep));
    for (char& c : u.scheme)
        c = static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
    const std::string_view rest = url.substr(sep + 3);
    const auto slash = rest.find('/');
    u.host_port = std::string(rest.substr(0, slash));
    u.target = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
    return u;
}

inline void http_get(const ParsedUrl& u, const std::filesystem::path& dest)
{
    httplib::Client cli(u.scheme + "://" + u.host_port);
    cli.set_follow_location(true);
    cli.set_connection_timeout(30);
    cli.set_read_timeout(300);
    std::ofstream os(dest, std::ios::binary | std::ios::trunc);
    if (!os)
        throw Error(Errc::IoFailure, "cannot write " + dest.string());
    int status = 0;
    auto res = cli.Get(
        u.target,
        [&](const httplib::Response& r) {
            status = r.status;
            return r.status == 200;
        },
        [&](const char* data, std::size_t n) {
            os.write(data, static_cast<std::streamsize>(n));
            return static_cast<bool>(os);
        });
    os.close();
    if (!res || status != 200) {
        std::error_code ec;
        std::filesystem::remove(dest, ec);
        if (!res && status == 0)
            throw Error(Errc::NetworkFailure, "GET " + u.host_port + u.target + ": " + httplib::to_string(res.error()));
        throw Error(Errc::NetworkFailure, "GET " + u.host_port + u.target + ": HTTP " + std::to_string(status));
    }
}

} // namespace detail

/// Copies `url` (file://, http:// or https://) to `dest`. With a checksum,
/// a mismatching download is deleted and ChecksumMismatch thrown.
inline void fetch_archive(std::string_view url, const std::filesystem::path& dest,
                          const std::optional<std::string>& expected_sha256 = std::nullopt)
{
    const detail::ParsedUrl u = detail::split_url(url);
    std::error_code dir_ec;
    if (dest.has_parent_path())
        std::filesystem::create_directories(dest.parent_path(), dir_ec);
    if (u.scheme == "file") {
        // file:///abs/path has an empty host
        const std::filesystem::path src = u.host_port.empty() ? u.target : u.host_port + u.target;
        std::error_code ec;
        std::filesystem::copy_file(src, dest, std::filesystem::copy_options::overwrite_existing, ec);
        if (ec)
            throw Error(Errc::NetworkFailure, "cannot read " + src.string() + ": " + ec.message());
    } else if (u.scheme == "http" || u.scheme == "https") {
        detail::http_get(u, dest);
    } else {
        throw Error(Errc::InvalidArgument, "unsupported URL scheme '" + u.scheme + "'");
    }
    if (expected_sha256) {
        std::string want = *expected_sha256;
        for (char& c : want)
            c = static_cast<char>(c >= 'A' && c <= 'F' ? c - 'A' + 'a' : c);
        const std::string got = sha256_file(dest);
        if (got != want) {
            std::filesystem::remove(dest);
            throw Error(Errc::ChecksumMismatch, "sha256 of " + std::string(url) + " is " + got + ", expected " + want);
        }
    }
}

} // namespace midlevel::io
