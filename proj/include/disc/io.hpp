#pragma once

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "disc/error.hpp"

namespace disc {

/// Writes `bytes` to a temporary sibling of `path`, fsyncs it and renames it
/// over `path`. Readers observe either the old file or the complete new one.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    const std::filesystem::path dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    std::string tmpl = (dir / ("." + path.filename().string() + ".tmp-XXXXXX")).string();
    int fd = ::mkstemp(tmpl.data());
    if (fd < 0) throw Error("cannot create temporary file in " + dir.string() + ": " + std::strerror(errno));
    auto fail = [&](const std::string& what) {
        const std::string msg = what + " " + tmpl + ": " + std::strerror(errno);
        ::close(fd);
        ::unlink(tmpl.c_str());
        return Error(msg);
    };
    std::size_t written = 0;
    while (written < bytes.size()) {
        ssize_t n = ::write(fd, bytes.data() + written, bytes.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw fail("write failed for");
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) throw fail("fsync failed for");
    if (::fchmod(fd, 0644) != 0) throw fail("chmod failed for");
    if (::close(fd) != 0) {
        ::unlink(tmpl.c_str());
        throw Error("close failed for " + tmpl);
    }
    if (::rename(tmpl.c_str(), path.c_str()) != 0) {
        const std::string msg = std::string("rename to ") + path.string() + " failed: " + std::strerror(errno);
        ::unlink(tmpl.c_str());
        throw Error(msg);
    }
    int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

/// Shortest decimal form that round-trips the double exactly.
inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace disc
