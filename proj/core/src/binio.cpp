#include "paglab/binio.hpp"

#include <cstdio>

namespace paglab {

std::uint64_t hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open file for hashing: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (is) {
        is.read(buf, sizeof buf);
        std::streamsize got = is.gcount();
        h = fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(buf),
                                                 static_cast<std::size_t>(got)),
                  h);
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace paglab
