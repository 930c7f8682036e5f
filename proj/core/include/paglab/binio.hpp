#pragma once

#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace paglab {

// Little-endian binary file helpers shared by the checkpoint and rep-store
// formats. Hosts are assumed little-endian (checked at startup by the CLI).

inline void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64(std::ostream& os, double v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f64_span(std::ostream& os, std::span<const double> v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void write_lp_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw std::runtime_error(std::string("truncated file while reading ") + what);
    return v;
}

inline void read_f64_span(std::istream& is, std::span<double> out, const char* what) {
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(double)));
    if (!is) throw std::runtime_error(std::string("truncated file while reading ") + what);
}

inline std::string read_lp_string(std::istream& is, const char* what) {
    std::uint32_t len = read_u32(is, what);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw std::runtime_error(std::string("truncated file while reading ") + what);
    return s;
}

inline void read_magic(std::istream& is, const char* expected, const char* format) {
    char magic[8] = {};
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != expected) {
        throw std::runtime_error(std::string(format) + ": bad magic, not a " + format + " file");
    }
}

/// FNV-1a 64-bit, used for content hashes in run manifests and store headers.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(std::span<const double> values, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(std::span<const unsigned char>(reinterpret_cast<const unsigned char*>(values.data()),
                                                values.size() * sizeof(double)),
                 h);
}

std::uint64_t hash_file(const std::string& path);
std::string hex64(std::uint64_t v);

} // namespace paglab
