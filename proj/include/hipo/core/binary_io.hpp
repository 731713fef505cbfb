#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "hipo/core/error.hpp"

namespace hipo::binio {

// Little-endian hosts only; the containers written here are not meant to be
// portable to big-endian machines.

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ParseError("unexpected end of binary stream");
    return v;
}

template <class T>
void put_array(std::ostream& out, const std::vector<T>& v) {
    put<std::uint64_t>(out, v.size());
    if (!v.empty()) out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
std::vector<T> get_array(std::istream& in, std::uint64_t max_len = (1ULL << 34)) {
    auto n = get<std::uint64_t>(in);
    if (n > max_len) throw ParseError("array length out of range");
    std::vector<T> v(n);
    if (n) in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw ParseError("truncated array");
    return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
    put<std::uint64_t>(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
    auto n = get<std::uint64_t>(in);
    if (n > (1ULL << 32)) throw ParseError("string length out of range");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw ParseError("truncated string");
    return s;
}

inline void expect_magic(std::istream& in, const char* magic) {
    std::string got(std::strlen(magic), '\0');
    in.read(got.data(), static_cast<std::streamsize>(got.size()));
    if (!in || got != magic) throw ParseError(std::string("bad magic, expected ") + magic);
}

}  // namespace hipo::binio
