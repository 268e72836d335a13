#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpdnet {

// Shape order is (batch, height, width, channels) for 4-d tensors.
using Shape = std::vector<int>;

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw Error("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Deterministic per-subsystem seed derivation: one root seed, labeled splits
// (FNV-1a over the label mixed into the root).
inline uint64_t derive_seed(uint64_t root, const std::string& label) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ull;
    }
    h ^= root + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    // splitmix64 finalizer
    h ^= h >> 30; h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 27; h *= 0x94d049bb133111ebull;
    h ^= h >> 31;
    return h;
}

}  // namespace dpdnet
