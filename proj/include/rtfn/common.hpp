#ifndef RTFN_COMMON_HPP
#define RTFN_COMMON_HPP

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rtfn {

// Error taxonomy used across the library. Dimension problems, API misuse,
// bad input data and bad configuration are distinct failure kinds so the
// CLI can report them uniformly.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shapes are row-major extents, rank 1..3.
using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s);

using Rng = std::mt19937_64;

// Uniform double in [0, 1). std::uniform_real_distribution is
// implementation-defined, so draws are derived from raw engine output to
// keep every seeded run reproducible across toolchains.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Index in [0, n). Rejection-sampled to stay unbiased.
std::size_t uniform_index(Rng& rng, std::size_t n);

// Derive an independent stream from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Parse flat "key = value" text ('#' starts a comment, blank lines ignored).
// Duplicate keys are a ConfigError. Order of first appearance is preserved.
std::vector<std::pair<std::string, std::string>> parse_flat_kv(const std::string& text);

// In-place Fisher-Yates; std::shuffle is implementation-defined.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = uniform_index(rng, i);
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace rtfn

#endif
