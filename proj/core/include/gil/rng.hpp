#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace gil {

/// Deterministic counter-based random stream (splitmix64 core).
///
/// Every stochastic site in the pipeline derives its own stream as
/// derive_stream(seed, site_name, indices); streams are therefore
/// independent of execution order and of which strategies run, which is
/// what makes the replay(empty)==baseline and distill(lambda=0)==baseline
/// identities bit-exact. The site names in use are listed in rng.cpp.
class Rng {
public:
    explicit Rng(std::uint64_t state) : state_(state) {}

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();

    /// Uniform integer in [0, n), unbiased, n >= 1.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Standard normal (Box-Muller; values are produced in pairs).
    double normal();

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct values from [0, n), in selection order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(std::string_view s);

/// Derive the seed of a named random stream from the experiment seed.
/// Identical (seed, site, indices) always yields the identical stream.
std::uint64_t derive_stream(std::uint64_t seed, std::string_view site,
                            std::initializer_list<std::uint64_t> indices = {});

/// Convenience: an Rng positioned at the derived stream.
Rng stream_rng(std::uint64_t seed, std::string_view site,
               std::initializer_list<std::uint64_t> indices = {});

}  // namespace gil
