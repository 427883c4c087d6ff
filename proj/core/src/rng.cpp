#include "gil/rng.hpp"

#include <cmath>
#include <numbers>

#include "gil/errors.hpp"

// Stream site registry. One experiment seed; every stochastic site derives
// its stream as derive_stream(seed, site, indices):
//
//   model.init                                   parameter initialization
//   datagen.bias                                 per-gene bias draw
//   datagen.crucial                              planted crucial-gene choice
//   datagen.sample          {sample}             pretrain sample generation
//   datagen.down.sample     {name_hash, sample}  downstream sample generation
//   datagen.down.labels     {name_hash}          balanced label shuffle
//   plan.partition_genes                         base/stage gene split
//   plan.partition_dataset                       stage sample blocks
//   split.heldout           {stage}              per-stage train/heldout split
//   view.truncate           {stage, sample}      stage-view 512-truncation
//   train.shuffle           {stage, epoch}       epoch-level data order
//   train.mask              {stage, epoch, batch} training mask sampling
//   replay.select           {stage}              replay buffer subset
//   eval.mask               {sample}             evaluation mask (eval_seed)
//   eval.truncate           {stage, sample}      evaluation views (eval_seed)
//   probe.view              {name_hash, sample}  downstream probe views
//   probe.split             {name_hash}          probe 80/20 split
//   probe.init              {name_hash}          probe weight init
//   probe.shuffle           {name_hash, epoch}   probe epoch order
//   sep.split / sep.init / sep.shuffle           separability-check classifier

namespace gil {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() { return splitmix64(state_); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw UsageError("uniform_int: n must be >= 1");
    // rejection sampling for exact uniformity
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
    if (k > n) throw UsageError("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    // partial Fisher-Yates: first k entries become the sample
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(uniform_int(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::uint64_t derive_stream(std::uint64_t seed, std::string_view site,
                            std::initializer_list<std::uint64_t> indices) {
    std::uint64_t h = fnv1a64(site);
    std::uint64_t s = h ^ seed;
    std::uint64_t mixed = splitmix64(s);
    for (std::uint64_t idx : indices) {
        s ^= splitmix64(s) ^ (idx * 0x2545f4914f6cdd1dull + 0x9e3779b97f4a7c15ull);
        mixed = splitmix64(s);
    }
    return mixed;
}

Rng stream_rng(std::uint64_t seed, std::string_view site,
               std::initializer_list<std::uint64_t> indices) {
    return Rng(derive_stream(seed, site, indices));
}

}  // namespace gil
