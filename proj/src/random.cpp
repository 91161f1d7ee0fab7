#include "rwmatch/random.hpp"

#include <algorithm>
#include <cmath>

namespace rwmatch {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(root) ^ stream) ^ index);
}

std::size_t Rng::below(std::size_t n) {
    // Rejection sampling removes modulo bias.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

std::vector<double> Rng::dirichlet_flat(std::size_t n) {
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& v : w) {
        v = -std::log1p(-uniform());
        total += v;
    }
    for (auto& v : w) v /= total;
    return w;
}

std::size_t Rng::categorical(std::span<const double> cumulative) {
    const double u = uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    auto idx = static_cast<std::size_t>(it - cumulative.begin());
    if (idx < cumulative.size()) return idx;
    // u rounded up to the total: fall back to the last index with mass.
    idx = cumulative.size() - 1;
    while (idx > 0 && cumulative[idx] == cumulative[idx - 1]) --idx;
    return idx;
}

}  // namespace rwmatch
