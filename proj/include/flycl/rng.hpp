#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace flycl {

// Finalizer from the splitmix64 generator. Used to mix seeds so that
// derived substreams are decorrelated from the master seed and from
// each other.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// One master seed fans out into deterministic substreams keyed by tags,
// e.g. derive_seed(seed, {TAG_SHUFFLE, task, epoch}).
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t));
    return h;
}

// Substream tags. Values are arbitrary but frozen: changing them changes
// every seeded result.
namespace seed_tag {
inline constexpr std::uint64_t kProjection = 0x01;
inline constexpr std::uint64_t kHeadInit = 0x02;
inline constexpr std::uint64_t kPreInit = 0x03;
inline constexpr std::uint64_t kData = 0x04;
inline constexpr std::uint64_t kShuffle = 0x05;
inline constexpr std::uint64_t kModel = 0x06;
inline constexpr std::uint64_t kPermutation = 0x07;
inline constexpr std::uint64_t kTaskSample = 0x08;
inline constexpr std::uint64_t kCbp = 0x09;
inline constexpr std::uint64_t kProbe = 0x0a;
inline constexpr std::uint64_t kImbalance = 0x0b;
}  // namespace seed_tag

// Seeded generator with hand-rolled distributions. std:: distributions are
// implementation-defined, so results would differ across standard libraries;
// everything here is pinned to the mt19937_64 bit stream.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Unbiased integer in [0, n). Rejection sampling on the top range.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so log is finite
        const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform01();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * M_PI * u2;
        spare_ = mag * std::sin(ang);
        has_spare_ = true;
        return mag * std::cos(ang);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // r distinct values from [0, n), sorted ascending. Floyd's algorithm,
    // O(r^2) scan acceptable for the small degrees used here.
    std::vector<std::uint32_t> sample_indices(std::uint32_t n, std::uint32_t r) {
        std::vector<std::uint32_t> out;
        out.reserve(r);
        for (std::uint32_t j = n - r; j < n; ++j) {
            auto t = static_cast<std::uint32_t>(below(j + 1));
            if (std::find(out.begin(), out.end(), t) != out.end()) {
                out.push_back(j);
            } else {
                out.push_back(t);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

  private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace flycl
