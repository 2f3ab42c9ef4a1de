#pragma once

// Bounded worker parallelism and schedule-independent randomness.
//
// Every parallel loop in the library writes into a pre-sized slot per index and
// reduces afterwards in index order, so results never depend on the worker
// count. Random streams are keyed by (master seed, counter...) rather than
// drawn from a shared generator.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <span>
#include <thread>
#include <vector>

namespace atlas {

namespace detail {
inline std::atomic<std::size_t>& jobs_setting() {
    static std::atomic<std::size_t> jobs{1};
    return jobs;
}
}  // namespace detail

inline std::size_t default_jobs() { return detail::jobs_setting().load(); }
inline void set_default_jobs(std::size_t jobs) { detail::jobs_setting().store(std::max<std::size_t>(1, jobs)); }

/// Runs f(i) for i in [0, n) on up to `jobs` threads. The first exception (by
/// index) is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
    jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, n));
    if (jobs == 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::size_t err_index = n;
    std::exception_ptr err;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (i < err_index) {
                    err_index = i;
                    err = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(jobs);
    for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    pool.clear();
    if (err) std::rethrow_exception(err);
}

template <class F>
void parallel_for(std::size_t n, F&& f) {
    parallel_for(n, default_jobs(), std::forward<F>(f));
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Derives an independent generator for one (seed, a, b) counter triple.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    const std::uint64_t k = splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b + 0x632BE59BD9B4E019ULL));
    return std::mt19937_64(k);
}

/// Unbiased draw from [0, n) by rejection; identical on every standard library.
inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    for (;;) {
        const std::uint64_t r = rng();
        if (r < limit) return static_cast<std::size_t>(r % bound);
    }
}

/// Fisher-Yates shuffle driven by uniform_index.
template <class T>
void portable_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double ordered_sum(std::span<const double> values) {
    CompensatedSum s;
    for (double v : values) s.add(v);
    return s.value();
}

inline double ordered_mean(std::span<const double> values) {
    return values.empty() ? 0.0 : ordered_sum(values) / static_cast<double>(values.size());
}

}  // namespace atlas
