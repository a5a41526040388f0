#ifndef ACNET_COMMON_HPP
#define ACNET_COMMON_HPP

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace acnet {

enum class Precision { f32, f64 };

inline const char* precision_name(Precision p) {
    return p == Precision::f32 ? "f32" : "f64";
}

template <typename T>
constexpr Precision precision_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "only float and double are supported");
    if constexpr (std::is_same_v<T, float>)
        return Precision::f32;
    else
        return Precision::f64;
}

[[noreturn]] inline void fail_invalid(const std::string& msg) { throw std::invalid_argument(msg); }
[[noreturn]] inline void fail_runtime(const std::string& msg) { throw std::runtime_error(msg); }

namespace detail {
inline std::atomic<int>& max_threads_slot() {
    static std::atomic<int> v{0};  // 0 = use hardware concurrency
    return v;
}
}  // namespace detail

inline void set_max_threads(int n) { detail::max_threads_slot().store(n); }

inline int max_threads() {
    int v = detail::max_threads_slot().load();
    if (v > 0) return v;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Splits [0, count) into contiguous chunks, one per worker. Work inside a
// chunk runs in index order, so any per-index reduction order is unaffected
// by the number of threads.
template <typename Fn>
void parallel_for(std::int64_t count, std::int64_t min_items_per_thread, Fn&& fn) {
    if (count <= 0) return;
    int threads = max_threads();
    std::int64_t chunks = std::min<std::int64_t>(threads, count / std::max<std::int64_t>(1, min_items_per_thread));
    if (chunks <= 1) {
        fn(std::int64_t{0}, count);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(chunks - 1));
    std::int64_t per = (count + chunks - 1) / chunks;
    for (std::int64_t k = 1; k < chunks; ++k) {
        std::int64_t lo = k * per;
        std::int64_t hi = std::min(count, lo + per);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    fn(std::int64_t{0}, std::min(count, per));
    for (auto& t : pool) t.join();
}

}  // namespace acnet

#endif
