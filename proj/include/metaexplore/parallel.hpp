#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace metaexplore {

enum class Execution { serial, parallel };

inline int max_threads()
{
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// n <= 0 keeps the runtime default.
inline void set_threads(int n)
{
#if defined(_OPENMP)
    if (n > 0) {
        omp_set_num_threads(n);
    }
#else
    (void)n;
#endif
}

// Runs body(i) for i in [0, n). Results must be written to slot i so the
// outcome is independent of thread count and scheduling; the serial path is
// the reference the parallel one is tested against. The first exception
// thrown by any iteration is rethrown after the loop.
template <class Body>
void for_each_index(std::size_t n, Execution exec, Body&& body)
{
    if (exec == Execution::serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) {
            body(i);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long long i = 0; i < count; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) {
                failure = std::current_exception();
            }
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace metaexplore
