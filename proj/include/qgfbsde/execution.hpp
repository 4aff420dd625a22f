#pragma once

#include <cstddef>
#include <exception>
#include <limits>

#include <omp.h>

namespace qgfbsde {

/// Selects between the OpenMP kernels and a single-threaded run of the same loop.
enum class Execution { serial, parallel };

/// Cap the OpenMP worker count; 0 restores the runtime default.
void set_worker_count(int n);
int worker_count();

/// Runs body(i) for i in [0, n). Iterations must be independent. If any iteration throws,
/// the exception from the lowest failing index is rethrown after the loop, so error
/// reporting does not depend on scheduling.
template <class Body>
void parallel_for(std::size_t n, Execution exec, Body&& body) {
    if (exec == Execution::serial || n < 2) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::size_t first_bad = std::numeric_limits<std::size_t>::max();
    std::exception_ptr error;
    const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < count; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        try {
            body(idx);
        } catch (...) {
#pragma omp critical(qgfbsde_parallel_for_error)
            {
                if (idx < first_bad) {
                    first_bad = idx;
                    error = std::current_exception();
                }
            }
        }
    }
    if (error) std::rethrow_exception(error);
}

} // namespace qgfbsde
