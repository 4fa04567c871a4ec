#pragma once

#include <cstddef>
#include <functional>

namespace alphalaw {

/// Worker count used when a call does not pass one. 0 means hardware threads.
void set_default_jobs(unsigned jobs) noexcept;
unsigned default_jobs() noexcept;

/// Runs fn(i) for i in [0, n). Callers write results into slot i, so the
/// output never depends on the thread count. If any call throws, the
/// exception from the lowest index is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned jobs = 0);

}  // namespace alphalaw
