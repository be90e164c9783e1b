#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ruinbound {

/// Default worker count: RUINBOUND_JOBS if set, otherwise hardware concurrency.
inline unsigned default_jobs() {
  if (const char* env = std::getenv("RUINBOUND_JOBS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(block_index, begin, end) over [0, count) split into fixed-size blocks.
/// Block boundaries depend only on count and block_size, never on the number of workers.
template <class Body>
void parallel_blocks(std::size_t count, std::size_t block_size, unsigned jobs, Body&& body) {
  if (count == 0) return;
  block_size = std::max<std::size_t>(1, block_size);
  const std::size_t blocks = (count + block_size - 1) / block_size;
  const auto run = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    body(b, begin, std::min(count, begin + block_size));
  };
  jobs = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), blocks));
  if (jobs == 1) {
    for (std::size_t b = 0; b < blocks; ++b) run(b);
    return;
  }
  std::mutex mutex;
  std::size_t next = 0;
  std::exception_ptr failure;
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        std::size_t b;
        {
          std::lock_guard lock(mutex);
          if (next >= blocks || failure) return;
          b = next++;
        }
        try {
          run(b);
        } catch (...) {
          std::lock_guard lock(mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace ruinbound
