#include "fsce/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace fsce {
namespace {

int read_env_cap() {
  const char* raw = std::getenv("FSCE_THREADS");
  if (!raw || !*raw) return 1;
  try {
    int v = std::stoi(raw);
    return std::max(1, v);
  } catch (...) {
    return 1;
  }
}

std::atomic<int>& cap_storage() {
  static std::atomic<int> cap{read_env_cap()};
  return cap;
}

}  // namespace

int thread_cap() { return cap_storage().load(); }

void set_thread_cap(int threads) { cap_storage().store(std::max(1, threads)); }

void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::min(thread_cap(), count);
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const int chunk = (count + workers - 1) / workers;
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        const int begin = t * chunk;
        const int end = std::min(count, begin + chunk);
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fsce
