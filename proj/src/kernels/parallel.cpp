#include "cdpcl/kernels/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <cstdlib>
#include <string>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace cdpcl::kernels {
namespace {

int threads_from_env() {
  const char* env = std::getenv("CDPCL_THREADS");
  if (!env) return 1;
  try {
    return std::max(1, std::stoi(env));
  } catch (...) {
    return 1;
  }
}

std::atomic<int>& threads() {
  static std::atomic<int> value{threads_from_env()};
  return value;
}

}  // namespace

int thread_count() { return threads().load(std::memory_order_relaxed); }

void set_thread_count(int n) { threads().store(std::max(1, n), std::memory_order_relaxed); }

void retain_large_buffers() {
#ifdef __GLIBC__
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 64 << 20);
  });
#endif
}

}  // namespace cdpcl::kernels
