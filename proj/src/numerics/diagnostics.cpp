#include "cdpcl/numerics/diagnostics.hpp"

#include <array>
#include <atomic>
#include <cstddef>

namespace cdpcl::diagnostics {
namespace {

constexpr auto kKinds = static_cast<std::size_t>(Warning::kCount);
std::array<std::atomic<std::uint64_t>, kKinds> counters{};

}  // namespace

void record(Warning kind) {
  counters[static_cast<std::size_t>(kind)].fetch_add(1, std::memory_order_relaxed);
}

std::uint64_t count(Warning kind) {
  return counters[static_cast<std::size_t>(kind)].load(std::memory_order_relaxed);
}

void reset() {
  for (auto& c : counters) c.store(0, std::memory_order_relaxed);
}

}  // namespace cdpcl::diagnostics
