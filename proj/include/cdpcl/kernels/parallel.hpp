#pragma once

namespace cdpcl::kernels {

/// Worker threads used by the parallel kernels. Initialized from the
/// CDPCL_THREADS environment variable; defaults to 1 so runs are reproducible
/// bit-for-bit. Every parallel kernel reduces in a fixed order, so results do
/// not depend on this value.
int thread_count();
void set_thread_count(int threads);

/// Keeps freed tensor buffers in the heap for reuse. Activation buffers are
/// megabytes each, and by default glibc maps and unmaps them on every step.
void retain_large_buffers();

}  // namespace cdpcl::kernels
