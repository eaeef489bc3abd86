#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace tenc {

// Training allocates and frees the same large activation buffers every step.
// With glibc's defaults those go through mmap/munmap and each step pays the
// page faults again; keeping them on the heap roughly halves step time.
// Call once at program start. No-op off glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace tenc
