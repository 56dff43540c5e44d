#include "sad/numerics/memory.hpp"

#include <cstdlib>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace sad {

void retain_freed_memory() {
#if defined(__GLIBC__)
  // Large blocks come from the heap rather than fresh mappings (glibc still
  // falls back to mmap when the heap cannot grow), and freed memory stays
  // mapped up to the trim threshold.
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace sad
