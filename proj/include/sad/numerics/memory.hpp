#pragma once

namespace sad {

/// Keeps freed heap blocks in the process instead of returning each large
/// block to the kernel. Training and sampling allocate and free the same
/// large temporaries every step; without this glibc maps and unmaps them
/// each time. No effect on other C libraries. Call once at program start.
void retain_freed_memory();

}  // namespace sad
