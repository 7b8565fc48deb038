"""Session-wide test setup.

Raising the glibc mmap threshold keeps megabyte-scale numpy buffers inside
the malloc arena. Without it, every attention-sized allocation is a fresh
mmap that pays page faults, which makes wall-clock measurements (and the
whole suite) noisy and slow.
"""


def _quiet_allocator():
    try:
        import ctypes

        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-3, 1 << 26)  # M_MMAP_THRESHOLD = 64 MB
    except OSError:
        pass


_quiet_allocator()
