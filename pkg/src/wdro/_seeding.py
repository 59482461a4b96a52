"""Seed derivation: every random stream comes from one master seed.

A child seed is obtained by folding each index of its path into the master
seed with the splitmix64 finalizer, so streams for different trials,
restarts or instances never share state and do not depend on execution order.
"""

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Child seed for ``path`` under ``master``."""
    s = splitmix64(int(master) & _MASK)
    for idx in path:
        s = splitmix64(s ^ (int(idx) & _MASK))
    return s
