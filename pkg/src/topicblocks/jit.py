"""numba import shim: falls back to plain Python when numba is missing."""

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba present in normal installs
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
