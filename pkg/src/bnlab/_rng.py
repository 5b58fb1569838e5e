"""Counter-based random number generation for reproducible parallel ensembles.

Each path draws from its own stream, keyed by (master seed, path index), so
results do not depend on scheduling order and a path re-run with a longer
horizon replays its prefix exactly.  The generator is the splitmix64
construction: output k of stream ``key`` is ``mix64(key + (k+1)*GOLDEN)``,
with ``mix64`` the Stafford variant-13 finalizer.  Normals come from the
Box-Muller transform, two uniforms per pair.

All functions are numba-jitted and also callable from plain Python, which
is what the tests use to cross-check kernel arithmetic.
"""

import math

import numba as nb
import numpy as np
from numba import njit

_U64 = np.uint64
GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX_A = _U64(0xBF58476D1CE4E5B9)
_MIX_B = _U64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0
_TWO_PI = 2.0 * math.pi


@njit(nb.uint64(nb.uint64), cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _U64(30))) * _MIX_A
    z = (z ^ (z >> _U64(27))) * _MIX_B
    return z ^ (z >> _U64(31))


@njit(nb.uint64(nb.uint64, nb.uint64), cache=True, inline="always")
def stream_key(master_seed, path_index):
    return mix64(mix64(master_seed + GOLDEN) + (path_index + _U64(1)) * GOLDEN)


@njit(nb.float64(nb.uint64, nb.uint64), cache=True, inline="always")
def uniform01(key, counter):
    """Uniform in (0, 1]: consumes one counter tick."""
    bits = mix64(key + (counter + _U64(1)) * GOLDEN)
    return (np.float64(bits >> _U64(11)) + 1.0) * _INV_2_53


@njit(nb.types.UniTuple(nb.float64, 2)(nb.uint64, nb.uint64), cache=True, inline="always")
def normal_pair(key, counter):
    """Two independent standard normals; consumes counter ticks k+1 and k+2."""
    a = mix64(key + (counter + _U64(1)) * GOLDEN)
    b = mix64(key + (counter + _U64(2)) * GOLDEN)
    u1 = (np.float64(a >> _U64(11)) + 1.0) * _INV_2_53
    u2 = np.float64(b >> _U64(11)) * _INV_2_53
    r = math.sqrt(-2.0 * math.log(u1))
    th = _TWO_PI * u2
    return r * math.cos(th), r * math.sin(th)
