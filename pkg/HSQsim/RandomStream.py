#
#    hsqsim - Hyper-sphere gradient quantization and federated SGD simulator
#    Copyright (C) 2026  The hsqsim developers
#
#    This program is free software; you can redistribute it and/or modify
#    it under the terms of the GNU General Public License as published by
#    the Free Software Foundation; either version 2 of the License, or
#    (at your option) any later version.
#
#    This program is distributed in the hope that it will be useful,
#    but WITHOUT ANY WARRANTY; without even the implied warranty of
#    MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
#    GNU General Public License for more details.
#
#    You should have received a copy of the GNU General Public License
#    along with this program; if not, write to the Free Software
#    Foundation, Inc., 51 Franklin Street, Fifth Floor,
#      Boston, MA  02110-1301  USA

# Portable seeded random streams.
#
# Devices and the coordinator must regenerate the same codebook from a seed
# alone, and every quantizer draw must be reproducible from (seed, path).
# A stream is the Philox-4x64 counter-based generator keyed from a 64-bit
# seed and an integer path with the splitmix64 finalizer:
#
#     key_hi = splitmix64(seed)
#     key_lo = fold(splitmix64(key_lo ^ p) for p in path), starting at key_hi
#
# Uniforms are the top 53 bits of each raw 64-bit output times 2**-53, in
# [0, 1).  Normals use Box-Muller on consecutive uniform pairs (u1, u2):
# r = sqrt(-2 ln(1 - u1)), z0 = r cos(2 pi u2), z1 = r sin(2 pi u2), emitted in
# the order z0, z1.  Only raw Philox output is used, so streams do not depend on
# the numpy version's distribution code.

import numpy as np

MASK64 = (1 << 64) - 1

def splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)

def _key(seed, path):
    hi = splitmix64(int(seed) & MASK64)
    lo = hi
    for p in path:
        lo = splitmix64(lo ^ (int(p) & MASK64))
        pass
    return (hi << 64) | lo

class Stream:
    def __init__(self, seed, *path):
        self.seed = int(seed) & MASK64
        self.path = tuple(int(p) for p in path)
        self.bitgen = np.random.Philox(key=_key(self.seed, self.path))
        return

    def substream(self, *path):
        return Stream(self.seed, *(self.path + tuple(path)))

    def raw(self, n):
        return self.bitgen.random_raw(int(n))

    def uniforms(self, n):
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform(self):
        return float(self.uniforms(1)[0])

    def normals(self, n):
        n = int(n)
        pairs = (n + 1) // 2
        u = self.uniforms(2 * pairs)
        r = np.sqrt(-2.0 * np.log(1.0 - u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n]

    # k distinct integers from range(n), in draw order
    def sample(self, n, k):
        if (k > n):
            raise ValueError("cannot sample %d of %d" % (k, n))
        keys = self.uniforms(n)
        return np.argsort(keys, kind="stable")[:k]

    def permutation(self, n):
        return self.sample(n, n)

    def __repr__(self):
        return "Stream(%d, path=%r)" % (self.seed, self.path)

    pass

# Accept a Stream, an integer seed or None (seed 0).
def asStream(rng):
    if isinstance(rng, Stream):
        return rng
    if (rng is None):
        return Stream(0)
    return Stream(rng)
