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

# Reference gradient compressors: QSGD, TernGrad, SignSGD and identity.
#
# Each compressor returns a BaselineCode holding the scheme's payload in
# dense arrays; decodeBaseline() turns it back into a d-vector.  QSGD and
# TernGrad decode to unbiased estimates of the input, SignSGD does not.

import numpy as np

from . import Errors
from . import RandomStream
from . import SchemeMap

# Bucket size used for QSGD unless told otherwise
QSGD_BUCKET = 512

class BaselineCode:
    def __init__(self, scheme, dim, **payload):
        self.scheme = scheme
        self.dim = int(dim)
        self.fields = tuple(sorted(payload))
        for (k, v) in payload.items():
            setattr(self, k, v)
            pass
        return

    def __repr__(self):
        return "BaselineCode(%s, d=%d)" % (SchemeMap.schemeToStr(self.scheme),
                                           self.dim)

    pass

def _vector(g):
    g = np.asarray(g, dtype=np.float64)
    if (g.ndim != 1):
        raise Errors.InvalidGradient("gradient must be a vector")
    if not np.all(np.isfinite(g)):
        raise Errors.InvalidGradient("gradient has NaN or Inf entries")
    return g

# Per bucket: the bucket norm plus signed stochastic levels in [0, s].
def qsgdCompress(g, levels, bucket=QSGD_BUCKET, rng=None):
    g = _vector(g)
    s = int(levels)
    if (s < 1):
        raise Errors.InvalidShape("QSGD needs s >= 1")
    if (bucket < 1):
        raise Errors.InvalidShape("QSGD bucket must be positive")
    stream = RandomStream.asStream(rng)
    nb = -(-len(g) // bucket)
    padded = np.zeros(nb * bucket)
    padded[:len(g)] = g
    b = padded.reshape(nb, bucket)
    norms = np.linalg.norm(b, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    r = np.abs(b) / safe[:, None] * s
    low = np.floor(r)
    up = stream.uniforms(b.size).reshape(b.shape) < (r - low)
    mag = (low + up).astype(np.int64)
    mag[norms == 0] = 0
    signed = np.where(b < 0, -mag, mag).reshape(-1)[:len(g)]
    return BaselineCode(SchemeMap.QSGD, len(g), norms=norms, levels=signed,
                        s=s, bucket=int(bucket))

# Scaler max|g_i| and ternary values, P(+-1) = |g_i| / scaler.
def terngradCompress(g, rng=None):
    g = _vector(g)
    stream = RandomStream.asStream(rng)
    scale = float(np.max(np.abs(g))) if len(g) else 0.0
    if (scale == 0.0):
        values = np.zeros(len(g), dtype=np.int8)
    else:
        keep = stream.uniforms(len(g)) < np.abs(g) / scale
        values = (np.sign(g) * keep).astype(np.int8)
        pass
    return BaselineCode(SchemeMap.TERNGRAD, len(g), scale=scale, values=values)

def signsgdCompress(g):
    # sign(0) is taken as +1
    g = _vector(g)
    signs = np.where(g < 0, -1, 1).astype(np.int8)
    return BaselineCode(SchemeMap.SIGNSGD, len(g), signs=signs)

def identityCompress(g):
    g = _vector(g)
    return BaselineCode(SchemeMap.IDENTITY, len(g), values=g.copy())

def decodeBaseline(code):
    if (code.scheme == SchemeMap.QSGD):
        norms = np.repeat(code.norms, code.bucket)[:code.dim]
        return norms * code.levels / code.s
    if (code.scheme == SchemeMap.TERNGRAD):
        return code.scale * code.values.astype(np.float64)
    if (code.scheme == SchemeMap.SIGNSGD):
        return code.signs.astype(np.float64)
    if (code.scheme == SchemeMap.IDENTITY):
        return code.values.copy()
    raise Errors.UnknownScheme(code.scheme)

# Coordinator mean of decoded codes; signs are averaged, not voted.
def aggregateBaseline(codes):
    codes = list(codes)
    if (not codes):
        raise Errors.EmptyInput("nothing to aggregate")
    d = codes[0].dim
    total = np.zeros(d)
    for c in codes:
        if (c.dim != d):
            raise Errors.DimensionMismatch("codes of length %d and %d"
                                           % (d, c.dim))
        total += decodeBaseline(c)
        pass
    return total / len(codes)

# Dispatch on a SchemeMap tag for the non-HSQ schemes.
def compressWith(scheme, g, rng=None, levels=1, bucket=QSGD_BUCKET):
    if (scheme == SchemeMap.QSGD):
        return qsgdCompress(g, levels, bucket, rng)
    if (scheme == SchemeMap.TERNGRAD):
        return terngradCompress(g, rng)
    if (scheme == SchemeMap.SIGNSGD):
        return signsgdCompress(g)
    if (scheme == SchemeMap.IDENTITY):
        return identityCompress(g)
    raise Errors.UnknownScheme(SchemeMap.schemeToStr(scheme))
