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

# Hyper-sphere quantization of gradient vectors.
#
# A gradient of d entries is cut into ceil(d/d') segments (the last one zero
# padded).  Each segment g becomes a codeword index and a pseudo-norm u with
# g ~ u * C[:, index].  With s >= 1 the pseudo-norms of one gradient are then
# rounded stochastically onto s+1 levels spanning [u_min, u_max].

import numpy as np

from . import Errors
from . import RandomStream

UNBIASED = "unbiased"
GREEDY = "greedy"

_variants = (UNBIASED, GREEDY)

# Slack allowed when a pseudo-norm lands just outside its grid
_range_slack = 1e-12

# Pseudo-norms travel as float32
_f32_max = float(np.finfo(np.float32).max)

class SegmentCode:
    def __init__(self, codeword_index, pseudo_norm, level=None):
        self.codeword_index = int(codeword_index)
        self.pseudo_norm = float(pseudo_norm)
        if (level is not None):
            level = int(level)
            pass
        self.level = level
        return

    def __eq__(self, other):
        if not isinstance(other, SegmentCode):
            return NotImplemented
        return (self.codeword_index == other.codeword_index
                and self.pseudo_norm == other.pseudo_norm
                and self.level == other.level)

    def __repr__(self):
        return "SegmentCode(%d, %r, %r)" % (self.codeword_index,
                                            self.pseudo_norm, self.level)

    pass

# One device's quantized gradient.
#
# indices and norms hold one entry per segment.  levels is None in
# exact-norm mode (s = 0); otherwise it holds the grid level of each
# segment and norms keeps the pre-rounding pseudo-norms (which are not
# transmitted).
class CompressedGradient:
    def __init__(self, total_dim, segment_dim, codeword_count, levels,
                 u_min, u_max, indices, norms, level_codes=None,
                 variant=GREEDY):
        self.total_dim = int(total_dim)
        self.segment_dim = int(segment_dim)
        self.codeword_count = int(codeword_count)
        self.levels = int(levels)
        self.u_min = float(u_min)
        self.u_max = float(u_max)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.norms = np.asarray(norms, dtype=np.float64)
        if (level_codes is not None):
            level_codes = np.asarray(level_codes, dtype=np.int64)
            pass
        self.level_codes = level_codes
        self.variant = variant
        return

    def numSegments(self):
        return len(self.indices)

    @property
    def segments(self):
        l = []
        for i in range(len(self.indices)):
            if (self.level_codes is None):
                level = None
            else:
                level = self.level_codes[i]
                pass
            l.append(SegmentCode(self.indices[i], self.norms[i], level))
            pass
        return l

    def delta(self):
        if (self.levels == 0):
            return 0.0
        return (self.u_max - self.u_min) / self.levels

    # The pseudo-norms the receiver reconstructs
    def decodedNorms(self):
        if (self.level_codes is None):
            return self.norms
        return levelValues(self.level_codes, self.u_min, self.u_max,
                           self.levels)

    # Equality over what crosses the wire
    def __eq__(self, other):
        if not isinstance(other, CompressedGradient):
            return NotImplemented
        if ((self.total_dim, self.segment_dim, self.codeword_count,
             self.levels, self.variant)
            != (other.total_dim, other.segment_dim, other.codeword_count,
                other.levels, other.variant)):
            return False
        if (np.float32(self.u_min) != np.float32(other.u_min)
            or np.float32(self.u_max) != np.float32(other.u_max)):
            return False
        if not np.array_equal(self.indices, other.indices):
            return False
        if (self.level_codes is None):
            return (other.level_codes is None
                    and np.array_equal(self.norms.astype(np.float32),
                                       other.norms.astype(np.float32)))
        return (other.level_codes is not None
                and np.array_equal(self.level_codes, other.level_codes))

    def __repr__(self):
        return ("CompressedGradient(d=%d, d'=%d, m=%d, s=%d, %s, %d segments)"
                % (self.total_dim, self.segment_dim, self.codeword_count,
                   self.levels, self.variant, len(self.indices)))

    pass

def _check_finite(g):
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise Errors.InvalidGradient("gradient has NaN or Inf entries")
    return g

def _check_variant(variant):
    if variant not in _variants:
        raise Errors.UnknownScheme("hsq variant %r" % (variant,))
    return variant

# Rows of the result are the zero-padded segments of g.
def segment(g, segment_dim):
    g = np.asarray(g, dtype=np.float64)
    nseg = -(-len(g) // segment_dim)
    padded = np.zeros(nseg * segment_dim)
    padded[:len(g)] = g
    return padded.reshape(nseg, segment_dim)

#
# Vectorized quantizers.  Each row of segs is one segment; the result is the
# pseudo-norms and codeword indices, one per row.
#

def unbiasedRows(segs, cb, uniforms, projector=None):
    if (projector is None):
        p = segs @ cb.pinv.T
    else:
        p = projector.project(segs)
        pass
    cdf = np.cumsum(np.abs(p), axis=1)
    total = cdf[:, -1]
    # Inverse CDF: smallest i with cdf_i > target; zero-weight codewords are
    # never chosen
    target = uniforms * total
    idx = np.sum(cdf <= target[:, None], axis=1)
    idx = np.minimum(idx, cb.count - 1)
    picked = p[np.arange(len(p)), idx]
    u = np.where(picked < 0, -total, total)
    zero = total == 0
    idx[zero] = 0
    u[zero] = 0.0
    return (u, idx)

def greedyRows(segs, cb, projector=None):
    if (projector is None):
        p = segs @ cb.columns
    else:
        p = projector.project(segs)
        pass
    # argmax keeps the first maximum, so ties go to the lowest index
    idx = np.argmax(np.abs(p), axis=1)
    if (projector is None):
        u = p[np.arange(len(p)), idx]
    else:
        u = np.sum(segs * cb.columns[:, idx].T, axis=1)
        pass
    return (u, idx)

def quantizeRows(segs, cb, variant, stream, projector=None):
    segs = _check_finite(segs)
    if (segs.shape[-1] != cb.dim):
        raise Errors.DimensionMismatch("segment length %d, codebook d'=%d"
                                       % (segs.shape[-1], cb.dim))
    if (_check_variant(variant) == UNBIASED):
        return unbiasedRows(segs, cb, stream.uniforms(len(segs)), projector)
    return greedyRows(segs, cb, projector)

# One segment through the unbiased quantizer: (u, codeword index).
def quantizeUnbiased(g_segment, cb, rng):
    stream = RandomStream.asStream(rng)
    g = _check_finite(g_segment).reshape(1, -1)
    (u, idx) = quantizeRows(g, cb, UNBIASED, stream)
    return (float(u[0]), int(idx[0]))

def quantizeGreedy(g_segment, cb):
    g = _check_finite(g_segment).reshape(1, -1)
    (u, idx) = quantizeRows(g, cb, GREEDY, None)
    return (float(u[0]), int(idx[0]))

#
# Pseudo-norm grid
#

def levelValues(level_codes, u_min, u_max, s):
    level_codes = np.asarray(level_codes)
    if (s == 0 or u_max == u_min):
        return np.full(level_codes.shape, float(u_min))
    delta = (u_max - u_min) / s
    v = u_min + level_codes * delta
    return np.where(level_codes >= s, u_max, np.minimum(v, u_max))

def levelRows(u, u_min, u_max, s, uniforms):
    u = np.asarray(u, dtype=np.float64)
    if (np.any(u < u_min - _range_slack) or np.any(u > u_max + _range_slack)):
        bad = u[(u < u_min - _range_slack) | (u > u_max + _range_slack)][0]
        raise Errors.OutOfRange(float(bad), u_min, u_max)
    u = np.clip(u, u_min, u_max)
    if (u_max == u_min):
        return np.zeros(u.shape, dtype=np.int64)
    delta = (u_max - u_min) / s
    x = (u - u_min) / delta
    k = np.clip(np.floor(x), 0, s - 1)
    frac = x - k
    # P(level k) = 1 - frac = ((k+1) delta + u_min - u) / delta
    level = (k + (uniforms < frac)).astype(np.int64)
    level[u >= u_max] = s
    return level

def quantizePseudoNorm(u, u_min, u_max, s, rng):
    if (s < 1):
        raise Errors.InvalidShape("pseudo-norm grid needs s >= 1")
    stream = RandomStream.asStream(rng)
    level = levelRows(np.array([u]), u_min, u_max, s, stream.uniforms(1))
    return int(level[0])

def _f32_outward(u_min, u_max):
    lo = np.float32(u_min)
    if (float(lo) > u_min):
        lo = np.nextafter(lo, np.float32(-np.inf))
        pass
    hi = np.float32(u_max)
    if (float(hi) < u_max):
        hi = np.nextafter(hi, np.float32(np.inf))
        pass
    return (float(lo), float(hi))

#
# Whole gradients
#

# Quantize a d-vector segment by segment.
#
# s = 0 keeps the pseudo-norms (as float32, the way they are sent);
# s >= 1 rounds them onto the s+1 level grid of this gradient.
def compress(g, cb, s, variant, rng, projector=None):
    g = _check_finite(g)
    if (g.ndim != 1 or len(g) == 0):
        raise Errors.InvalidGradient("gradient must be a non-empty vector")
    s = int(s)
    if (s < 0):
        raise Errors.InvalidShape("levels must be >= 0")
    stream = RandomStream.asStream(rng)
    segs = segment(g, cb.dim)
    (u, idx) = quantizeRows(segs, cb, variant, stream, projector)
    if (np.max(np.abs(u)) > _f32_max):
        raise Errors.Overflow("pseudo-norm %g does not fit in float32"
                              % float(np.max(np.abs(u))))

    (u_min, u_max) = _f32_outward(float(np.min(u)), float(np.max(u)))
    if (s == 0):
        u = u.astype(np.float32).astype(np.float64)
        level_codes = None
    else:
        level_codes = levelRows(u, u_min, u_max, s, stream.uniforms(len(u)))
        pass
    return CompressedGradient(len(g), cb.dim, cb.count, s, u_min, u_max,
                              idx, u, level_codes, variant)

def _check_dims(cg, cb):
    if (cg.segment_dim != cb.dim or cg.codeword_count != cb.count):
        raise Errors.DimensionMismatch(
            "gradient coded for d'=%d m=%d, codebook is d'=%d m=%d"
            % (cg.segment_dim, cg.codeword_count, cb.dim, cb.count))
    return

def decode(cg, cb):
    _check_dims(cg, cb)
    values = cg.decodedNorms()
    segs = cb.columns[:, cg.indices].T * values[:, None]
    return segs.reshape(-1)[:cg.total_dim]

# Coordinator side: the mean of the decoded gradients, in list order.
def aggregate(cgs, cb):
    cgs = list(cgs)
    if (not cgs):
        raise Errors.EmptyInput("nothing to aggregate")
    d = cgs[0].total_dim
    total = np.zeros(d)
    for cg in cgs:
        if (cg.total_dim != d):
            raise Errors.DimensionMismatch("gradients of length %d and %d"
                                           % (d, cg.total_dim))
        total += decode(cg, cb)
        pass
    return total / len(cgs)
