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

# Binary frames for compressed gradients, and bit accounting.
#
# Frame layout (all multi-byte fields little-endian):
#
#     magic    4 bytes  "HSQG"
#     version  u16
#     scheme   u8       SchemeMap.HSQ_UNBIASED or SchemeMap.HSQ_GREEDY
#     d        u32      gradient length
#     d_prime  u32      segment length
#     m        u32      codeword count
#     s        u32      pseudo-norm levels (0: raw norms)
#     u_min    f32
#     u_max    f32
#     payload           one record per segment, packed MSB-first:
#                       ceil(log2 m) index bits, then ceil(log2(s+1)) level
#                       bits, or the 32 bits of the f32 pseudo-norm when s = 0;
#                       zero padded to a whole byte

import math
import struct

import numpy as np

from . import Baselines
from . import Errors
from . import HSQ
from . import SchemeMap
from .DebugLog import debuglog

FRAME_MAGIC = b"HSQG"
FRAME_VERSION = 1
_frame_header = struct.Struct("<4sHBIIIIff")
HEADER_BITS = 8 * _frame_header.size

_u32_max = (1 << 32) - 1
_f32_max = float(np.finfo(np.float32).max)

# Bits per float on the wire and in the cost tables
FLOAT_BITS = 32

def indexBits(m):
    return (int(m) - 1).bit_length()

def levelBits(s):
    if (s == 0):
        return FLOAT_BITS
    return int(s).bit_length()

def recordBits(m, s):
    return indexBits(m) + levelBits(s)

def numSegments(d, d_prime):
    return -(-int(d) // int(d_prime))

def _to_bits(values, width):
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    values = np.asarray(values, dtype=np.uint64)
    return ((values[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)

def _from_bits(bits):
    width = bits.shape[1]
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    return np.sum(bits.astype(np.uint64) << shifts, axis=1, dtype=np.uint64)

def encode(cg):
    if (cg.total_dim < 1):
        raise Errors.InvalidShape("cannot encode an empty gradient")
    for (name, v) in (("d", cg.total_dim), ("d'", cg.segment_dim),
                      ("m", cg.codeword_count), ("s", cg.levels)):
        if (v < 0 or v > _u32_max):
            raise Errors.Overflow("%s=%d does not fit in u32" % (name, v))
        pass
    for v in (cg.u_min, cg.u_max):
        if not (abs(v) <= _f32_max):
            raise Errors.Overflow("pseudo-norm bound %r exceeds float32" % v)
        pass
    if (cg.variant == HSQ.UNBIASED):
        scheme = SchemeMap.HSQ_UNBIASED
    else:
        scheme = SchemeMap.HSQ_GREEDY
        pass

    hdr = _frame_header.pack(FRAME_MAGIC, FRAME_VERSION, scheme,
                             cg.total_dim, cg.segment_dim, cg.codeword_count,
                             cg.levels, cg.u_min, cg.u_max)
    fields = [ _to_bits(cg.indices, indexBits(cg.codeword_count)) ]
    if (cg.levels == 0):
        raw = cg.norms.astype("<f4").view("<u4")
        fields.append(_to_bits(raw, FLOAT_BITS))
    else:
        fields.append(_to_bits(cg.level_codes, levelBits(cg.levels)))
        pass
    bits = np.hstack(fields).reshape(-1)
    payload = np.packbits(bits, bitorder="big").tobytes()
    debuglog._log("encode d=%d segments=%d payload=%d bytes",
                  cg.total_dim, cg.numSegments(), len(payload))
    return hdr + payload

def decode(data):
    data = bytes(data)
    if (len(data) < _frame_header.size):
        raise Errors.FrameErr("frame shorter than its header")
    (magic, version, scheme, d, d_prime, m, s, u_min,
     u_max) = _frame_header.unpack_from(data, 0)
    if (magic != FRAME_MAGIC):
        raise Errors.FrameErr("bad frame magic %r" % (magic,))
    if (version != FRAME_VERSION):
        raise Errors.FrameErr("frame version %d unsupported" % version)
    if (scheme == SchemeMap.HSQ_UNBIASED):
        variant = HSQ.UNBIASED
    elif (scheme == SchemeMap.HSQ_GREEDY):
        variant = HSQ.GREEDY
    else:
        raise Errors.FrameErr("frame scheme %d is not HSQ" % scheme)
    if (d < 1 or d_prime < 1 or m < d_prime):
        raise Errors.FrameErr("bad frame dimensions d=%d d'=%d m=%d"
                              % (d, d_prime, m))

    nseg = numSegments(d, d_prime)
    rb = recordBits(m, s)
    nbytes = -(-(nseg * rb) // 8)
    payload = data[_frame_header.size:]
    if (len(payload) != nbytes):
        raise Errors.FrameErr("payload is %d bytes, expected %d"
                              % (len(payload), nbytes))
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8),
                         bitorder="big")[:nseg * rb].reshape(nseg, rb)
    ib = indexBits(m)
    indices = _from_bits(bits[:, :ib]).astype(np.int64)
    if (np.any(indices >= m)):
        raise Errors.FrameErr("codeword index out of range")
    tail = _from_bits(bits[:, ib:])
    u_min = float(u_min)
    u_max = float(u_max)
    if not (math.isfinite(u_min) and math.isfinite(u_max)
            and u_min <= u_max):
        raise Errors.FrameErr("bad pseudo-norm range [%r, %r]"
                              % (u_min, u_max))
    if (s == 0):
        norms = tail.astype(np.uint32).view(np.float32).astype(np.float64)
        level_codes = None
    else:
        level_codes = tail.astype(np.int64)
        if (np.any(level_codes > s)):
            raise Errors.FrameErr("pseudo-norm level out of range")
        norms = HSQ.levelValues(level_codes, u_min, u_max, s)
        pass
    return HSQ.CompressedGradient(d, d_prime, m, s, u_min, u_max, indices,
                                  norms, level_codes, variant)

#
# Bit accounting.  Counts exclude the frame header and u_min/u_max unless
# include_header is set.
#

def _scheme(scheme):
    if isinstance(scheme, int):
        SchemeMap.schemeToStr(scheme)
        return scheme
    return SchemeMap.strToScheme(scheme)

# Uplink bits for one gradient of length d under scheme.
#
# The result is a real number: TernGrad is priced at its entropy,
# d log2 3.  QSGD is priced dense: a sign and ceil(log2(s+1)) level bits
# per coordinate plus one float norm per bucket.
def payloadBits(scheme, d, d_prime=None, m=None, s=None,
                bucket=Baselines.QSGD_BUCKET, include_header=False):
    scheme = _scheme(scheme)
    d = int(d)
    if (d < 1):
        raise Errors.InvalidShape("d must be positive")
    if SchemeMap.isHSQ(scheme):
        if (d_prime is None or m is None or s is None):
            raise Errors.InvalidShape("HSQ accounting needs d', m and s")
        bits = numSegments(d, d_prime) * recordBits(m, s)
        if (include_header):
            bits += HEADER_BITS
            pass
        return float(bits)
    if (scheme == SchemeMap.IDENTITY):
        return float(FLOAT_BITS * d)
    if (scheme == SchemeMap.SIGNSGD):
        return float(d)
    if (scheme == SchemeMap.TERNGRAD):
        bits = d * math.log2(3)
        if (include_header):
            bits += FLOAT_BITS
            pass
        return bits
    if (scheme == SchemeMap.QSGD):
        if (s is None):
            raise Errors.InvalidShape("QSGD accounting needs s")
        nb = -(-d // int(bucket))
        return float(d * (1 + int(s).bit_length()) + FLOAT_BITS * nb)
    raise Errors.UnknownScheme(scheme)

def compressionRatio(scheme, d, d_prime=None, m=None, s=None,
                     bucket=Baselines.QSGD_BUCKET, include_header=False):
    return (FLOAT_BITS * int(d)
            / payloadBits(scheme, d, d_prime, m, s, bucket, include_header))

# Whole bits one client sends per round.
def messageBits(scheme, d, d_prime=None, m=None, s=None,
                bucket=Baselines.QSGD_BUCKET):
    return int(math.ceil(payloadBits(scheme, d, d_prime, m, s, bucket)))

def frameBits(cg):
    return HEADER_BITS + 8 * (-(-(cg.numSegments()
                                  * recordBits(cg.codeword_count, cg.levels))
                                // 8))

def _gamma_bits(n):
    # Elias gamma code length of integers n >= 1
    n = np.asarray(n, dtype=np.int64)
    return 2 * (np.floor(np.log2(n)).astype(np.int64)) + 1

# Elias-coded size of a QSGD code: per bucket a float norm, then for
# every nonzero the gamma-coded gap to it, a sign bit and the gamma-coded
# level.
def qsgdSparseBits(code):
    if (code.scheme != SchemeMap.QSGD):
        raise Errors.UnknownScheme(SchemeMap.schemeToStr(code.scheme))
    nb = len(code.norms)
    bits = FLOAT_BITS * nb
    for b in range(nb):
        levels = code.levels[b * code.bucket:(b + 1) * code.bucket]
        pos = np.flatnonzero(levels)
        if (len(pos) == 0):
            continue
        gaps = np.diff(np.concatenate(([-1], pos)))
        bits += int(np.sum(_gamma_bits(gaps)) + len(pos)
                    + np.sum(_gamma_bits(np.abs(levels[pos]))))
        pass
    return bits

# Expected-size bound for s = 1: at most sqrt(b) nonzeros per bucket,
# each costing at most gamma(b) + 1 + gamma(1) bits.
def qsgdSparseBound(d, bucket=Baselines.QSGD_BUCKET):
    d = int(d)
    b = min(int(bucket), d)
    nb = -(-d // int(bucket))
    per = 2 * math.floor(math.log2(b)) + 3
    return nb * (FLOAT_BITS + math.sqrt(b) * per)
