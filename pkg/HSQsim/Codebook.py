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

# The shared vector codebook.
#
# A codebook is a d' x m matrix C of unit-norm codewords with full row rank.
# Devices and the coordinator build it from (method, d', m, seed) so only the
# seed needs to be distributed.

import struct

import numpy as np
import scipy.linalg
from scipy.cluster.vq import vq

from . import Errors
from . import RandomStream
from .DebugLog import debuglog

SOB = 0
RANDOM_ROTATION = 1
RANDOM_GAUSSIAN = 2
KMEANS_GAUSSIAN = 3

method_names = {
    SOB: "sob",
    RANDOM_ROTATION: "random-rotation",
    RANDOM_GAUSSIAN: "random-gaussian",
    KMEANS_GAUSSIAN: "kmeans-gaussian",
    }

_method_aliases = {
    "rr": RANDOM_ROTATION,
    "rotation": RANDOM_ROTATION,
    "gaussian": RANDOM_GAUSSIAN,
    "kmeans": KMEANS_GAUSSIAN,
    }

# Numerical rank threshold on sigma_min
_rank_eps = 1e-10
_unit_norm_tol = 1e-12

# KMeansGaussian settings
_kmeans_pool = 256
_kmeans_iters = 25

UNBIASED_PATH = "unbiased"
GREEDY_PATH = "greedy"

def methodFromStr(s):
    if isinstance(s, int):
        if s in method_names:
            return s
        raise Errors.InvalidShape("unknown codebook method %d" % s)
    s = s.strip().lower()
    for (m, name) in method_names.items():
        if (s == name):
            return m
        pass
    if s in _method_aliases:
        return _method_aliases[s]
    raise Errors.InvalidShape("unknown codebook method %s" % s)

def _gram_sigmas(columns):
    ev = np.linalg.eigvalsh(columns @ columns.T)
    ev = np.clip(ev, 0.0, None)
    return (float(np.sqrt(ev[0])), float(np.sqrt(ev[-1])))

# Immutable codebook with its pseudoinverse and extremal singular values.
#
# columns is d' x m, pinv is m x d' with columns @ pinv = I.
class Codebook:
    def __init__(self, columns, method=RANDOM_GAUSSIAN, seed=0):
        columns = np.array(columns, dtype=np.float64)
        if (columns.ndim != 2):
            raise Errors.InvalidShape("codebook must be a matrix")
        (dim, count) = columns.shape
        if (dim < 1 or count < dim):
            raise Errors.InvalidShape("codebook needs m >= d' >= 1, got"
                                      " d'=%d m=%d" % (dim, count))
        norms = np.linalg.norm(columns, axis=0)
        if (np.max(np.abs(norms - 1.0)) > _unit_norm_tol):
            raise Errors.InvalidShape("codewords must have unit norm")

        (sigma_min, sigma_max) = _gram_sigmas(columns)
        if (sigma_min < _rank_eps):
            raise Errors.RankDeficient("codebook rank deficient, sigma_min=%g"
                                       % sigma_min, sigma_min)

        self.dim = dim
        self.count = count
        self.method = method
        self.seed = int(seed)
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.columns = columns
        self.pinv = pseudoinverse(self)
        self.columns.setflags(write=False)
        self.pinv.setflags(write=False)
        return

    # sigma_1 of the pseudoinverse
    def sigmaPinv(self):
        return 1.0 / self.sigma_min

    # Largest alpha the greedy direction quantizer can need
    def alphaBound(self):
        return 1.0 - self.sigma_min ** 2 / self.count

    def isOrthonormal(self, tol=1e-9):
        if (self.count != self.dim):
            return False
        return np.allclose(self.columns.T @ self.columns, np.eye(self.dim),
                           atol=tol)

    def __eq__(self, other):
        if not isinstance(other, Codebook):
            return NotImplemented
        return (self.method == other.method and self.seed == other.seed
                and np.array_equal(self.columns, other.columns))

    def __repr__(self):
        return ("Codebook(%s, d'=%d, m=%d, seed=%d)"
                % (method_names.get(self.method, "?"), self.dim, self.count,
                   self.seed))

    pass

# C^T (C C^T)^-1 from a Cholesky factorization of the d' x d' Gram.
def pseudoinverse(cb):
    c = cb.columns
    try:
        factor = scipy.linalg.cho_factor(c @ c.T)
    except np.linalg.LinAlgError:
        raise Errors.RankDeficient("Gram matrix not positive definite")
    return np.ascontiguousarray(scipy.linalg.cho_solve(factor, c).T)

def _normalize_columns(m):
    return m / np.linalg.norm(m, axis=0)

def _random_rotation(stream, dim):
    a = stream.normals(dim * dim).reshape(dim, dim)
    (q, r) = np.linalg.qr(a)
    # Positive diagonal of R makes Q unique
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs

def _kmeans_centers(stream, dim, count):
    pool = stream.normals(_kmeans_pool * count * dim).reshape(-1, dim)
    centers = pool[np.sort(stream.sample(len(pool), count))].copy()
    for i in range(_kmeans_iters):
        (assigned, dists) = vq(pool, centers, check_finite=False)
        sums = np.zeros_like(centers)
        np.add.at(sums, assigned, pool)
        sizes = np.bincount(assigned, minlength=count)
        empty = np.flatnonzero(sizes == 0)
        full = sizes > 0
        centers[full] = sums[full] / sizes[full, None]
        # Re-seed empty clusters from the points farthest from their centers
        if (len(empty)):
            far = np.argsort(-dists, kind="stable")[:len(empty)]
            centers[empty] = pool[far]
            pass
        pass
    return centers.T

# Build the codebook for (method, d', m, seed).
def generate(method, dim, count, seed):
    method = methodFromStr(method)
    dim = int(dim)
    count = int(count)
    if (dim < 1 or count < dim):
        raise Errors.InvalidShape("need m >= d' >= 1, got d'=%d m=%d"
                                  % (dim, count))
    if (method in (SOB, RANDOM_ROTATION) and count != dim):
        raise Errors.InvalidShape("%s needs m = d'" % method_names[method])

    stream = RandomStream.Stream(seed, method, dim, count)
    if (method == SOB):
        columns = np.eye(dim)
    elif (method == RANDOM_ROTATION):
        columns = _random_rotation(stream, dim)
    elif (method == RANDOM_GAUSSIAN):
        columns = stream.normals(dim * count).reshape(count, dim).T
    else:
        columns = _kmeans_centers(stream, dim, count)
        pass
    columns = _normalize_columns(columns)

    cb = Codebook(columns, method=method, seed=seed)
    debuglog._log("codebook %s d'=%d m=%d seed=%d sigma=[%g, %g]",
                  method_names[method], dim, count, seed,
                  cb.sigma_min, cb.sigma_max)
    return cb

# generate(), moving to the next seed while the result is rank deficient.
def generateFullRank(method, dim, count, seed, tries=16):
    for i in range(tries):
        try:
            return generate(method, dim, count, seed + i)
        except Errors.RankDeficient as e:
            debuglog.warn("seed %d rank deficient (%s), retrying",
                          seed + i, str(e))
            pass
        pass
    raise Errors.RankDeficient("no full rank codebook in %d seeds from %d"
                               % (tries, seed))

# Johnson-Lindenstrauss sketch of the codebook projection.
#
# barC = (1/sqrt(k)) P h, where P is pinv (unbiased path) or C^T (greedy
# path) and h is d' x k standard normal.  A query applies the second
# 1/sqrt(k) to h^T g, so project(g) = (1/k) P h h^T g.  Since
# E[h h^T] = k I the result is an unbiased estimate of P g.
class SketchedCodebook:
    def __init__(self, base, sketch_dim, h, path):
        self.base = base
        self.sketch_dim = sketch_dim
        self.h = h
        self.path = path
        if (path == UNBIASED_PATH):
            full = base.pinv
        else:
            full = base.columns.T
            pass
        self.barC = (full @ h) / np.sqrt(sketch_dim)
        self.h.setflags(write=False)
        self.barC.setflags(write=False)
        return

    # The exact projection the sketch approximates
    def exact(self, g):
        if (self.path == UNBIASED_PATH):
            return np.asarray(g) @ self.base.pinv.T
        return np.asarray(g) @ self.base.columns

    # Rows of g are segments; returns one projection row per segment
    def project(self, g):
        q = (np.asarray(g) @ self.h) / np.sqrt(self.sketch_dim)
        return q @ self.barC.T

    pass

def sketch(cb, k, seed, path=UNBIASED_PATH, h=None):
    k = int(k)
    if (path not in (UNBIASED_PATH, GREEDY_PATH)):
        raise Errors.InvalidShape("unknown sketch path %r" % (path,))
    if (h is None):
        if (k < 1 or k >= cb.dim):
            raise Errors.InvalidShape("sketch needs 1 <= k < d', got k=%d"
                                      " d'=%d" % (k, cb.dim))
        stream = RandomStream.Stream(seed, cb.dim, k)
        h = stream.normals(cb.dim * k).reshape(cb.dim, k)
    else:
        # An explicit h may be square; used to check the identity sketch
        h = np.array(h, dtype=np.float64)
        if (h.shape != (cb.dim, k) or k < 1 or k > cb.dim):
            raise Errors.InvalidShape("sketch matrix must be d' x k")
        pass
    return SketchedCodebook(cb, k, h, path)

#
# Codebook files: magic "HSQC", u16 version, u32 dim, u32 count, u8 method,
# u64 seed, then the d' x m matrix as row-major little-endian f64.
#

CODEBOOK_MAGIC = b"HSQC"
CODEBOOK_VERSION = 1
_cb_header = struct.Struct("<4sHIIBQ")

def toBytes(cb):
    hdr = _cb_header.pack(CODEBOOK_MAGIC, CODEBOOK_VERSION, cb.dim, cb.count,
                          cb.method, cb.seed & RandomStream.MASK64)
    return hdr + cb.columns.astype("<f8").tobytes(order="C")

def fromBytes(data):
    if (len(data) < _cb_header.size):
        raise Errors.FrameErr("codebook file truncated")
    (magic, version, dim, count, method,
     seed) = _cb_header.unpack_from(data, 0)
    if (magic != CODEBOOK_MAGIC):
        raise Errors.FrameErr("not a codebook file")
    if (version != CODEBOOK_VERSION):
        raise Errors.FrameErr("codebook version %d unsupported" % version)
    nbytes = 8 * dim * count
    body = data[_cb_header.size:]
    if (len(body) != nbytes):
        raise Errors.FrameErr("codebook body is %d bytes, expected %d"
                              % (len(body), nbytes))
    columns = np.frombuffer(body, dtype="<f8").reshape(dim, count)
    norms = np.linalg.norm(columns, axis=0)
    if (np.max(np.abs(norms - 1.0)) > _unit_norm_tol):
        raise Errors.FrameErr("codebook file has non unit-norm codewords")
    return Codebook(columns.astype(np.float64), method=method, seed=seed)

def write(cb, fn):
    with open(fn, "wb") as f:
        f.write(toBytes(cb))
        pass
    return

def read(fn):
    with open(fn, "rb") as f:
        return fromBytes(f.read())
    return
