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

# Statistical validators for the quantizers and the bit accounting.
#
# Every check is seeded and deterministic.  Monte-Carlo checks accept within
# 4-sigma bands.  runValidators() runs the whole suite and returns the report
# `hsqsim analyze` prints.

import math

import numpy as np
from scipy import stats

from . import Baselines
from . import Codebook
from . import Errors
from . import HSQ
from . import RandomStream
from . import Wire
from .DebugLog import debuglog

REPORT_VERSION = 1

# Monte-Carlo acceptance band, in standard errors
Z_BAND = 4.0

IDENTITY = "identity"
QSGD = "qsgd"
TERNGRAD = "terngrad"
SIGNSGD = "signsgd"

quantizers = (IDENTITY, HSQ.UNBIASED, HSQ.GREEDY, QSGD, TERNGRAD, SIGNSGD)

# Draws generated per batch
_chunk = 2048

#
# Sampling
#

def _hsq_draws(g, cb, variant, count, stream, s, projector=None):
    if (s == 0):
        segs = HSQ.segment(g, cb.dim)
        nseg = len(segs)
        rows = np.tile(segs, (count, 1))
        (u, idx) = HSQ.quantizeRows(rows, cb, variant, stream, projector)
        u = u.astype(np.float32).astype(np.float64)
        out = (cb.columns[:, idx].T * u[:, None]).reshape(count,
                                                           nseg * cb.dim)
        return out[:, :len(g)]
    return np.array([ HSQ.decode(HSQ.compress(g, cb, s, variant, stream,
                                              projector), cb)
                      for i in range(count) ])

# count independent decoded compressions of g, one per row.
def draws(quantizer, g, count, rng, cb=None, s=0, projector=None):
    g = np.asarray(g, dtype=np.float64)
    stream = RandomStream.asStream(rng)
    if (quantizer == IDENTITY):
        return np.tile(g, (count, 1))
    if (quantizer in (HSQ.UNBIASED, HSQ.GREEDY)):
        if (cb is None):
            raise Errors.InvalidShape("HSQ sampling needs a codebook")
        return _hsq_draws(g, cb, quantizer, count, stream, s, projector)
    if (quantizer == QSGD):
        codes = (Baselines.qsgdCompress(g, max(s, 1), rng=stream)
                 for i in range(count))
    elif (quantizer == TERNGRAD):
        codes = (Baselines.terngradCompress(g, stream) for i in range(count))
    elif (quantizer == SIGNSGD):
        codes = (Baselines.signsgdCompress(g) for i in range(count))
    else:
        raise Errors.UnknownScheme(str(quantizer))
    return np.array([ Baselines.decodeBaseline(c) for c in codes ])

# Mean and sample standard deviation of draws - g, by coordinate.
def _residual_moments(quantizer, g, N, stream, cb, s):
    g = np.asarray(g, dtype=np.float64)
    total = np.zeros(len(g))
    sq = np.zeros(len(g))
    done = 0
    while (done < N):
        n = min(_chunk, N - done)
        r = draws(quantizer, g, n, stream, cb, s) - g
        total += np.sum(r, axis=0)
        sq += np.sum(r * r, axis=0)
        done += n
        pass
    mean = total / N
    var = np.clip(sq / N - mean * mean, 0.0, None) * N / (N - 1.0)
    return (mean, np.sqrt(var))

def _zscores(bias, sd, N):
    se = sd / math.sqrt(N)
    z = np.zeros(len(bias))
    ok = se > 0
    z[ok] = bias[ok] / se[ok]
    # No spread but a bias: infinitely significant
    z[~ok & (bias != 0)] = np.inf * np.sign(bias[~ok & (bias != 0)])
    return z

#
# Unbiasedness
#

# Per-coordinate z = (mean - g) / (sd / sqrt(N)) over N compressions.
def testUnbiasedness(quantizer, cb, g, N, rng, s=0):
    if (N < 2):
        raise Errors.InvalidShape("need at least 2 draws")
    stream = RandomStream.asStream(rng)
    (bias, sd) = _residual_moments(quantizer, g, N, stream, cb, s)
    return _zscores(bias, sd, N)

# z-score of the mean decoded grid value against u.
def testPseudoNormUnbiasedness(u, u_min, u_max, s, N, rng):
    stream = RandomStream.asStream(rng)
    levels = HSQ.levelRows(np.full(N, float(u)), u_min, u_max, s,
                           stream.uniforms(N))
    r = HSQ.levelValues(levels, u_min, u_max, s) - u
    return float(_zscores(np.array([np.mean(r)]),
                          np.array([np.std(r, ddof=1)]), N)[0])

#
# Second moment
#

# Per-segment bound m sigma_1(C+)^2 B' + (u_max - u_min)^2 / s.
def secondMomentBound(cb, B, u_range, s):
    v = cb.count * cb.sigmaPinv() ** 2 * B
    if (s >= 1):
        v += u_range ** 2 / s
        pass
    return v

def looseBound(cb, B, s):
    f = 1.0 if s < 1 else 1.0 + 4.0 / s
    return f * cb.count * cb.sigmaPinv() ** 2 * B

# Monte-Carlo per-segment E||g~||^2 against the bound.
#
# g is a fixed gradient, so B' defaults to its largest segment energy and
# the range term uses the widest u_max - u_min seen over the draws.
def testVarianceBound(cb, g, s, N, rng, variant=HSQ.UNBIASED, B=None):
    stream = RandomStream.asStream(rng)
    g = np.asarray(g, dtype=np.float64)
    nseg = Wire.numSegments(len(g), cb.dim)
    if (B is None):
        B = float(np.max(np.sum(HSQ.segment(g, cb.dim) ** 2, axis=1)))
        pass
    energy = np.zeros((N, nseg))
    widest = 0.0
    for i in range(N):
        cg = HSQ.compress(g, cb, s, variant, stream)
        v = cg.decodedNorms()
        # Codewords are unit norm, so ||u c||^2 = u^2
        energy[i] = v * v
        widest = max(widest, cg.u_max - cg.u_min)
        pass
    means = np.mean(energy, axis=0)
    worst = int(np.argmax(means))
    se = float(np.std(energy[:, worst], ddof=1)) / math.sqrt(N)
    bound = secondMomentBound(cb, B, widest, s)
    loose = looseBound(cb, B, s)
    empirical = float(means[worst])
    return { "empirical": empirical, "bound": bound, "loose_bound": loose,
             "mc_error": se,
             "passed": bool(empirical - Z_BAND * se <= bound),
             "loose_passed": bool(empirical - Z_BAND * se <= loose) }

#
# Direction quantization error
#

def _unit_gaussians(stream, count, dim):
    g = stream.normals(count * dim).reshape(count, dim)
    return g / np.linalg.norm(g, axis=1)[:, None]

# Smallest (g^T Q(g))^2 / ||g||^2 over N random g for the greedy
# quantizer, and whether it respects sigma_min^2 / m.
def testAlpha(cb, N, rng):
    stream = RandomStream.asStream(rng)
    g = stream.normals(N * cb.dim).reshape(N, cb.dim)
    (u, idx) = HSQ.greedyRows(g, cb)
    ratio = u * u / np.sum(g * g, axis=1)
    floor = cb.sigma_min ** 2 / cb.count
    worst = float(np.min(ratio))
    return { "worst": worst, "floor": floor,
             "violations": int(np.sum(ratio < floor)),
             "passed": bool(worst >= floor) }

# max over codewords of |g^T c|.
def betaCorrelation(g, cb):
    return float(np.max(np.abs(np.asarray(g, dtype=np.float64) @ cb.columns)))

def betaSamples(cb, N, rng):
    stream = RandomStream.asStream(rng)
    g = _unit_gaussians(stream, N, cb.dim)
    return np.max(np.abs(g @ cb.columns), axis=1)

# beta(g, C) over Haar-random unit g for each generation method at
# m = d'.  Random rotation is drawn with two seeds.
def compareCodebookMethods(dim=32, N=10000, seed=0):
    runs = [ ("sob", Codebook.SOB, seed),
             ("random-rotation", Codebook.RANDOM_ROTATION, seed),
             ("random-rotation-2", Codebook.RANDOM_ROTATION, seed + 1),
             ("random-gaussian", Codebook.RANDOM_GAUSSIAN, seed),
             ("kmeans-gaussian", Codebook.KMEANS_GAUSSIAN, seed) ]
    out = {}
    samples = {}
    for (name, method, s) in runs:
        cb = Codebook.generateFullRank(method, dim, dim, s)
        b = betaSamples(cb, N, RandomStream.Stream(seed, 21, method))
        samples[name] = b
        out[name] = { "mean": float(np.mean(b)), "min": float(np.min(b)),
                      "sigma_min": cb.sigma_min }
        pass
    ks = stats.ks_2samp(samples["sob"], samples["random-rotation"])
    out["ks_sob_vs_rotation"] = { "statistic": float(ks.statistic),
                                  "pvalue": float(ks.pvalue) }
    return out

# Mean |p^_i - p_i| / (||P_i|| ||g||) of the sketched projection.
def sketchError(cb, k, N, rng, seed=0, path=Codebook.UNBIASED_PATH):
    sk = Codebook.sketch(cb, k, seed, path)
    stream = RandomStream.asStream(rng)
    g = stream.normals(N * cb.dim).reshape(N, cb.dim)
    exact = sk.exact(g)
    approx = sk.project(g)
    if (path == Codebook.UNBIASED_PATH):
        rows = np.linalg.norm(cb.pinv, axis=1)
    else:
        rows = np.linalg.norm(cb.columns, axis=0)
        pass
    scale = rows[None, :] * np.linalg.norm(g, axis=1)[:, None]
    return float(np.mean(np.abs(approx - exact) / scale))

#
# Error and variance comparisons
#

# Mean ||g - decode(compress(g))||^2 over N standard Gaussian g.
def quantizationMSE(cb, d, N, rng, variant, s=0):
    stream = RandomStream.asStream(rng)
    gs = stream.normals(N * d).reshape(N, d)
    err = 0.0
    for g in gs:
        r = g - HSQ.decode(HSQ.compress(g, cb, s, variant, stream), cb)
        err += float(r @ r)
        pass
    return err / N

def greedyVsUnbiased(cb, d, N, seed, s=0):
    return { "greedy": quantizationMSE(cb, d, N,
                                       RandomStream.Stream(seed, 31),
                                       HSQ.GREEDY, s),
             "unbiased": quantizationMSE(cb, d, N,
                                         RandomStream.Stream(seed, 31),
                                         HSQ.UNBIASED, s) }

# Quantization error against the pseudo-norm budget; 32 bits means the
# float itself (s = 0).
def bitSweep(cb, d, N, seed, bits=(2, 4, 6, 32), variant=HSQ.GREEDY):
    out = []
    for b in bits:
        s = 0 if b >= 32 else (1 << b) - 1
        mse = quantizationMSE(cb, d, N, RandomStream.Stream(seed, 32), variant,
                              s)
        out.append({ "bits": b, "levels": s, "mse": mse,
                     "relative_mse": mse / d,
                     "segment_bits": Wire.recordBits(cb.count, s) })
        pass
    return out

# Total variance of the mean of n independent compressions of g.
# Returns {n: (variance, n * variance / variance at the first n)}.
def averagingVariance(g, cb, ns=(1, 10, 100), trials=2000, rng=None,
                      variant=HSQ.UNBIASED, s=0):
    stream = RandomStream.asStream(rng)
    g = np.asarray(g, dtype=np.float64)
    out = {}
    base = None
    for n in ns:
        per = max(1, _chunk // n)
        means = []
        done = 0
        while (done < trials):
            b = min(per, trials - done)
            x = _hsq_draws(g, cb, variant, b * n, stream, s)
            means.append(x.reshape(b, n, len(g)).mean(axis=1))
            done += b
            pass
        v = float(np.sum(np.var(np.vstack(means), axis=0, ddof=1)))
        if (base is None):
            base = v * ns[0]
            pass
        out[n] = (v, v * n / base if base > 0 else float("nan"))
        pass
    return out

# Mean Elias-coded size of s = 1 QSGD codes of Gaussian gradients,
# against the analytic bound.
def qsgdSparseCost(d, trials, seed, bucket=Baselines.QSGD_BUCKET):
    stream = RandomStream.Stream(seed, 41)
    bits = 0.0
    nonzero = 0.0
    for i in range(trials):
        g = stream.normals(d)
        code = Baselines.qsgdCompress(g, 1, bucket, stream)
        bits += Wire.qsgdSparseBits(code)
        nonzero += np.count_nonzero(code.levels)
        pass
    nb = -(-d // bucket)
    return { "mean_bits": bits / trials,
             "bound": Wire.qsgdSparseBound(d, bucket),
             "mean_nonzero_per_bucket": nonzero / trials / nb,
             "sqrt_bucket": math.sqrt(min(bucket, d)) }

#
# The suite
#

_expected_ratios = ( ("hsq d'=8", "hsq", 8, 18.3),
            ("hsq d'=16", "hsq", 16, 36.6),
            ("hsq d'=64", "hsq", 64, 146.3),
            ("terngrad", "terngrad", None, 20.2),
            ("signsgd", "signsgd", None, 32.0) )

def _check_ratios():
    rows = []
    ok = True
    for (name, scheme, dp, want) in _expected_ratios:
        got = round(Wire.compressionRatio(scheme, 1 << 20, dp, 256, 63), 1)
        rows.append({ "scheme": name, "ratio": got, "expected": want })
        ok = ok and got == want
        pass
    return { "name": "compression_ratios", "passed": ok, "rows": rows }

def _check_unbiasedness(seed, N):
    stream = RandomStream.Stream(seed, 51)
    cb = Codebook.generate(Codebook.RANDOM_ROTATION, 16, 16, seed)
    worst = 0.0
    for i in range(20):
        g = stream.normals(16)
        z = testUnbiasedness(HSQ.UNBIASED, cb, g, N, stream)
        worst = max(worst, float(np.max(np.abs(z))))
        pass
    return { "name": "hsq_unbiasedness", "passed": worst <= Z_BAND,
             "max_abs_z": worst, "draws": N }

def _check_pseudo_norm(seed, N):
    stream = RandomStream.Stream(seed, 52)
    worst = 0.0
    for i in range(100):
        a = stream.normals(2)
        (u_min, u_max) = (float(min(a)), float(max(a)))
        u = u_min + stream.uniform() * (u_max - u_min)
        s = 1 + int(stream.uniform() * 63)
        z = testPseudoNormUnbiasedness(u, u_min, u_max, s, N, stream)
        worst = max(worst, abs(z))
        pass
    return { "name": "pseudo_norm_unbiasedness", "passed": worst <= Z_BAND,
             "max_abs_z": worst, "draws": N }

def _variance_configs():
    for s in (1, 4, 63):
        for m in (8, 16):
            yield (HSQ.UNBIASED, s, m)
            pass
        pass
    for s in (1, 63):
        for m in (8, 16):
            yield (HSQ.GREEDY, s, m)
            pass
        pass
    return

def _check_variance(seed, N):
    stream = RandomStream.Stream(seed, 53)
    rows = []
    for (variant, s, m) in _variance_configs():
        if (m == 8):
            cb = Codebook.generate(Codebook.RANDOM_ROTATION, 8, 8, seed)
        else:
            cb = Codebook.generateFullRank(Codebook.RANDOM_GAUSSIAN, 8, m,
                                           seed)
            pass
        r = testVarianceBound(cb, stream.normals(32), s, N, stream, variant)
        r.update(variant=variant, levels=s, codewords=m)
        rows.append(r)
        pass
    return { "name": "second_moment_bound",
             "passed": all(r["passed"] and r["loose_passed"] for r in rows),
             "rows": rows }

def _check_alpha(seed, N):
    rows = []
    for (method, m) in ((Codebook.SOB, 8), (Codebook.RANDOM_ROTATION, 8),
                        (Codebook.RANDOM_GAUSSIAN, 16),
                        (Codebook.KMEANS_GAUSSIAN, 16)):
        cb = Codebook.generateFullRank(method, 8, m, seed)
        r = testAlpha(cb, N, RandomStream.Stream(seed, 54, method))
        r["method"] = Codebook.method_names[method]
        rows.append(r)
        pass
    return { "name": "alpha_compressor",
             "passed": all(r["passed"] for r in rows), "rows": rows }

# A random CompressedGradient for codec checks, with its codebook.
def randomFrame(stream):
    d_prime = 1 + int(stream.uniform() * 16)
    m = d_prime + int(stream.uniform() * 3 * d_prime)
    d = 1 + int(stream.uniform() * 8 * d_prime)
    s = int(stream.uniform() * 4)
    s = 0 if s == 0 else (1 << (2 * s)) - 1
    variant = HSQ.UNBIASED if stream.uniform() < 0.5 else HSQ.GREEDY
    cb = Codebook.generateFullRank(Codebook.RANDOM_GAUSSIAN, d_prime, m,
                                   int(stream.uniform() * 1000))
    g = stream.normals(d)
    return (HSQ.compress(g, cb, s, variant, stream), cb)

# Encode and decode one frame: (identical, payload length matches).
def checkRoundtrip(cg):
    data = Wire.encode(cg)
    back = Wire.decode(data)
    payload = 8 * len(data) - Wire.HEADER_BITS
    want = 8 * (-(-int(Wire.payloadBits(
        "hsq-" + cg.variant, cg.total_dim, cg.segment_dim, cg.codeword_count,
        cg.levels)) // 8))
    return (back == cg, payload == want and 8 * len(data) == Wire.frameBits(cg))

def _check_wire(seed, frames):
    stream = RandomStream.Stream(seed, 55)
    bad = 0
    badlen = 0
    for i in range(frames):
        (cg, cb) = randomFrame(stream)
        (same, size) = checkRoundtrip(cg)
        bad += not same
        badlen += not size
        pass
    return { "name": "wire_roundtrip", "passed": bad == 0 and badlen == 0,
             "frames": frames, "mismatches": bad, "size_mismatches": badlen }

def _check_greedy(seed, N):
    cb = Codebook.generateFullRank(Codebook.RANDOM_GAUSSIAN, 8, 64, seed)
    r = greedyVsUnbiased(cb, 64, N, seed)
    return { "name": "greedy_vs_unbiased_mse",
             "passed": r["greedy"] < r["unbiased"], **r }

def _check_averaging(seed, trials):
    cb = Codebook.generate(Codebook.RANDOM_ROTATION, 16, 16, seed)
    g = RandomStream.Stream(seed, 56).normals(32)
    r = averagingVariance(g, cb, trials=trials,
                          rng=RandomStream.Stream(seed, 57))
    ok = all(1 / 1.5 <= scaled <= 1.5 for (v, scaled) in r.values())
    return { "name": "averaging_variance", "passed": ok,
             "rows": [ { "clients": n, "variance": v, "scaled": sc }
                       for (n, (v, sc)) in r.items() ] }

def _check_qsgd(seed, trials):
    r = qsgdSparseCost(4096, trials, seed)
    return { "name": "qsgd_sparse_cost",
             "passed": (r["mean_bits"] <= r["bound"]
                        and r["mean_nonzero_per_bucket"] <= r["sqrt_bucket"]),
             **r }

def _check_bits(seed, N):
    cb = Codebook.generateFullRank(Codebook.RANDOM_GAUSSIAN, 8, 64, seed)
    rows = bitSweep(cb, 64, N, seed)
    mse = [ r["mse"] for r in rows ]
    return { "name": "pseudo_norm_bits",
             "passed": all(a >= b for (a, b) in zip(mse, mse[1:])),
             "rows": rows }

def _check_codebooks(seed, N):
    r = compareCodebookMethods(32, N, seed)
    return { "name": "codebook_methods",
             "passed": r["ks_sob_vs_rotation"]["pvalue"] > 1e-3,
             "methods": r }

def _check_sketch(seed, N):
    cb = Codebook.generateFullRank(Codebook.RANDOM_GAUSSIAN, 16, 64, seed)
    rows = []
    for path in (Codebook.UNBIASED_PATH, Codebook.GREEDY_PATH):
        for k in (4, 8):
            e = sketchError(cb, k, N, RandomStream.Stream(seed, 58, k), seed,
                            path)
            rows.append({ "path": path, "dim": 16, "k": k, "error": e,
                          "limit": 2 / math.sqrt(k) })
            pass
        pass
    # Square orthonormal codebook: error must fall as k grows
    wide = Codebook.generate(Codebook.RANDOM_ROTATION, 64, 64, seed)
    decay = []
    for k in (16, 32, 48):
        e = sketchError(wide, k, N, RandomStream.Stream(seed, 59, k), seed)
        decay.append({ "path": Codebook.UNBIASED_PATH, "dim": 64, "k": k,
                       "error": e, "limit": 0.5 })
        pass
    return { "name": "sketch_error",
             "passed": (all(r["error"] <= r["limit"] for r in rows + decay)
                        and decay[2]["error"] < decay[0]["error"]),
             "rows": rows + decay }

# Run every check; quick uses smaller sample counts.
def runValidators(seed=0, quick=False):
    scale = 10 if quick else 1
    checks = [ _check_ratios(),
               _check_unbiasedness(seed, 100000 // scale),
               _check_pseudo_norm(seed, 100000 // scale),
               _check_variance(seed, 2000 // scale),
               _check_alpha(seed, 10000),
               _check_wire(seed, 10000 // scale),
               _check_greedy(seed, 1000 // scale),
               _check_averaging(seed, 2000 // scale),
               _check_qsgd(seed, 200 // scale),
               _check_bits(seed, 500 // scale),
               _check_codebooks(seed, 10000 // scale),
               _check_sketch(seed, 2000 // scale) ]
    for c in checks:
        debuglog.info("check %s: %s", c["name"],
                      "pass" if c["passed"] else "FAIL")
        pass
    return { "schema_version": REPORT_VERSION, "seed": seed, "quick": quick,
             "passed": all(c["passed"] for c in checks), "checks": checks }
