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

# Objectives with stochastic-gradient oracles for the training experiments.
#
# Every objective is an average f(x) = (1/N) sum_i f_i(x) over N samples, so
# the mean of per-sample gradients is exactly the full gradient.

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.special

from . import Errors
from . import RandomStream
from .DebugLog import debuglog

QUADRATIC = "quadratic"
LOGISTIC = "logistic"
TINYMLP = "tinymlp"

kinds = (QUADRATIC, LOGISTIC, TINYMLP)

# Logistic regression defaults
_logistic_reg = 1e-3
_logistic_margin = 0.5

# TinyMLP must stay small enough for desk-scale runs
_mlp_max_params = 5000

# Base class.  Subclasses provide loss() and sampleGradients().
class Problem:
    kind = None

    def __init__(self, dim, num_samples, x0):
        self.dim = dim
        self.num_samples = num_samples
        self.x0 = x0
        self.x_star = None
        self.f_star = None
        self.smoothness = None
        # B' for some segment length, set by calibrate()
        self.noise_bound = None
        self.noise_segment_dim = None
        # sigma^2 of a single-sample gradient, set by calibrate()
        self.noise_variance = None
        return

    def _indices(self, idx):
        if (idx is None):
            return np.arange(self.num_samples)
        idx = np.asarray(idx, dtype=np.int64)
        if (len(idx) == 0):
            raise Errors.EmptyInput("empty batch")
        if (idx.min() < 0 or idx.max() >= self.num_samples):
            raise Errors.InvalidShape("batch index out of range")
        return idx

    def loss(self, x, idx=None):
        raise NotImplementedError

    def sampleGradients(self, x, idx=None):
        raise NotImplementedError

    def gradient(self, x, idx=None):
        return np.mean(self.sampleGradients(x, idx), axis=0)

    def accuracy(self, x):
        return None

    def describe(self):
        return { "kind": self.kind, "dim": self.dim,
                 "samples": self.num_samples,
                 "smoothness": self.smoothness, "f_star": self.f_star }

    def calibrate(self, d_prime, points, batch=1):
        self.noise_bound = estimateSecondMoment(self, points, d_prime, batch)
        self.noise_segment_dim = d_prime
        self.noise_variance = estimateNoiseVariance(self, points, batch)
        debuglog._log("%s calibrated: B'=%g sigma2=%g", self.kind,
                      self.noise_bound, self.noise_variance)
        return

    pass

# Least squares f(x) = (1/2N) ||A x - b||^2 on seeded Gaussian data.
class QuadraticProblem(Problem):
    kind = QUADRATIC

    def __init__(self, dim, num_samples=1000, noise=0.05, seed=0):
        stream = RandomStream.Stream(seed, 1, dim, num_samples)
        Problem.__init__(self, dim, num_samples, np.zeros(dim))
        self.noise = noise
        self.A = stream.normals(num_samples * dim).reshape(num_samples, dim)
        self.x_true = stream.normals(dim)
        self.b = self.A @ self.x_true + noise * stream.normals(num_samples)
        self.x_star = scipy.linalg.lstsq(self.A, self.b)[0]
        self.f_star = self.loss(self.x_star)
        h = self.A.T @ self.A / num_samples
        ev = np.linalg.eigvalsh(h)
        self.smoothness = float(ev[-1])
        self.strong_convexity = float(ev[0])
        return

    def residuals(self, x, idx=None):
        idx = self._indices(idx)
        return self.A[idx] @ x - self.b[idx]

    def loss(self, x, idx=None):
        r = self.residuals(x, idx)
        return 0.5 * float(np.mean(r * r))

    def sampleGradients(self, x, idx=None):
        idx = self._indices(idx)
        r = self.A[idx] @ x - self.b[idx]
        return self.A[idx] * r[:, None]

    def gradient(self, x, idx=None):
        idx = self._indices(idx)
        r = self.A[idx] @ x - self.b[idx]
        return self.A[idx].T @ r / len(idx)

    pass

# L2-regularised logistic regression on separable Gaussian clouds.
class LogisticProblem(Problem):
    kind = LOGISTIC

    def __init__(self, dim, num_samples=1000, margin=_logistic_margin,
                 reg=_logistic_reg, seed=0):
        stream = RandomStream.Stream(seed, 2, dim, num_samples)
        Problem.__init__(self, dim, num_samples, np.zeros(dim))
        self.reg = reg
        w = stream.normals(dim)
        w /= np.linalg.norm(w)
        z = stream.normals(num_samples * dim).reshape(num_samples, dim)
        proj = z @ w
        side = np.where(proj < 0, -1.0, 1.0)
        # Push points inside the margin out to it
        push = np.maximum(0.0, margin - np.abs(proj)) * side
        self.A = z + push[:, None] * w[None, :]
        self.y = side
        self.w_true = w

        sq = np.linalg.eigvalsh(self.A.T @ self.A / num_samples)[-1]
        self.smoothness = float(sq / 4.0 + reg)
        res = scipy.optimize.minimize(lambda v: (self.loss(v),
                                                 self.gradient(v)),
                                      self.x0, jac=True, method="L-BFGS-B",
                                      options={ "gtol": 1e-12,
                                                "ftol": 1e-15,
                                                "maxiter": 10000 })
        self.x_star = res.x
        self.f_star = float(res.fun)
        return

    def _margins(self, x, idx):
        return self.y[idx] * (self.A[idx] @ x)

    def loss(self, x, idx=None):
        idx = self._indices(idx)
        z = self._margins(x, idx)
        return (float(np.mean(np.logaddexp(0.0, -z)))
                + 0.5 * self.reg * float(x @ x))

    def sampleGradients(self, x, idx=None):
        idx = self._indices(idx)
        z = self._margins(x, idx)
        coef = -self.y[idx] * scipy.special.expit(-z)
        return self.A[idx] * coef[:, None] + self.reg * x[None, :]

    def gradient(self, x, idx=None):
        idx = self._indices(idx)
        z = self._margins(x, idx)
        coef = -self.y[idx] * scipy.special.expit(-z)
        return self.A[idx].T @ coef / len(idx) + self.reg * x

    def accuracy(self, x):
        pred = np.where(self.A @ x < 0, -1.0, 1.0)
        return float(np.mean(pred == self.y))

    pass

# Dense tanh network with a softmax cross-entropy head.
#
# Parameters are flattened layer by layer as W (out x in) then b (out).
class TinyMLPProblem(Problem):
    kind = TINYMLP

    def __init__(self, layers=(2, 16, 2), num_samples=1000, spread=1.5,
                 seed=0):
        layers = tuple(int(n) for n in layers)
        if (len(layers) < 2 or min(layers) < 1):
            raise Errors.InvalidShape("bad layer sizes %r" % (layers,))
        if (len(layers) > 4):
            raise Errors.InvalidShape("TinyMLP has at most 3 dense layers")
        self.layers = layers
        self.shapes = [ (layers[i + 1], layers[i])
                        for i in range(len(layers) - 1) ]
        dim = sum(o * i + o for (o, i) in self.shapes)
        if (dim > _mlp_max_params):
            raise Errors.InvalidShape("TinyMLP has %d > %d parameters"
                                      % (dim, _mlp_max_params))
        stream = RandomStream.Stream(seed, 3, dim, num_samples)
        classes = layers[-1]
        centers = spread * stream.normals(classes * layers[0]).reshape(
            classes, layers[0])
        self.labels = (stream.uniforms(num_samples) * classes).astype(np.int64)
        self.X = (centers[self.labels]
                  + stream.normals(num_samples * layers[0]).reshape(
                      num_samples, layers[0]))

        x0 = []
        for (o, i) in self.shapes:
            x0.append(stream.normals(o * i) / np.sqrt(i))
            x0.append(np.zeros(o))
            pass
        Problem.__init__(self, dim, num_samples, np.concatenate(x0))
        # Cross-entropy is nonnegative; 0 is the bound used for f_star
        self.f_star = 0.0
        self.smoothness = estimateSmoothness(self, stream.substream(1))
        return

    def unpack(self, x):
        params = []
        pos = 0
        for (o, i) in self.shapes:
            w = x[pos:pos + o * i].reshape(o, i)
            pos += o * i
            b = x[pos:pos + o]
            pos += o
            params.append((w, b))
            pass
        return params

    def _forward(self, x, idx):
        acts = [ self.X[idx] ]
        params = self.unpack(x)
        for (n, (w, b)) in enumerate(params):
            z = acts[-1] @ w.T + b
            if (n < len(params) - 1):
                z = np.tanh(z)
                pass
            acts.append(z)
            pass
        return (params, acts)

    def loss(self, x, idx=None):
        idx = self._indices(idx)
        (params, acts) = self._forward(x, idx)
        logits = acts[-1]
        picked = logits[np.arange(len(idx)), self.labels[idx]]
        return float(np.mean(scipy.special.logsumexp(logits, axis=1) - picked))

    def _backprop(self, x, idx, per_sample):
        (params, acts) = self._forward(x, idx)
        n = len(idx)
        delta = scipy.special.softmax(acts[-1], axis=1)
        delta[np.arange(n), self.labels[idx]] -= 1.0
        grads = []
        for l in range(len(params) - 1, -1, -1):
            (w, b) = params[l]
            a = acts[l]
            if (per_sample):
                gw = np.einsum("no,ni->noi", delta, a).reshape(n, -1)
                gb = delta
            else:
                gw = (delta.T @ a).reshape(-1) / n
                gb = np.mean(delta, axis=0)
                pass
            grads.append((gw, gb))
            if (l > 0):
                delta = (delta @ w) * (1.0 - a * a)
                pass
            pass
        grads.reverse()
        flat = []
        for (gw, gb) in grads:
            flat.append(gw)
            flat.append(gb)
            pass
        if (per_sample):
            return np.hstack(flat)
        return np.concatenate(flat)

    def sampleGradients(self, x, idx=None):
        return self._backprop(x, self._indices(idx), True)

    def gradient(self, x, idx=None):
        return self._backprop(x, self._indices(idx), False)

    def accuracy(self, x):
        idx = np.arange(self.num_samples)
        (params, acts) = self._forward(x, idx)
        return float(np.mean(np.argmax(acts[-1], axis=1) == self.labels))

    def describe(self):
        d = Problem.describe(self)
        d["layers"] = list(self.layers)
        return d

    pass

# Mean gradient over the batch.
def stochasticGradient(p, x, batch_indices):
    return p.gradient(np.asarray(x, dtype=np.float64), batch_indices)

# Max over coordinates of |central difference - analytic| relative to
# |analytic| + 1e-12.
def finiteDiffCheck(p, x, h=1e-5):
    if (h <= 0):
        raise Errors.InvalidShape("finite difference step must be positive")
    x = np.asarray(x, dtype=np.float64)
    analytic = p.gradient(x)
    fd = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        fd[i] = (p.loss(x + e) - p.loss(x - e)) / (2 * h)
        pass
    return float(np.max(np.abs(fd - analytic) / (np.abs(analytic) + 1e-12)))

def _batch_factor(n_total, batch):
    # Variance of a batch mean drawn without replacement, relative to one
    # sample
    if (batch is None or batch >= n_total):
        return 0.0
    return (n_total - batch) / (batch * (n_total - 1.0))

def _segment_energy(v, d_prime):
    v = np.atleast_2d(v)
    nseg = -(-v.shape[1] // d_prime)
    padded = np.zeros((v.shape[0], nseg * d_prime))
    padded[:, :v.shape[1]] = v
    return np.sum(padded.reshape(v.shape[0], nseg, d_prime) ** 2, axis=2)

# B': max over the points and segments of E ||g'(x)||^2.
#
# The expectation over a batch drawn without replacement is computed
# exactly from the per-sample gradients; batch=None means full batch.
def estimateSecondMoment(p, x_samples, d_prime, batch=1):
    f = _batch_factor(p.num_samples, batch)
    best = 0.0
    for x in x_samples:
        g = p.sampleGradients(np.asarray(x, dtype=np.float64))
        full = np.mean(g, axis=0)
        mean_sq = _segment_energy(full, d_prime)[0]
        per_sample = np.mean(_segment_energy(g, d_prime), axis=0)
        second = mean_sq + f * (per_sample - mean_sq)
        best = max(best, float(np.max(second)))
        pass
    return best

# sigma^2: max over the points of E ||g(x) - grad f(x)||^2.
def estimateNoiseVariance(p, x_samples, batch=1):
    f = _batch_factor(p.num_samples, batch)
    best = 0.0
    for x in x_samples:
        g = p.sampleGradients(np.asarray(x, dtype=np.float64))
        var = float(np.mean(np.sum((g - np.mean(g, axis=0)) ** 2, axis=1)))
        best = max(best, f * var)
        pass
    return best

# Local estimate of L from gradient differences along random directions
# around x0.
def estimateSmoothness(p, stream, points=8, step=1e-3):
    best = 0.0
    for i in range(points):
        x = p.x0 + stream.normals(p.dim) * (0.5 if i else 0.0)
        v = stream.normals(p.dim)
        v *= step / np.linalg.norm(v)
        diff = np.linalg.norm(p.gradient(x + v) - p.gradient(x - v))
        best = max(best, float(diff / (2 * step)))
        pass
    return best

# x0, x* (when known) and points spread around the segment joining
# them, used to calibrate B' and sigma^2.
def samplePoints(p, count, radius, stream):
    pts = [ p.x0 ]
    centre = p.x0 if p.x_star is None else p.x_star
    if (p.x_star is not None):
        pts.append(p.x_star)
        pass
    for i in range(count):
        v = stream.normals(p.dim)
        v *= radius / np.linalg.norm(v)
        t = stream.uniform()
        pts.append(t * p.x0 + (1 - t) * centre + v)
        pass
    return pts

# Fields each problem kind accepts, with their defaults
_fields = {
    QUADRATIC: { "dim": 64, "samples": 1000, "seed": 0, "noise": 0.05 },
    LOGISTIC: { "dim": 64, "samples": 1000, "seed": 0,
                "margin": _logistic_margin, "reg": _logistic_reg },
    TINYMLP: { "layers": (2, 16, 2), "samples": 1000, "seed": 0,
               "spread": 1.5 },
    }

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)

def _is_number(v):
    return ((isinstance(v, (int, float)) and not isinstance(v, bool))
            and np.isfinite(v))

def _layer_errors(layers):
    if (isinstance(layers, str) or not hasattr(layers, "__len__")
        or not all(_is_int(n) for n in layers)):
        return [("layers", "must be a list of integers")]
    if (len(layers) < 2 or len(layers) > 4):
        return [("layers", "needs 2 to 4 sizes, got %d" % len(layers))]
    if (min(layers) < 1):
        return [("layers", "sizes must be >= 1")]
    n = sum(layers[i + 1] * layers[i] + layers[i + 1]
            for i in range(len(layers) - 1))
    if (n > _mlp_max_params):
        return [("layers", "%d parameters, at most %d"
                 % (n, _mlp_max_params))]
    return []

# (field, problem) pairs for a problem config section; empty if valid.
def problemErrors(cfg):
    if not isinstance(cfg, dict):
        return [("", "must be an object")]
    kind = cfg.get("kind", QUADRATIC)
    if kind not in kinds:
        return [("kind", "must be one of %s" % ", ".join(kinds))]
    errs = []
    for k in sorted(cfg):
        v = cfg[k]
        if (k == "kind"):
            continue
        if k not in _fields[kind]:
            errs.append((k, "unknown field for %s" % kind))
        elif (k == "layers"):
            errs.extend(_layer_errors(v))
        elif (k in ("dim", "samples", "seed")):
            low = { "dim": 1, "samples": 2, "seed": 0 }[k]
            if not _is_int(v):
                errs.append((k, "must be an integer, got %r" % (v,)))
            elif (v < low):
                errs.append((k, "must be >= %d, got %d" % (low, v)))
                pass
        elif not _is_number(v):
            errs.append((k, "must be a number, got %r" % (v,)))
        elif (v < 0 or (k == "spread" and v == 0)):
            errs.append((k, "must be positive, got %r" % (v,)))
            pass
        pass
    return errs

# Build a problem from its config section.
def makeProblem(cfg):
    cfg = dict(cfg)
    errs = problemErrors(cfg)
    if (errs):
        raise Errors.ConfigErr([ ("problem." + f if f else "problem", p)
                                 for (f, p) in errs ])
    kind = cfg.get("kind", QUADRATIC)
    prm = dict(_fields[kind])
    prm.update(cfg)
    if (kind == QUADRATIC):
        return QuadraticProblem(prm["dim"], prm["samples"],
                                float(prm["noise"]), prm["seed"])
    if (kind == LOGISTIC):
        return LogisticProblem(prm["dim"], prm["samples"],
                               float(prm["margin"]), float(prm["reg"]),
                               prm["seed"])
    return TinyMLPProblem(tuple(prm["layers"]), prm["samples"],
                          float(prm["spread"]), prm["seed"])
