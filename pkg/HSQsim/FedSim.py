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

# Deterministic federated SGD simulator.
#
# The training samples are split at random into num_clients shards.  Each
# round the coordinator samples clients_per_round of them without
# replacement; every sampled client computes a stochastic gradient on its
# shard, compresses it and "uploads" it.  The coordinator decodes the
# messages in ascending client order, averages them and takes the step
# x <- x - eta * gbar.  Every random choice comes from a stream keyed by
# (seed, purpose, round[, client]), so a run is reproducible bit for bit
# whatever the worker count.

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import Baselines
from . import Codebook
from . import Errors
from . import HSQ
from . import Problems
from . import RandomStream
from . import SchemeMap
from . import Wire
from .DebugLog import debuglog

SCHEMA_VERSION = 1

# Desk-scale defaults
_default_clients = 50
_default_per_round = 10
_default_rounds = 200
_default_batch = 10

CONSTANT = "constant"
THEOREM1 = "theorem1"
THEOREM2 = "theorem2"
THEOREM3 = "theorem3"

lr_kinds = (CONSTANT, THEOREM1, THEOREM2, THEOREM3)

# Stream purposes
_PARTITION = 10
_SAMPLE = 11
_BATCH = 12
_UPLINK = 13
_DOWNLINK = 14
_CALIBRATE = 15

CSV_COLUMNS = ("round", "loss", "grad_norm_sq", "uplink_bits",
               "downlink_bits", "cumulative_bits")

#
# Step sizes and the bounds they come with
#

# Constant step 1/(L + 1/beta) with beta = R / sqrt(V_q T).
def lrTheorem1(L, R, V_q, T):
    return 1.0 / (L + math.sqrt(V_q * T) / R)

# Expected gap of the averaged iterate for convex f.
def theorem1Bound(R, V_q, L, T):
    return R * math.sqrt(V_q / T) + L * R * R / (2.0 * T)

def lrTheorem2(f0_gap, L, V_q, T):
    return math.sqrt(2.0 * f0_gap / (T * L * V_q))

# Bound on min_t E||grad f(x_t)||^2 for non-convex f.
def theorem2Bound(f0_gap, L, V_q, T):
    return math.sqrt(2.0 * f0_gap * L * V_q / T)

def theorem3Lcal(L, s, d, d_prime):
    # Undefined without pseudo-norm quantization
    if (s < 1):
        raise Errors.InvalidShape("the greedy step size needs s >= 1")
    return L * (1.0 + 4.0 / s) * d / d_prime

def lrTheorem3(T, lcal):
    return 1.0 / math.sqrt(T * lcal)

def theorem3Batch(T):
    return int(math.ceil(math.sqrt(T)))

# Bound on (1/T) sum_t ||grad f(x_t)||^2 for Greedy-HSQ with
# eta = 1/sqrt(T lcal) and batch sqrt(T); needs T > lcal/(1-alpha)^2.
def theorem3Bound(alpha, T, lcal, sigma2, f0_gap):
    root = math.sqrt(T * lcal)
    den = (1.0 - alpha) * root - lcal
    if (den <= 0):
        raise Errors.InvalidShape("T=%d too small for alpha=%g" % (T, alpha))
    return ((alpha * root + lcal) * sigma2 / math.sqrt(T)
            + 2.0 * lcal * f0_gap) / den

# (d/d') (m sigma_1(C+)^2 B' + (u_max - u_min)^2 / s); the range term is
# dropped when s = 0.
def vqFormula(d, d_prime, m, sigma_pinv, B, u_range=0.0, s=0):
    v = m * sigma_pinv ** 2 * B
    if (s >= 1):
        v += u_range ** 2 / s
        pass
    return (d / float(d_prime)) * v

# Range-free form (1 + 4/s) m sigma_1(C+)^2 B' per segment.
def vqLoose(d, d_prime, m, sigma_pinv, B, s):
    f = 1.0 if s < 1 else 1.0 + 4.0 / s
    return (d / float(d_prime)) * f * m * sigma_pinv ** 2 * B

# Factor by which HSQ scales the per-segment second moment bound.
def varianceBlowup(cb):
    return cb.count * cb.sigmaPinv() ** 2

def vqBound(cfg, cb, B, u_range=0.0, d=None):
    if (d is None):
        d = cfg.dim
        pass
    return vqFormula(d, cb.dim, cb.count, cb.sigmaPinv(), B, u_range,
                     cfg.scheme.levels)

#
# Configuration
#

class SchemeConfig:
    def __init__(self, scheme=SchemeMap.IDENTITY, segment_dim=8,
                 codewords=None, levels=0, codebook_method="random-gaussian",
                 codebook_seed=0, bucket=Baselines.QSGD_BUCKET,
                 sketch_dim=None):
        self.scheme = scheme
        self.segment_dim = segment_dim
        if (codewords is None):
            codewords = segment_dim
            pass
        self.codewords = codewords
        self.levels = levels
        self.codebook_method = codebook_method
        self.codebook_seed = codebook_seed
        self.bucket = bucket
        self.sketch_dim = sketch_dim
        return

    def isHSQ(self):
        return SchemeMap.isHSQ(self.scheme)

    def variant(self):
        if (self.scheme == SchemeMap.HSQ_UNBIASED):
            return HSQ.UNBIASED
        return HSQ.GREEDY

    def toDict(self):
        return { "name": SchemeMap.schemeToStr(self.scheme),
                 "segment_dim": self.segment_dim,
                 "codewords": self.codewords,
                 "levels": self.levels,
                 "codebook_method": self.codebook_method,
                 "codebook_seed": self.codebook_seed,
                 "bucket": self.bucket,
                 "sketch_dim": self.sketch_dim }

    pass

class LRSchedule:
    def __init__(self, kind=CONSTANT, **params):
        self.kind = kind
        self.params = params
        return

    def toDict(self):
        d = { "kind": self.kind }
        d.update(self.params)
        return d

    pass

def _int_field(errs, d, name, default, low=None, allow_none=False):
    v = d.get(name, default)
    if (v is None and allow_none):
        return None
    if (isinstance(v, bool) or not isinstance(v, int)):
        errs.append((name, "must be an integer, got %r" % (v,)))
        return default
    if (low is not None and v < low):
        errs.append((name, "must be >= %d, got %d" % (low, v)))
        pass
    return v

def _parse_scheme(errs, d):
    if not isinstance(d, dict):
        errs.append(("scheme", "must be an object"))
        return SchemeConfig()
    name = d.get("name", "identity")
    if ("variant" in d and str(name).lower() == "hsq"):
        name = "hsq-" + str(d["variant"])
        pass
    try:
        scheme = SchemeMap.strToScheme(name)
    except Errors.UnknownScheme:
        errs.append(("scheme.name", "unknown scheme %r" % (name,)))
        scheme = SchemeMap.IDENTITY
        pass
    sub = []
    segment_dim = _int_field(sub, d, "segment_dim", 8, 1)
    codewords = _int_field(sub, d, "codewords", segment_dim, 1)
    levels = _int_field(sub, d, "levels", 0, 0)
    codebook_seed = _int_field(sub, d, "codebook_seed", 0, 0)
    bucket = _int_field(sub, d, "bucket", Baselines.QSGD_BUCKET, 1)
    sketch_dim = _int_field(sub, d, "sketch_dim", None, 1, allow_none=True)
    method = d.get("codebook_method", "random-gaussian")
    errs.extend(("scheme." + f, p) for (f, p) in sub)

    if SchemeMap.isHSQ(scheme):
        if (codewords < segment_dim):
            errs.append(("scheme.codewords", "must be >= segment_dim"))
            pass
        try:
            m = Codebook.methodFromStr(method)
            if (m in (Codebook.SOB, Codebook.RANDOM_ROTATION)
                and codewords != segment_dim):
                errs.append(("scheme.codewords",
                             "%s needs codewords = segment_dim" % method))
                pass
        except (Errors.InvalidShape, AttributeError):
            errs.append(("scheme.codebook_method",
                         "unknown method %r" % (method,)))
            pass
        if (sketch_dim is not None and sketch_dim >= segment_dim):
            errs.append(("scheme.sketch_dim", "must be < segment_dim"))
            pass
        pass
    if (scheme == SchemeMap.QSGD and levels < 1):
        errs.append(("scheme.levels", "QSGD needs levels >= 1"))
        pass
    return SchemeConfig(scheme, segment_dim, codewords, levels, method,
                        codebook_seed, bucket, sketch_dim)

def _parse_lr(errs, d):
    if not isinstance(d, dict):
        errs.append(("lr", "must be an object"))
        return LRSchedule(CONSTANT, eta=0.1)
    kind = d.get("kind", CONSTANT)
    if kind not in lr_kinds:
        errs.append(("lr.kind", "must be one of %s" % ", ".join(lr_kinds)))
        kind = CONSTANT
        pass
    params = {}
    for (k, v) in d.items():
        if (k == "kind"):
            continue
        if (isinstance(v, bool) or not isinstance(v, (int, float))
            or not v > 0):
            errs.append(("lr." + k, "must be a positive number"))
            continue
        params[k] = v
        pass
    if (kind == CONSTANT and "eta" not in params):
        errs.append(("lr.eta", "constant schedule needs eta"))
        pass
    return LRSchedule(kind, **params)

class FedConfig:
    def __init__(self):
        self.num_clients = _default_clients
        self.clients_per_round = _default_per_round
        self.rounds = _default_rounds
        self.local_batch = _default_batch
        self.lr = LRSchedule(CONSTANT, eta=0.1)
        self.scheme = SchemeConfig()
        self.downlink_compressed = False
        self.seed = 0
        self.workers = 1
        self.log_every = 0
        self.problem = { "kind": Problems.QUADRATIC, "dim": 64 }
        self.dim = None
        self.preset = None
        return

    # Parse and validate; every bad field is reported in one ConfigErr.
    @classmethod
    def fromDict(cls, d):
        if not isinstance(d, dict):
            raise Errors.ConfigErr([("", "config must be a JSON object")])
        errs = []
        c = cls()
        if ("seed" in d):
            c.seed = _int_field(errs, d, "seed", 0, 0)
        else:
            errs.append(("seed", "an explicit seed is required"))
            pass
        c.num_clients = _int_field(errs, d, "num_clients", _default_clients, 1)
        c.clients_per_round = _int_field(errs, d, "clients_per_round",
                                         _default_per_round, 1)
        if (isinstance(c.clients_per_round, int)
            and isinstance(c.num_clients, int)
            and c.clients_per_round > c.num_clients):
            errs.append(("clients_per_round", "must be <= num_clients"))
            pass
        c.rounds = _int_field(errs, d, "rounds", _default_rounds, 1)
        batch = d.get("local_batch", _default_batch)
        if (batch == THEOREM3):
            c.local_batch = THEOREM3
        else:
            c.local_batch = _int_field(errs, d, "local_batch",
                                       _default_batch, 1, allow_none=True)
            pass
        c.workers = _int_field(errs, d, "workers", 1, 1)
        c.log_every = _int_field(errs, d, "log_every", 0, 0)
        dl = d.get("downlink_compressed", False)
        if not isinstance(dl, bool):
            errs.append(("downlink_compressed", "must be true or false"))
            dl = False
            pass
        c.downlink_compressed = dl
        c.scheme = _parse_scheme(errs, d.get("scheme", {}))
        c.lr = _parse_lr(errs, d.get("lr", { "kind": CONSTANT, "eta": 0.1 }))
        if (dl and not c.scheme.isHSQ()):
            errs.append(("downlink_compressed",
                         "downlink compression needs an HSQ scheme"))
            pass
        if (c.lr.kind == THEOREM3 and c.scheme.levels < 1):
            errs.append(("lr.kind", "theorem3 step size needs levels >= 1"))
            pass
        problem = d.get("problem", c.problem)
        perrs = Problems.problemErrors(problem)
        errs.extend(("problem." + f if f else "problem", p)
                    for (f, p) in perrs)
        if (not perrs):
            c.problem = dict(problem)
            pass
        preset = d.get("preset")
        if (preset is not None and not isinstance(preset, dict)):
            errs.append(("preset", "must be an object"))
        elif (preset is not None):
            c.preset = dict(preset)
            pass
        for k in d:
            if k not in _known_fields:
                errs.append((k, "unknown field"))
                pass
            pass
        if (errs):
            raise Errors.ConfigErr(errs)
        return c

    def toDict(self):
        r = { "schema_version": SCHEMA_VERSION,
              "seed": self.seed,
              "num_clients": self.num_clients,
              "clients_per_round": self.clients_per_round,
              "rounds": self.rounds,
              "local_batch": self.local_batch,
              "downlink_compressed": self.downlink_compressed,
              "workers": self.workers,
              "log_every": self.log_every,
              "problem": dict(self.problem),
              "scheme": self.scheme.toDict(),
              "lr": self.lr.toDict() }
        if (self.preset is not None):
            r["preset"] = dict(self.preset)
            pass
        return r

    pass

_known_fields = ("schema_version", "seed", "num_clients", "clients_per_round",
                 "rounds", "local_batch", "downlink_compressed", "workers",
                 "log_every", "problem", "scheme", "lr", "preset")

def loadConfig(fn):
    try:
        with open(fn) as f:
            d = json.load(f)
            pass
    except ValueError as e:
        raise Errors.ConfigErr([("", "invalid JSON: %s" % e)])
    return FedConfig.fromDict(d)

#
# Simulation
#

class RoundLog:
    def __init__(self, round, loss, grad_norm_sq, uplink_bits, downlink_bits,
                 sampled_clients, accuracy=None):
        self.round = round
        self.loss = loss
        self.grad_norm_sq = grad_norm_sq
        self.uplink_bits = uplink_bits
        self.downlink_bits = downlink_bits
        self.sampled_clients = sampled_clients
        self.accuracy = accuracy
        return

    def __eq__(self, other):
        if not isinstance(other, RoundLog):
            return NotImplemented
        return self.__dict__ == other.__dict__

    def __repr__(self):
        return ("RoundLog(%d, loss=%r, up=%d, down=%d)"
                % (self.round, self.loss, self.uplink_bits,
                   self.downlink_bits))

    pass

class Client:
    def __init__(self, cid, shard):
        self.cid = cid
        self.shard = shard
        return

    def batch(self, size, stream):
        if (size is None or size >= len(self.shard)):
            return self.shard
        return self.shard[np.sort(stream.sample(len(self.shard), size))]

    pass

class Coordinator:
    def __init__(self, cfg, problem):
        self.cfg = cfg
        self.p = problem
        cfg.dim = problem.dim
        if (cfg.num_clients > problem.num_samples):
            raise Errors.ConfigErr([("num_clients",
                                     "more clients than samples")])
        order = RandomStream.Stream(cfg.seed, _PARTITION).permutation(
            problem.num_samples)
        self.clients = [ Client(i, np.sort(s)) for (i, s) in
                         enumerate(np.array_split(order, cfg.num_clients)) ]

        sc = cfg.scheme
        self.cb = None
        self.projector = None
        if sc.isHSQ():
            self.cb = Codebook.generateFullRank(sc.codebook_method,
                                                sc.segment_dim, sc.codewords,
                                                sc.codebook_seed)
            if (sc.sketch_dim is not None):
                self.projector = Codebook.sketch(self.cb, sc.sketch_dim,
                                                 sc.codebook_seed,
                                                 sc.variant())
                pass
            pass

        if (cfg.local_batch == THEOREM3):
            self.batch_size = theorem3Batch(cfg.rounds)
        else:
            self.batch_size = cfg.local_batch
            pass
        self.uplink_message_bits = Wire.messageBits(
            sc.scheme, problem.dim, sc.segment_dim, sc.codewords, sc.levels,
            sc.bucket)
        if (cfg.downlink_compressed):
            self.downlink_message_bits = self.uplink_message_bits
        else:
            self.downlink_message_bits = Wire.messageBits(SchemeMap.IDENTITY,
                                                          problem.dim)
            pass
        self.eta = resolveStepSize(cfg, problem, self.cb, self.batch_size)
        self.x = np.array(problem.x0, dtype=np.float64)
        self.x_sum = np.zeros(problem.dim)
        self.steps = 0
        self.logs = []
        self.pool = None
        debuglog.info("coordinator: %s, %d clients, %d per round, eta=%g",
                      SchemeMap.schemeToStr(sc.scheme), cfg.num_clients,
                      cfg.clients_per_round, self.eta)
        return

    def sampleClients(self, t):
        stream = RandomStream.Stream(self.cfg.seed, _SAMPLE, t)
        return sorted(int(c) for c in stream.sample(self.cfg.num_clients,
                                                     self.cfg.clients_per_round))

    # Gradient of client cid at round t, compressed.
    def clientMessage(self, x, t, cid, seed=None):
        if (seed is None):
            seed = self.cfg.seed
            pass
        client = self.clients[cid]
        idx = client.batch(self.batch_size,
                           RandomStream.Stream(seed, _BATCH, t, cid))
        g = self.p.gradient(x, idx)
        stream = RandomStream.Stream(seed, _UPLINK, t, cid)
        sc = self.cfg.scheme
        if sc.isHSQ():
            return HSQ.compress(g, self.cb, sc.levels, sc.variant(), stream,
                                self.projector)
        return Baselines.compressWith(sc.scheme, g, stream, sc.levels,
                                      sc.bucket)

    def aggregate(self, msgs):
        if self.cfg.scheme.isHSQ():
            return HSQ.aggregate(msgs, self.cb)
        return Baselines.aggregateBaseline(msgs)

    # The averaged gradient the coordinator forms at round t.
    def roundGradient(self, x, t, clients=None, seed=None):
        if (clients is None):
            clients = self.sampleClients(t)
            pass
        x = np.asarray(x, dtype=np.float64)
        if (self.cfg.workers > 1):
            if (self.pool is None):
                self.pool = ThreadPoolExecutor(max_workers=self.cfg.workers)
                pass
            msgs = list(self.pool.map(
                lambda c: self.clientMessage(x, t, c, seed), clients))
        else:
            msgs = [ self.clientMessage(x, t, c, seed) for c in clients ]
            pass
        return self.aggregate(msgs)

    def step(self, t):
        x = self.x
        loss = self.p.loss(x)
        full = self.p.gradient(x)
        clients = self.sampleClients(t)
        gbar = self.roundGradient(x, t, clients)
        delta = -self.eta * gbar
        if (self.cfg.downlink_compressed):
            sc = self.cfg.scheme
            dc = HSQ.compress(delta, self.cb, sc.levels, sc.variant(),
                              RandomStream.Stream(self.cfg.seed, _DOWNLINK,
                                                  t),
                              self.projector)
            delta = HSQ.decode(dc, self.cb)
            pass
        self.x = x + delta
        self.x_sum += self.x
        self.steps += 1

        n = len(clients)
        log = RoundLog(t, loss, float(full @ full),
                       n * self.uplink_message_bits,
                       n * self.downlink_message_bits, clients,
                       self.p.accuracy(x))
        if (not math.isfinite(loss)):
            debuglog.warn("round %d: loss is %r", t, loss)
            pass
        if (self.cfg.log_every and t % self.cfg.log_every == 0):
            debuglog.info("round %d loss %.6g |grad|^2 %.6g", t, loss,
                          log.grad_norm_sq)
            pass
        self.logs.append(log)
        return log

    def run(self, rounds=None):
        if (rounds is None):
            rounds = self.cfg.rounds
            pass
        try:
            for t in range(self.steps, self.steps + rounds):
                self.step(t)
                pass
        finally:
            if (self.pool is not None):
                self.pool.shutdown()
                self.pool = None
                pass
            pass
        return self.logs

    def averageIterate(self):
        if (self.steps == 0):
            return self.x.copy()
        return self.x_sum / self.steps

    pass

# Constant step for the configured schedule.  Missing theorem inputs
# are derived from the problem and written back into cfg.lr.
def resolveStepSize(cfg, p, cb, batch):
    lr = cfg.lr
    if (lr.kind == CONSTANT):
        return float(lr.params["eta"])
    prm = lr.params
    sc = cfg.scheme
    T = int(prm.get("T", cfg.rounds))
    L = float(prm.get("L", p.smoothness))
    prm["T"] = T
    prm["L"] = L
    if (lr.kind == THEOREM3):
        lcal = float(prm.get("lcal", theorem3Lcal(L, sc.levels, p.dim,
                                                  sc.segment_dim)))
        prm["lcal"] = lcal
        return lrTheorem3(T, lcal)

    if ("V_q" not in prm):
        prm["V_q"] = _auto_vq(cfg, p, cb, batch)
        pass
    V_q = float(prm["V_q"])
    if (lr.kind == THEOREM1):
        if ("R" not in prm):
            if (p.x_star is None):
                raise Errors.ConfigErr([("lr.R", "problem has no known"
                                         " optimum, give R")])
            prm["R"] = float(np.linalg.norm(p.x0 - p.x_star))
            pass
        return lrTheorem1(L, float(prm["R"]), V_q, T)
    if ("f0_gap" not in prm):
        prm["f0_gap"] = float(p.loss(p.x0) - p.f_star)
        pass
    return lrTheorem2(float(prm["f0_gap"]), L, V_q, T)

def _auto_vq(cfg, p, cb, batch):
    sc = cfg.scheme
    if not (sc.isHSQ() or sc.scheme == SchemeMap.IDENTITY):
        raise Errors.ConfigErr([("lr.V_q", "give V_q explicitly for %s"
                                 % SchemeMap.schemeToStr(sc.scheme))])
    if (p.noise_bound is None or p.noise_segment_dim != sc.segment_dim):
        radius = 0.0
        if (p.x_star is not None):
            radius = 0.5 * float(np.linalg.norm(p.x0 - p.x_star))
            pass
        pts = Problems.samplePoints(p, 16, radius,
                                    RandomStream.Stream(cfg.seed, _CALIBRATE))
        p.calibrate(sc.segment_dim, pts, batch)
        pass
    nseg = Wire.numSegments(p.dim, sc.segment_dim)
    if (cb is None):
        return nseg * p.noise_bound
    # The range-free form, since u_max - u_min is not known in advance
    return vqLoose(nseg * sc.segment_dim, sc.segment_dim, cb.count,
                   cb.sigmaPinv(), p.noise_bound, sc.levels)

def run(cfg, p):
    return Coordinator(cfg, p).run()

#
# Output
#

def writeCSV(logs, f):
    w = csv.writer(f, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    cumulative = 0
    for l in logs:
        cumulative += l.uplink_bits + l.downlink_bits
        w.writerow((l.round, repr(float(l.loss)), repr(float(l.grad_norm_sq)),
                    l.uplink_bits, l.downlink_bits, cumulative))
        pass
    return

def summary(coord):
    logs = coord.logs
    p = coord.p
    last = logs[-1] if logs else None
    final_loss = p.loss(coord.x)
    avg = coord.averageIterate()
    s = { "schema_version": SCHEMA_VERSION,
          "config": coord.cfg.toDict(),
          "problem": p.describe(),
          "step_size": coord.eta,
          "rounds": len(logs),
          "final_loss": final_loss,
          "final_gap": None if p.f_star is None else final_loss - p.f_star,
          "final_accuracy": p.accuracy(coord.x),
          "average_iterate_loss": p.loss(avg),
          "min_grad_norm_sq": min((l.grad_norm_sq for l in logs),
                                  default=None),
          "total_uplink_bits": sum(l.uplink_bits for l in logs),
          "total_downlink_bits": sum(l.downlink_bits for l in logs),
          "uplink_bits_per_client": coord.uplink_message_bits }
    if (last is not None):
        s["last_logged_loss"] = last.loss
        pass
    return s
