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

import argparse
import io
import json
import math
import sys

import numpy as np

from . import Codebook
from . import Errors
from . import FedSim
from . import HSQ
from . import Metrics
from . import Problems
from . import SchemeMap
from . import Wire
from .DebugLog import debuglog

# Exit codes
EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_ERROR = 3

_default_ratio_d = 1 << 20
_default_kappa = 4

PRESETS = ("extreme", "compact", "high-precision")

class _Parser(argparse.ArgumentParser):
    # Usage errors are reported as JSON like every other error
    def error(self, message):
        raise Errors.ConfigErr([("argv", message)])

    pass

def _emit(obj, out=None):
    if (out is None):
        json.dump(obj, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        with open(out, "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")
            pass
        pass
    return

#
# codebook gen
#

def cmdCodebook(args):
    cb = Codebook.generate(args.method, args.dim, args.count, args.seed)
    Codebook.write(cb, args.out)
    _emit({ "file": args.out, "method": Codebook.method_names[cb.method],
            "dim": cb.dim, "count": cb.count, "seed": cb.seed,
            "sigma_min": cb.sigma_min, "sigma_max": cb.sigma_max })
    return EXIT_OK

#
# quantize / roundtrip
#

_npy_magic = b"\x93NUMPY"

# Whole contents of a file, or of stdin for "-".
def readInput(fn):
    if (fn == "-"):
        return sys.stdin.buffer.read()
    with open(fn, "rb") as f:
        return f.read()
    return

# A .npy array or whitespace separated text, flattened.
def loadGradient(fn):
    data = readInput(fn)
    try:
        if (data.startswith(_npy_magic)):
            g = np.load(io.BytesIO(data), allow_pickle=False)
        else:
            g = np.array(data.decode("ascii").split(), dtype=np.float64)
            pass
        g = np.asarray(g, dtype=np.float64).reshape(-1)
    except ValueError as e:
        raise Errors.ConfigErr([("input", "%s is not a gradient: %s"
                                 % (fn, e))])
    if (g.size == 0):
        raise Errors.ConfigErr([("input", "%s is empty" % fn)])
    return g

def _codebook(args):
    if (args.codebook):
        return Codebook.read(args.codebook)
    return Codebook.generateFullRank(args.method, args.dprime, args.m,
                                     args.codebook_seed)

def cmdQuantize(args):
    g = loadGradient(args.input)
    cb = _codebook(args)
    cg = HSQ.compress(g, cb, args.s, args.variant, args.seed)
    data = Wire.encode(cg)
    if (args.out and args.out != "-"):
        with open(args.out, "wb") as f:
            f.write(data)
            pass
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
        pass
    debuglog._log("quantize %s: %d bytes", args.input, len(data))
    return EXIT_OK

def cmdRoundtrip(args):
    if (args.input):
        data = readInput(args.input)
        cg = Wire.decode(data)
        same = Wire.encode(cg) == data
        _emit({ "input": args.input, "frames": 1, "mismatches": int(not same),
                "size_mismatches": 0, "passed": same })
        return EXIT_OK if same else EXIT_FAILED
    r = Metrics._check_wire(args.seed, args.frames)
    _emit(r)
    return EXIT_OK if r["passed"] else EXIT_FAILED

#
# ratio
#

def _ratio_row(name, scheme, args, d_prime=None, s=None):
    r = Wire.compressionRatio(scheme, args.d, d_prime, args.m, s,
                              args.bucket, args.include_header)
    return { "scheme": name, "ratio": round(r, 1),
             "bits": Wire.payloadBits(scheme, args.d, d_prime, args.m, s,
                                      args.bucket, args.include_header) }

# The compression ratio row of every compared scheme.
def ratioGrid(args):
    rows = [ _ratio_row("sgd", "identity", args) ]
    for dp in (8, 16, 64):
        rows.append(_ratio_row("hsq d'=%d" % dp, "hsq", args, dp, args.s))
        pass
    rows.append(_ratio_row("qsgd 4bit", "qsgd", args, s=7))
    rows.append(_ratio_row("qsgd 8bit", "qsgd", args, s=127))
    rows.append(_ratio_row("terngrad", "terngrad", args))
    rows.append(_ratio_row("signsgd", "signsgd", args))
    return rows

def cmdRatio(args):
    if (args.grid):
        for r in ratioGrid(args):
            print("%-12s %8.1f" % (r["scheme"], r["ratio"]))
            pass
        return EXIT_OK
    r = Wire.compressionRatio(args.scheme, args.d, args.dprime, args.m, args.s,
                              args.bucket, args.include_header)
    print("%.1f" % r)
    return EXIT_OK

#
# preset
#

# Segment layouts: the whole gradient as one segment, sqrt(d)-long
# segments, or kappa-long segments.  Codebooks are orthonormal (m = d')
# and pseudo-norms exact.  The result is a simulate config; its "preset"
# block carries the bit accounting.
def presetConfig(name, d, kappa=_default_kappa, seed=0):
    if (name == "extreme"):
        d_prime = d
    elif (name == "compact"):
        d_prime = max(1, math.isqrt(d))
    elif (name == "high-precision"):
        d_prime = kappa
    else:
        raise Errors.ConfigErr([("preset", "must be one of %s"
                                 % ", ".join(PRESETS))])
    if (d < 1 or d_prime < 1 or d_prime > d):
        raise Errors.ConfigErr([("d", "need 1 <= d' <= d")])
    bits = Wire.messageBits("hsq", d, d_prime, d_prime, 0)
    # Orthonormal m = d' blows the second moment bound up by d' per segment
    return { "schema_version": FedSim.SCHEMA_VERSION,
             "seed": seed,
             "problem": { "kind": Problems.QUADRATIC, "dim": d },
             "scheme": { "name": "hsq-greedy", "segment_dim": d_prime,
                         "codewords": d_prime, "levels": 0,
                         "codebook_method": "random-rotation",
                         "codebook_seed": 0 },
             "preset": { "name": name, "d": d,
                         "bits_per_gradient": bits,
                         "compression_ratio": 32.0 * d / bits,
                         "variance_blowup": d_prime } }

def cmdPreset(args):
    _emit(presetConfig(args.name, args.d, args.kappa, args.seed), args.out)
    return EXIT_OK

#
# simulate
#

# Command line flags win over config fields.
def applyOverrides(d, args):
    d = dict(d)
    sch = dict(d.get("scheme", {}))
    for (flag, key) in (("seed", "seed"), ("rounds", "rounds"),
                        ("num_clients", "num_clients"),
                        ("clients_per_round", "clients_per_round"),
                        ("local_batch", "local_batch"),
                        ("workers", "workers")):
        v = getattr(args, flag)
        if (v is not None):
            d[key] = v
            pass
        pass
    for (flag, key) in (("scheme", "name"), ("levels", "levels"),
                        ("segment_dim", "segment_dim"),
                        ("codewords", "codewords")):
        v = getattr(args, flag)
        if (v is not None):
            sch[key] = v
            pass
        pass
    if (sch):
        d["scheme"] = sch
        pass
    if (args.eta is not None):
        d["lr"] = { "kind": FedSim.CONSTANT, "eta": args.eta }
        pass
    if (args.downlink):
        d["downlink_compressed"] = True
        pass
    return d

def cmdSimulate(args):
    if (args.config):
        try:
            with open(args.config) as f:
                raw = json.load(f)
                pass
        except ValueError as e:
            raise Errors.ConfigErr([("config", "invalid JSON: %s" % e)])
    else:
        raw = {}
        pass
    cfg = FedSim.FedConfig.fromDict(applyOverrides(raw, args))
    p = Problems.makeProblem(cfg.problem)
    coord = FedSim.Coordinator(cfg, p)
    coord.run()
    if (args.csv == "-" or args.csv is None):
        FedSim.writeCSV(coord.logs, sys.stdout)
    else:
        with open(args.csv, "w", newline="") as f:
            FedSim.writeCSV(coord.logs, f)
            pass
        pass
    # Without --summary the summary goes wherever the CSV does not
    summ = FedSim.summary(coord)
    if (args.summary and args.summary != "-"):
        _emit(summ, args.summary)
    elif (args.summary == "-" or (args.csv and args.csv != "-")):
        _emit(summ)
    else:
        json.dump(summ, sys.stderr, sort_keys=True)
        sys.stderr.write("\n")
        pass
    return EXIT_OK

#
# analyze
#

def cmdAnalyze(args):
    report = Metrics.runValidators(args.seed, args.quick)
    _emit(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_FAILED

def makeParser():
    p = _Parser(prog="hsqsim",
                description="Hyper-sphere gradient quantization toolkit")
    p.add_argument("--debug", metavar="FILE",
                   help="write a debug log to FILE")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    cb = sub.add_parser("codebook", help="codebook files")
    cbsub = cb.add_subparsers(dest="action", parser_class=_Parser)
    cbsub.required = True
    gen = cbsub.add_parser("gen", help="generate a codebook file")
    gen.add_argument("--method", default="random-gaussian")
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmdCodebook)

    q = sub.add_parser("quantize", help="compress a gradient into a frame")
    q.add_argument("--input", required=True,
                   help="gradient .npy or text file, \"-\" for stdin")
    q.add_argument("--codebook", help="codebook file")
    q.add_argument("--method", default="random-gaussian")
    q.add_argument("--dprime", type=int, default=8)
    q.add_argument("--m", type=int, default=256)
    q.add_argument("--codebook-seed", type=int, default=0)
    q.add_argument("--s", type=int, default=63)
    q.add_argument("--variant", choices=(HSQ.UNBIASED, HSQ.GREEDY),
                   default=HSQ.GREEDY)
    q.add_argument("--seed", type=int, required=True)
    q.add_argument("--out", help="frame file (default stdout)")
    q.set_defaults(func=cmdQuantize)

    rt = sub.add_parser("roundtrip", help="wire codec self check")
    rt.add_argument("--input",
                    help="check one frame file instead, \"-\" for stdin")
    rt.add_argument("--frames", type=int, default=10000)
    rt.add_argument("--seed", type=int, default=0)
    rt.set_defaults(func=cmdRoundtrip)

    r = sub.add_parser("ratio", help="compression ratio of a scheme")
    r.add_argument("--scheme", default="hsq")
    r.add_argument("--d", type=int, default=_default_ratio_d)
    r.add_argument("--dprime", type=int, default=8)
    r.add_argument("--m", type=int, default=256)
    r.add_argument("--s", type=int, default=63)
    r.add_argument("--bucket", type=int, default=512)
    r.add_argument("--include-header", action="store_true")
    r.add_argument("--grid", action="store_true",
                   help="print the ratio of every scheme")
    r.set_defaults(func=cmdRatio)

    s = sub.add_parser("simulate", help="run a federated SGD simulation")
    s.add_argument("--config", help="JSON experiment config")
    s.add_argument("--csv", help="round log CSV (default stdout)")
    s.add_argument("--summary",
                   help="JSON summary file (default stdout when --csv"
                   " names a file, else stderr)")
    s.add_argument("--seed", type=int)
    s.add_argument("--rounds", type=int)
    s.add_argument("--num-clients", type=int)
    s.add_argument("--clients-per-round", type=int)
    s.add_argument("--local-batch", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--scheme")
    s.add_argument("--levels", type=int)
    s.add_argument("--segment-dim", type=int)
    s.add_argument("--codewords", type=int)
    s.add_argument("--eta", type=float, help="constant step size")
    s.add_argument("--downlink", action="store_true",
                   help="compress the model delta sent back")
    s.set_defaults(func=cmdSimulate)

    a = sub.add_parser("analyze", help="run the validator suite")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--quick", action="store_true")
    a.add_argument("--out")
    a.set_defaults(func=cmdAnalyze)

    pr = sub.add_parser("preset", help="print a segment layout preset")
    pr.add_argument("name", choices=PRESETS)
    pr.add_argument("--d", type=int, required=True)
    pr.add_argument("--kappa", type=int, default=_default_kappa)
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", help="config file (default stdout)")
    pr.set_defaults(func=cmdPreset)
    return p

def main(argv):
    try:
        args = makeParser().parse_args(argv)
        if (args.debug):
            debuglog.setFile(args.debug)
            pass
        return args.func(args)
    except Errors.ConfigErr as e:
        debuglog.warn("config error: %s", str(e))
        json.dump(e.toDict(), sys.stderr)
        sys.stderr.write("\n")
        return EXIT_USAGE
    except Errors.HSQErr as e:
        json.dump(e.toDict(), sys.stderr)
        sys.stderr.write("\n")
        return EXIT_ERROR
    except OSError as e:
        json.dump({ "error": "IOError", "message": str(e) }, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_ERROR
    except ValueError as e:
        json.dump({ "error": "ValueError", "message": str(e) }, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_ERROR

if __name__ == '__main__':
    sys.exit(main(sys.argv[1:]))
    pass
