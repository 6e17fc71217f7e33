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

import io
import math

import numpy as np
import pytest

from HSQsim import Codebook
from HSQsim import Errors
from HSQsim import FedSim
from HSQsim import HSQ
from HSQsim import Problems
from HSQsim import RandomStream
from HSQsim import Wire

def config(**kw):
    d = { "seed": 1, "num_clients": 10, "clients_per_round": 5,
          "rounds": 20, "local_batch": 10,
          "problem": { "kind": "quadratic", "dim": 16, "samples": 200 },
          "scheme": { "name": "identity" },
          "lr": { "kind": "constant", "eta": 0.1 } }
    d.update(kw)
    return d

def simulate(d):
    cfg = FedSim.FedConfig.fromDict(d)
    p = Problems.makeProblem(cfg.problem)
    coord = FedSim.Coordinator(cfg, p)
    coord.run()
    return coord

class TestStepSizes:
    def test_theorem1_example(self):
        assert FedSim.lrTheorem1(1.0, 1.0, 1.0, 100) == pytest.approx(1 / 11)

    def test_theorem1_limits(self):
        assert FedSim.lrTheorem1(2.0, 1.0, 1e-30, 100) == pytest.approx(0.5)
        etas = [ FedSim.lrTheorem1(1.0, 1.0, 1.0, t) for t in (1, 10, 100,
                                                               1000) ]
        assert all(a > b for (a, b) in zip(etas, etas[1:]))

    def test_theorem1_bound(self):
        assert FedSim.theorem1Bound(2.0, 4.0, 1.0, 16) == pytest.approx(
            2.0 * 0.5 + 4.0 / 32)
        # Quadrupling T halves the leading term
        a = FedSim.theorem1Bound(1.0, 1.0, 0.0, 100)
        b = FedSim.theorem1Bound(1.0, 1.0, 0.0, 400)
        assert b == pytest.approx(a / 2)

    def test_theorem2(self):
        assert FedSim.lrTheorem2(2.0, 1.0, 4.0, 1) == pytest.approx(1.0)
        assert FedSim.theorem2Bound(2.0, 1.0, 4.0, 4) == pytest.approx(2.0)

    def test_theorem3(self):
        assert FedSim.theorem3Lcal(1.0, 4, 64, 8) == pytest.approx(16.0)
        assert FedSim.lrTheorem3(100, 16.0) == pytest.approx(1 / 40)
        assert FedSim.theorem3Batch(100) == 10
        assert FedSim.theorem3Batch(101) == 11
        with pytest.raises(Errors.InvalidShape):
            FedSim.theorem3Lcal(1.0, 0, 64, 8)

    def test_theorem3_bound_needs_enough_rounds(self):
        with pytest.raises(Errors.InvalidShape):
            FedSim.theorem3Bound(0.5, 10, 16.0, 1.0, 1.0)
        assert FedSim.theorem3Bound(0.5, 10000, 16.0, 0.0, 1.0) > 0

class TestVq:
    def test_orthonormal_exact_norm(self):
        assert FedSim.vqFormula(64, 8, 8, 1.0, 2.0) == pytest.approx(128.0)

    def test_range_term(self):
        a = FedSim.vqFormula(16, 8, 8, 1.0, 1.0, 2.0, 1)
        b = FedSim.vqFormula(16, 8, 8, 1.0, 1.0, 2.0, 63)
        base = FedSim.vqFormula(16, 8, 8, 1.0, 1.0)
        assert (a - base) == pytest.approx(63 * (b - base))

    def test_blowup(self):
        d = 256
        whole = Codebook.generate(Codebook.RANDOM_ROTATION, d, d, 0)
        assert FedSim.varianceBlowup(whole) == pytest.approx(d)
        root = Codebook.generate(Codebook.RANDOM_ROTATION, 16, 16, 0)
        assert FedSim.varianceBlowup(root) == pytest.approx(math.sqrt(d))

    def test_from_config(self):
        cfg = FedSim.FedConfig.fromDict(config(scheme={
            "name": "hsq-unbiased", "segment_dim": 4, "codewords": 4,
            "codebook_method": "sob" }))
        cfg.dim = 16
        cb = Codebook.generate(Codebook.SOB, 4, 4, 0)
        assert FedSim.vqBound(cfg, cb, 0.5) == pytest.approx(16 * 0.5)

class TestConfig:
    def test_roundtrip(self):
        cfg = FedSim.FedConfig.fromDict(config())
        again = FedSim.FedConfig.fromDict(cfg.toDict())
        assert again.toDict() == cfg.toDict()

    def test_seed_required(self):
        d = config()
        del d["seed"]
        with pytest.raises(Errors.ConfigErr) as e:
            FedSim.FedConfig.fromDict(d)
        assert [ f for (f, p) in e.value.fields ] == ["seed"]

    def test_all_problems_reported(self):
        d = config(clients_per_round=20, rounds=0, bogus=1,
                   scheme={ "name": "qsgd", "levels": 0 })
        with pytest.raises(Errors.ConfigErr) as e:
            FedSim.FedConfig.fromDict(d)
        fields = set(f for (f, p) in e.value.fields)
        assert fields == { "clients_per_round", "rounds", "bogus",
                           "scheme.levels" }
        assert e.value.toDict()["error"] == "ConfigErr"

    def test_hsq_checks(self):
        d = config(scheme={ "name": "hsq", "variant": "unbiased",
                            "segment_dim": 8, "codewords": 16,
                            "codebook_method": "sob", "sketch_dim": 8 },
                   downlink_compressed=True)
        with pytest.raises(Errors.ConfigErr) as e:
            FedSim.FedConfig.fromDict(d)
        fields = set(f for (f, p) in e.value.fields)
        assert fields == { "scheme.codewords", "scheme.sketch_dim" }

    def test_variant_field(self):
        cfg = FedSim.FedConfig.fromDict(config(scheme={
            "name": "hsq", "variant": "unbiased" }))
        assert cfg.scheme.variant() == HSQ.UNBIASED

    def test_downlink_needs_hsq(self):
        with pytest.raises(Errors.ConfigErr):
            FedSim.FedConfig.fromDict(config(downlink_compressed=True))

    def test_theorem3_needs_levels(self):
        with pytest.raises(Errors.ConfigErr):
            FedSim.FedConfig.fromDict(config(scheme={ "name": "hsq" },
                                             lr={ "kind": "theorem3" }))

    def test_problem_fields_checked(self):
        d = config(problem={ "kind": "quadratic", "dim": -4,
                             "samples": "many", "noise": -1.0, "depth": 3 })
        with pytest.raises(Errors.ConfigErr) as e:
            FedSim.FedConfig.fromDict(d)
        fields = set(f for (f, p) in e.value.fields)
        assert fields == { "problem.dim", "problem.samples", "problem.noise",
                           "problem.depth" }

    def test_problem_layers_checked(self):
        for layers in ([2, 0, 2], [2], "2,16,2", [2, 200, 200, 2]):
            d = config(problem={ "kind": "tinymlp", "layers": layers })
            with pytest.raises(Errors.ConfigErr) as e:
                FedSim.FedConfig.fromDict(d)
            assert [ f for (f, p) in e.value.fields ] == ["problem.layers"]

    def test_problem_kind_checked(self):
        with pytest.raises(Errors.ConfigErr) as e:
            FedSim.FedConfig.fromDict(config(problem={ "kind": "resnet" }))
        assert [ f for (f, p) in e.value.fields ] == ["problem.kind"]

class TestRun:
    def test_gradient_descent(self):
        p = Problems.QuadraticProblem(16, num_samples=200, seed=0)
        coord = simulate(config(num_clients=1, clients_per_round=1,
                                local_batch=None,
                                lr={ "kind": "constant",
                                     "eta": 1.0 / p.smoothness }))
        losses = [ l.loss for l in coord.logs ]
        assert all(a > b for (a, b) in zip(losses, losses[1:]))
        # One client holding every sample does exact gradient descent
        x = p.x0.copy()
        for i in range(20):
            x = x - p.gradient(x) / p.smoothness
            pass
        np.testing.assert_allclose(coord.x, x, rtol=1e-10, atol=1e-12)

    def test_deterministic(self):
        d = config(scheme={ "name": "hsq-unbiased", "segment_dim": 4,
                            "codewords": 8, "levels": 15 })
        assert simulate(d).logs == simulate(d).logs

    def test_workers_do_not_change_result(self):
        d = config(scheme={ "name": "hsq-unbiased", "segment_dim": 4,
                            "codewords": 8, "levels": 15 })
        one = simulate(d)
        many = simulate(dict(d, workers=4))
        assert one.logs == many.logs
        np.testing.assert_array_equal(one.x, many.x)

    def test_seed_changes_run(self):
        d = config(scheme={ "name": "hsq-unbiased", "segment_dim": 4,
                            "codewords": 8 })
        assert simulate(d).logs != simulate(dict(d, seed=2)).logs

    def test_sampling(self):
        coord = simulate(config())
        for l in coord.logs:
            assert len(l.sampled_clients) == 5
            assert l.sampled_clients == sorted(set(l.sampled_clients))
            pass
        shards = np.concatenate([ c.shard for c in coord.clients ])
        np.testing.assert_array_equal(np.sort(shards), np.arange(200))

    def test_bits(self):
        coord = simulate(config(scheme={ "name": "hsq-greedy",
                                         "segment_dim": 4, "codewords": 16,
                                         "levels": 63 },
                                downlink_compressed=True))
        per = Wire.messageBits("hsq", 16, 4, 16, 63)
        assert per == 4 * 10
        for l in coord.logs:
            assert l.uplink_bits == 5 * per
            assert l.downlink_bits == 5 * per
            pass

    def test_uncompressed_downlink_bits(self):
        coord = simulate(config())
        assert coord.logs[0].uplink_bits == 5 * 32 * 16
        assert coord.logs[0].downlink_bits == 5 * 32 * 16

    def test_sketched_scheme_runs(self):
        coord = simulate(config(scheme={ "name": "hsq-greedy",
                                         "segment_dim": 8, "codewords": 16,
                                         "sketch_dim": 4 }))
        assert coord.projector is not None
        assert math.isfinite(coord.logs[-1].loss)

    def test_accuracy_logged(self):
        coord = simulate(config(problem={ "kind": "logistic", "dim": 8,
                                          "samples": 200 }))
        assert coord.logs[-1].accuracy is not None
        assert coord.logs[0].accuracy is not None
        assert simulate(config()).logs[0].accuracy is None

    def test_unbiased_round_gradient(self):
        cfg = FedSim.FedConfig.fromDict(config(
            local_batch=None,
            scheme={ "name": "hsq-unbiased", "segment_dim": 8,
                     "codewords": 16 }))
        p = Problems.makeProblem(cfg.problem)
        coord = FedSim.Coordinator(cfg, p)
        x = p.x0 + 0.1
        clients = coord.sampleClients(0)
        want = np.mean([ p.gradient(x, coord.clients[c].shard)
                         for c in clients ], axis=0)
        runs = np.array([ coord.roundGradient(x, 0, clients, seed=k)
                          for k in range(2000) ])
        se = np.std(runs, axis=0, ddof=1) / np.sqrt(len(runs))
        assert np.all(np.abs(np.mean(runs, axis=0) - want) <= 4 * se)

    def test_iterate_average(self):
        coord = simulate(config())
        assert coord.steps == 20
        assert coord.averageIterate().shape == (16,)

class TestTheoremStep:
    def test_auto_theorem1(self):
        d = config(scheme={ "name": "hsq-unbiased", "segment_dim": 8,
                            "codewords": 8, "codebook_method": "sob" },
                   lr={ "kind": "theorem1" })
        coord = simulate(d)
        prm = coord.cfg.lr.params
        assert set(prm) >= { "L", "R", "V_q", "T" }
        assert coord.eta == pytest.approx(
            FedSim.lrTheorem1(prm["L"], prm["R"], prm["V_q"], prm["T"]))
        assert coord.cfg.toDict()["lr"]["V_q"] == prm["V_q"]

    def test_theorem1_needs_vq_for_baselines(self):
        with pytest.raises(Errors.ConfigErr):
            simulate(config(scheme={ "name": "signsgd" },
                            lr={ "kind": "theorem1" }))

    def _theorem1_gap(self, T):
        p = Problems.QuadraticProblem(16, num_samples=400, seed=3)
        d = config(rounds=T, num_clients=10, clients_per_round=5,
                   local_batch=10,
                   problem={ "kind": "quadratic", "dim": 16, "samples": 400,
                             "seed": 3 },
                   scheme={ "name": "hsq-unbiased", "segment_dim": 8,
                            "codewords": 8,
                            "codebook_method": "random-rotation" },
                   lr={ "kind": "theorem1" })
        coord = simulate(d)
        prm = coord.cfg.lr.params
        gap = p.loss(coord.averageIterate()) - p.f_star
        bound = FedSim.theorem1Bound(prm["R"], prm["V_q"], prm["L"], T)
        return (gap, bound)

    @pytest.mark.parametrize("T", [100, 1000])
    def test_theorem1_bound_holds(self, T):
        (gap, bound) = self._theorem1_gap(T)
        assert gap <= bound

    @pytest.mark.slow
    def test_theorem1_bound_holds_long(self):
        (gap, bound) = self._theorem1_gap(10000)
        assert gap <= bound

class TestConvergence:
    @pytest.mark.slow
    def test_greedy_least_squares(self):
        d = config(rounds=5000, num_clients=50, clients_per_round=10,
                   local_batch=10,
                   problem={ "kind": "quadratic", "dim": 64, "samples": 1000,
                             "noise": 0.01 },
                   scheme={ "name": "hsq-greedy", "segment_dim": 8,
                            "codewords": 64, "levels": 0,
                            "codebook_method": "random-gaussian" },
                   lr={ "kind": "constant", "eta": 0.1 })
        coord = simulate(d)
        assert coord.p.loss(coord.x) - coord.p.f_star <= 1e-3

    def test_logistic_close_to_uncompressed(self):
        base = config(rounds=500, num_clients=50, clients_per_round=10,
                      local_batch=10,
                      problem={ "kind": "logistic", "dim": 64,
                                "samples": 1000 },
                      lr={ "kind": "constant", "eta": 0.5 })
        sgd = simulate(dict(base, scheme={ "name": "identity" }))
        hsq = simulate(dict(base, scheme={ "name": "hsq-greedy",
                                           "segment_dim": 16,
                                           "codewords": 256, "levels": 63 }))
        acc_sgd = sgd.p.accuracy(sgd.x)
        acc_hsq = hsq.p.accuracy(hsq.x)
        assert acc_hsq >= acc_sgd - 0.02
        up_sgd = sum(l.uplink_bits for l in sgd.logs)
        up_hsq = sum(l.uplink_bits for l in hsq.logs)
        assert up_sgd >= 30 * up_hsq

    @pytest.mark.slow
    def test_greedy_beats_unbiased_on_mlp(self):
        base = config(rounds=300, num_clients=10, clients_per_round=1,
                      local_batch=32,
                      problem={ "kind": "tinymlp", "layers": [2, 16, 2],
                                "samples": 1000 },
                      lr={ "kind": "constant", "eta": 0.5 })
        losses = {}
        for variant in ("greedy", "unbiased"):
            coord = simulate(dict(base, scheme={
                "name": "hsq-" + variant, "segment_dim": 8,
                "codewords": 256, "levels": 0 }))
            losses[variant] = np.mean([ l.loss for l in coord.logs[-50:] ])
            pass
        assert losses["greedy"] < losses["unbiased"]

    @pytest.mark.slow
    def test_theorem3_bound_on_mlp(self):
        prob = { "kind": "tinymlp", "layers": [2, 4, 2], "samples": 1000 }
        p = Problems.makeProblem(prob)
        cb = Codebook.generate(Codebook.SOB, 2, 2, 0)
        alpha = cb.alphaBound()
        lcal = FedSim.theorem3Lcal(p.smoothness, 63, p.dim, 2)
        T = int(math.ceil(16 * lcal / (1 - alpha) ** 2))
        d = config(rounds=T, num_clients=10, clients_per_round=5,
                   local_batch="theorem3", problem=prob,
                   scheme={ "name": "hsq-greedy", "segment_dim": 2,
                            "codewords": 2, "levels": 63,
                            "codebook_method": "sob" },
                   lr={ "kind": "theorem3" })
        coord = simulate(d)
        batch = FedSim.theorem3Batch(T)
        assert coord.batch_size == batch
        pts = Problems.samplePoints(p, 8, 0.5, RandomStream.Stream(0))
        sigma2 = Problems.estimateNoiseVariance(p, pts, batch)
        bound = FedSim.theorem3Bound(alpha, T, lcal, sigma2,
                                     p.loss(p.x0) - p.f_star)
        assert min(l.grad_norm_sq for l in coord.logs) <= bound

class TestOutput:
    def test_csv(self):
        coord = simulate(config(rounds=3))
        f = io.StringIO()
        FedSim.writeCSV(coord.logs, f)
        lines = f.getvalue().splitlines()
        assert lines[0] == ",".join(FedSim.CSV_COLUMNS)
        assert len(lines) == 4
        last = lines[-1].split(",")
        assert int(last[-1]) == 3 * (coord.logs[0].uplink_bits
                                     + coord.logs[0].downlink_bits)

    def test_csv_repeatable(self):
        a = io.StringIO()
        b = io.StringIO()
        FedSim.writeCSV(simulate(config()).logs, a)
        FedSim.writeCSV(simulate(config()).logs, b)
        assert a.getvalue() == b.getvalue()

    def test_summary(self):
        coord = simulate(config())
        s = FedSim.summary(coord)
        assert s["schema_version"] == FedSim.SCHEMA_VERSION
        assert s["config"]["seed"] == 1
        assert s["rounds"] == 20
        assert s["total_uplink_bits"] == 20 * 5 * 32 * 16
        assert s["final_gap"] >= 0
