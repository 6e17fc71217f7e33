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
import json
import sys

import numpy as np
import pytest

from HSQsim import Codebook
from HSQsim import Commands
from HSQsim import Errors
from HSQsim import FedSim

class TestRatio:
    def test_hsq_default_grid_point(self, capsys):
        rc = Commands.main(["ratio", "--scheme", "hsq", "--dprime", "8",
                            "--m", "256", "--s", "63"])
        assert rc == Commands.EXIT_OK
        assert capsys.readouterr().out.strip() == "18.3"

    def test_grid(self, capsys):
        assert Commands.main(["ratio", "--grid"]) == Commands.EXIT_OK
        out = capsys.readouterr().out
        for want in ("18.3", "36.6", "146.3", "20.2", "32.0", "1.0"):
            assert want in out

class TestPreset:
    def test_extreme(self, capsys):
        assert Commands.main(["preset", "extreme", "--d", "1024"]) == 0
        r = json.loads(capsys.readouterr().out)
        assert r["preset"]["bits_per_gradient"] == 42
        assert r["scheme"]["segment_dim"] == 1024

    def test_compact_and_high_precision(self):
        assert Commands.presetConfig("compact", 1024)["scheme"][
            "segment_dim"] == 32
        hp = Commands.presetConfig("high-precision", 1024, kappa=4)
        assert hp["preset"]["variance_blowup"] == 4
        assert hp["preset"]["bits_per_gradient"] == 256 * (2 + 32)

    def test_preset_is_a_config(self):
        for name in Commands.PRESETS:
            d = Commands.presetConfig(name, 64, seed=7)
            cfg = FedSim.FedConfig.fromDict(d)
            assert cfg.seed == 7
            assert cfg.problem["dim"] == 64
            assert cfg.scheme.toDict()["segment_dim"] == \
                d["scheme"]["segment_dim"]
            assert cfg.toDict()["preset"]["name"] == name
            pass

    def test_preset_feeds_simulate(self, tmp_path, capsys):
        cfg = str(tmp_path / "cfg.json")
        rc = Commands.main(["preset", "compact", "--d", "16", "--out", cfg])
        assert rc == Commands.EXIT_OK
        log = tmp_path / "log.csv"
        rc = Commands.main(["simulate", "--config", cfg, "--rounds", "2",
                            "--num-clients", "2", "--clients-per-round", "1",
                            "--csv", str(log)])
        assert rc == Commands.EXIT_OK
        assert len(log.read_text().strip().splitlines()) == 1 + 2

    def test_bad_preset_block(self):
        d = Commands.presetConfig("compact", 16)
        d["preset"] = "compact"
        with pytest.raises(Errors.ConfigErr) as e:
            FedSim.FedConfig.fromDict(d)
        assert [ f for (f, _) in e.value.fields ] == ["preset"]

class TestErrors:
    def test_bad_args(self, capsys):
        assert Commands.main(["ratio", "--d", "many"]) == Commands.EXIT_USAGE
        err = json.loads(capsys.readouterr().err)
        assert err["fields"][0]["field"] == "argv"

    def test_missing_seed(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({ "rounds": 3 }))
        rc = Commands.main(["simulate", "--config", str(cfg)])
        assert rc == Commands.EXIT_USAGE
        err = json.loads(capsys.readouterr().err)
        assert "seed" in [ f["field"] for f in err["fields"] ]

    def test_bad_json(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{ seed: 1")
        rc = Commands.main(["simulate", "--config", str(cfg)])
        assert rc == Commands.EXIT_USAGE

    def test_missing_file(self, capsys):
        rc = Commands.main(["roundtrip", "--input", "/nonexistent/frame"])
        assert rc == Commands.EXIT_ERROR

    def test_bad_problem_field(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({ "seed": 1, "problem":
                                    { "kind": "quadratic", "dim": -4 } }))
        rc = Commands.main(["simulate", "--config", str(cfg)])
        assert rc == Commands.EXIT_USAGE
        err = json.loads(capsys.readouterr().err)
        assert "problem.dim" in [ f["field"] for f in err["fields"] ]

    def test_malformed_gradient(self, tmp_path, capsys):
        g = tmp_path / "g.txt"
        g.write_text("1.0 abc\n")
        rc = Commands.main(["quantize", "--input", str(g), "--seed", "1",
                            "--out", str(tmp_path / "g.hsq")])
        assert rc == Commands.EXIT_USAGE
        err = json.loads(capsys.readouterr().err)
        assert err["fields"][0]["field"] == "input"

    def test_empty_gradient(self, tmp_path, capsys):
        g = tmp_path / "g.txt"
        g.write_text("\n")
        rc = Commands.main(["quantize", "--input", str(g), "--seed", "1"])
        assert rc == Commands.EXIT_USAGE

    def test_value_error_is_reported(self, monkeypatch, capsys):
        def boom(seed, quick):
            raise ValueError("bad value")
        monkeypatch.setattr(Commands.Metrics, "runValidators", boom)
        rc = Commands.main(["analyze", "--quick"])
        assert rc == Commands.EXIT_ERROR
        err = json.loads(capsys.readouterr().err)
        assert err == { "error": "ValueError", "message": "bad value" }

class TestSimulate:
    def _run(self, tmp_path, name):
        out = tmp_path / name
        rc = Commands.main(["simulate", "--seed", "1", "--scheme", "identity",
                            "--rounds", "5", "--num-clients", "4",
                            "--clients-per-round", "2", "--csv", str(out)])
        assert rc == Commands.EXIT_OK
        return out.read_text()

    def test_deterministic(self, tmp_path):
        a = self._run(tmp_path, "a.csv")
        b = self._run(tmp_path, "b.csv")
        assert a == b
        assert len(a.strip().splitlines()) == 1 + 5

    def test_summary(self, tmp_path):
        summary = tmp_path / "summary.json"
        rc = Commands.main(["simulate", "--seed", "2", "--scheme",
                            "hsq-unbiased", "--levels", "15", "--rounds", "3",
                            "--num-clients", "4", "--clients-per-round", "2",
                            "--csv", str(tmp_path / "log.csv"),
                            "--summary", str(summary)])
        assert rc == Commands.EXIT_OK
        json.loads(summary.read_text())

    def test_summary_defaults_to_stdout(self, tmp_path, capsys):
        rc = Commands.main(["simulate", "--seed", "3", "--scheme", "identity",
                            "--rounds", "2", "--num-clients", "2",
                            "--clients-per-round", "1",
                            "--csv", str(tmp_path / "log.csv")])
        assert rc == Commands.EXIT_OK
        s = json.loads(capsys.readouterr().out)
        assert s["config"]["seed"] == 3

    def test_summary_beside_stdout_csv(self, capsys):
        rc = Commands.main(["simulate", "--seed", "3", "--scheme", "identity",
                            "--rounds", "2", "--num-clients", "2",
                            "--clients-per-round", "1"])
        assert rc == Commands.EXIT_OK
        cap = capsys.readouterr()
        assert len(cap.out.strip().splitlines()) == 1 + 2
        assert json.loads(cap.err)["config"]["seed"] == 3

class TestFrames:
    def test_codebook_gen(self, tmp_path, capsys):
        fn = str(tmp_path / "cb.bin")
        rc = Commands.main(["codebook", "gen", "--method", "random-gaussian",
                            "--dim", "8", "--count", "32", "--seed", "5",
                            "--out", fn])
        assert rc == Commands.EXIT_OK
        r = json.loads(capsys.readouterr().out)
        cb = Codebook.read(fn)
        assert (cb.dim, cb.count) == (8, 32)
        assert cb.sigma_min == pytest.approx(r["sigma_min"])
        assert cb == Codebook.generate("random-gaussian", 8, 32, 5)

    def test_quantize_then_roundtrip(self, tmp_path, capsys):
        g = tmp_path / "g.npy"
        np.save(str(g), np.linspace(-1.0, 1.0, 50))
        frame = str(tmp_path / "g.hsq")
        rc = Commands.main(["quantize", "--input", str(g), "--dprime", "8",
                            "--m", "16", "--s", "15", "--seed", "3",
                            "--out", frame])
        assert rc == Commands.EXIT_OK
        assert Commands.main(["roundtrip", "--input", frame]) == 0
        assert json.loads(capsys.readouterr().out)["passed"]

    def test_text_gradient(self, tmp_path):
        g = tmp_path / "g.txt"
        g.write_text("1.0 2.0\n-3.5\n")
        np.testing.assert_array_equal(Commands.loadGradient(str(g)),
                                      [1.0, 2.0, -3.5])

    def test_stdin_and_stdout(self, monkeypatch, capsysbinary):
        text = io.BytesIO(b"0.5 -1.0 2.0 0.0\n")
        monkeypatch.setattr(sys, "stdin", io.TextIOWrapper(text))
        rc = Commands.main(["quantize", "--input", "-", "--dprime", "2",
                            "--m", "4", "--s", "15", "--seed", "3"])
        assert rc == Commands.EXIT_OK
        frame = capsysbinary.readouterr().out
        assert len(frame) > 0
        monkeypatch.setattr(sys, "stdin", io.TextIOWrapper(io.BytesIO(frame)))
        assert Commands.main(["roundtrip", "--input", "-"]) == 0
        assert json.loads(capsysbinary.readouterr().out)["passed"]

    def test_npy_from_stdin(self, monkeypatch):
        buf = io.BytesIO()
        np.save(buf, np.arange(6.0))
        monkeypatch.setattr(sys, "stdin",
                            io.TextIOWrapper(io.BytesIO(buf.getvalue())))
        np.testing.assert_array_equal(Commands.loadGradient("-"),
                                      np.arange(6.0))

    def test_random_frames(self, capsys):
        assert Commands.main(["roundtrip", "--frames", "50", "--seed", "4"]) \
            == Commands.EXIT_OK

    @pytest.mark.slow
    def test_analyze_quick(self, tmp_path):
        out = tmp_path / "report.json"
        rc = Commands.main(["analyze", "--quick", "--out", str(out)])
        assert rc == Commands.EXIT_OK
        assert json.loads(out.read_text())["passed"]
