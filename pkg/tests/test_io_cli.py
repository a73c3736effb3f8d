import json
import struct
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fracphi import cli
from fracphi import io as fio
from fracphi.errors import CorruptionError, FormatError
from fracphi.fields import TrajectorySample


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 9))))
def test_snapshot_roundtrip_is_bit_exact(values):
    times = np.arange(values.shape[0], dtype=float) * 0.5
    t, v = fio.snapshot_parse(fio.snapshot_bytes(times, values))
    assert t.tobytes() == times.tobytes() and v.tobytes() == values.tobytes()


def test_snapshot_layout(tmp_path):
    path = fio.snapshot_write(tmp_path / "f.fphi", np.array([1.0, -2.0, 3.5]))
    raw = path.read_bytes()
    assert raw[:4] == b"FPHI"
    assert struct.unpack_from("<IQQ", raw, 4) == (1, 3, 1)
    assert len(raw) == 24 + 8 + 24
    assert np.array_equal(fio.read_field(path), [1.0, -2.0, 3.5])
    assert not (tmp_path / "f.fphi.tmp").exists()


def test_trajectory_snapshot(tmp_path):
    traj = TrajectorySample(np.array([0.0, 0.1]), np.arange(6.0).reshape(2, 3), {}, {})
    back = fio.snapshot_read(fio.snapshot_write(tmp_path / "t.fphi", traj))
    assert np.array_equal(back.values, traj.values) and np.array_equal(back.times, traj.times)
    with pytest.raises(FormatError):
        fio.read_field(tmp_path / "t.fphi")


def test_snapshot_rejections():
    good = fio.snapshot_bytes(np.zeros(1), np.ones(4))
    with pytest.raises(FormatError):
        fio.snapshot_parse(good[:4] + struct.pack("<I", 2) + good[8:])
    with pytest.raises(FormatError):
        fio.snapshot_parse(b"NOPE" + good[4:])
    with pytest.raises(CorruptionError):
        fio.snapshot_parse(good[:-1])
    with pytest.raises(CorruptionError):
        fio.snapshot_parse(good[:10])
    with pytest.raises(CorruptionError):
        fio.snapshot_parse(good + b"\0")
    with pytest.raises(FormatError):
        fio.snapshot_bytes(np.zeros(2), np.ones(4))


def test_json_and_hash_helpers():
    text = fio.dumps({"a": np.float64(np.inf), "b": np.arange(2), "c": float("nan")})
    assert json.loads(text) == {"a": "inf", "b": [0, 1], "c": "nan"}
    assert fio.config_hash({"x": 1, "y": 2}) == fio.config_hash({"y": 2, "x": 1})
    m = fio.manifest("demo", {"x": 1}, 3, ["b", "a"])
    assert m["outputs"] == ["a", "b"] and set(m["versions"]) >= {"fracphi", "numpy", "scipy", "python"}


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_regime_examples(capsys):
    code, out, _ = run(["regime", "classify", "--dh", "2.9299", "--dw", "3.4650", "--theta", "1", "--n", "3"], capsys)
    assert code == 0 and json.loads(out)["global"] is True
    code, out, _ = run(["regime", "classify", "--dh", "3.1699", "--dw", "2.3219", "--theta", "0.737", "--n", "3"], capsys)
    assert code == 0 and json.loads(out)["local"] is False
    code, out, _ = run(["regime", "benchmark", "--dw", "2", "--theta", "0.5"], capsys)
    assert json.loads(out)["local"] == pytest.approx(2.5)


def test_cli_exit_codes(capsys):
    code, _, err = run(["regime", "classify", "--dh", "2", "--dw", "2", "--n", "3"], capsys)
    assert code == 1 and "--theta" in err
    code, _, err = run(["regime", "classify", "--dh", "-2", "--dw", "2", "--theta", "1", "--n", "3"], capsys)
    assert code == 1 and json.loads(err)["error"] == "DomainError"
    code, _, err = run(["space", "--space", "sg", "--level", "20"], capsys)
    assert code == 2 and json.loads(err)["error"] == "ResourceError"
    code, _, _ = run(["simulate", "--space", "sg", "--level", "2", "--n", "4"], capsys)
    assert code == 1


def test_cli_config_precedence_and_outputs(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"space": {"name": "sg", "level": 2}, "solver": {"dt": 0.01, "T": 0.05}}))
    out = tmp_path / "out"
    code, text, _ = run(["simulate", "--config", str(conf), "--T", "0.03", "--seed", "7", "--out", str(out)], capsys)
    assert code == 0
    report = json.loads(text)
    assert report["solver"]["T"] == 0.03 and report["solver"]["dt"] == 0.01 and report["seed"] == 7
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 7 and "phi_r0.fphi" in man["outputs"]
    traj = fio.snapshot_read(out / "phi_r0.fphi")
    assert traj.values.shape == (4, 15)
    assert (out / "trajectory.csv").read_text().startswith("replica,t,")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"solver": {"bogus": 1}}))
    code, _, _ = run(["simulate", "--config", str(bad)], capsys)
    assert code == 1


def test_cli_grid_and_catalog(tmp_path, capsys):
    code, _, _ = run(["regime", "grid", "--dw-range", "2", "3", "--dh-range", "2", "4", "--resolution", "4",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    csvs = [p.name for p in tmp_path.glob("*.csv")]
    assert csvs
    code, out, _ = run(["catalog"], capsys)
    assert code == 0 and "vicsek2" in out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fracphi.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "fracphi" in proc.stdout
