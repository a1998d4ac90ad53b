import json
import math
import struct

import pytest
from hypothesis import given, settings, strategies as st

from bandlab.config import (ConfigDocument, ConfigError, dump_config, example_config, load_config, mean_field_hypotheses,
                            much_less, parse_config, physical_check)
from bandlab.harness import run_experiment
from bandlab.io import fmt, read_csv, write_bundle

pytestmark = pytest.mark.filterwarnings("ignore::bandlab.lattice.BandwidthWarning")


def doc(**sections):
    base = {"ensemble": {"d": 1, "L": 64, "W": 8}, "spectral": {"E_list": [0.0], "eta_list": [0.5]},
            "run": {"trials": 2, "seed": 3}}
    for k, v in sections.items():
        base[k] = {**base.get(k, {}), **v}
    return json.dumps(base)


documents = st.builds(
    lambda d, L, W, kind, eps, E, eta, trials, seed, cls: {
        "ensemble": {"d": d, "L": L, "W": W, "class": cls, "epsilon": eps,
                     "profile": {"kind": kind, "params": {"beta": 1.3} if kind == "heavy-tail" else {"delta": 0.2}}},
        "spectral": {"E_list": E, "eta_list": eta},
        "run": {"trials": trials, "seed": seed},
    },
    st.integers(1, 3), st.integers(2, 200), st.floats(0.5, 50), st.sampled_from(["rapid-decay", "heavy-tail"]),
    st.floats(0, 0.5), st.lists(st.floats(-1.5, 1.5), min_size=1, max_size=3),
    st.lists(st.floats(0.01, 5), min_size=1, max_size=3), st.integers(1, 100), st.integers(0, 2**63),
    st.sampled_from(["complex-Hermitian", "real-symmetric"]),
)


@settings(max_examples=60, deadline=None)
@given(documents)
def test_config_round_trip(raw):
    a = parse_config(json.dumps(raw))
    b = parse_config(a.to_json())
    assert a == b
    assert a.to_spec() == b.to_spec()


def test_dump_and_load(tmp_path):
    a = parse_config(doc())
    dump_config(a, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == a
    assert parse_config(json.dumps(example_config())) == ConfigDocument()
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="ensemble.bandwidth"):
        parse_config(doc(ensemble={"bandwidth": 3}))
    with pytest.raises(ConfigError):
        parse_config(json.dumps({"extras": {}}))
    with pytest.raises(ConfigError):
        parse_config(doc(ensemble={"profile": {"kind": "rapid-decay", "params": {"beta": 1.5}}}))
    with pytest.raises(ConfigError, match="observables"):
        parse_config(doc(run={"observables": ["lambda", "entropy"]}))
    with pytest.raises(ConfigError):
        parse_config(doc(ensemble={"class": "quaternion"}))


def test_physical_constraints():
    with pytest.raises(ConfigError, match="must not exceed"):
        physical_check(parse_config(doc(ensemble={"W": 80})))
    with pytest.raises(ConfigError, match="M\\^\\(-1\\+gamma\\)"):
        physical_check(parse_config(doc(spectral={"eta_list": [1e-4]})))
    with pytest.raises(ConfigError, match="bulk"):
        physical_check(parse_config(doc(spectral={"E_list": [1.95]})))
    spec, notes = physical_check(parse_config(doc(ensemble={"W": 1.0})))
    assert notes and spec.W == 1.0
    spec, notes = physical_check(parse_config(doc()), seed=99)
    assert spec.master_seed == 99 and not notes


def test_default_eta_grid():
    d = parse_config(doc(spectral={"eta_list": None, "eta_points": 4}))
    grid = d.eta_grid()
    assert grid[0] == pytest.approx((8 / 64) ** 2) and grid[-1] == pytest.approx(1.0)
    assert len(grid) == 4


@settings(max_examples=300, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_seventeen_digits_round_trip(x):
    assert struct.pack("<d", float(fmt(x))) == struct.pack("<d", x)


def test_fmt_special_values():
    assert fmt(None) == ""
    assert fmt(True) == "1"
    assert fmt(7) == "7"
    assert fmt(float("nan")) == "nan"
    assert fmt("slope") == "slope"


def test_bundle_byte_reproducible(tmp_path):
    spec, _ = physical_check(parse_config(doc(run={"observables": ["lambda", "residual", "profile", "deloc"]})))
    paths = []
    for name in ("a", "b"):
        paths.append(write_bundle(run_experiment(spec), tmp_path / name, config={"x": 1}))
    for pa, pb in zip(*paths):
        if pa.suffix == ".csv":
            assert pa.read_bytes() == pb.read_bytes()
        else:
            ma, mb = json.loads(pa.read_text()), json.loads(pb.read_text())
            ma.pop("timing"), mb.pop("timing")
            assert ma == mb
    rows = read_csv(tmp_path / "a" / "summary.csv")
    assert len(rows) == 2
    assert float(rows[0]["eta"]) == 0.5
    assert all(math.isfinite(float(r["Lambda"])) for r in rows)
    names = sorted(p.name for p in paths[0])
    assert "manifest.json" in names and "summary.csv" in names
    assert any(n.startswith("profile_") for n in names)


def test_mean_field_hypotheses_for_mixture_run():
    hyp = mean_field_hypotheses(512, 128, 0.3, 0.06)
    assert hyp == {"broadening_vs_width": True, "eta_lower": True, "eta_upper": True}
    assert not all(mean_field_hypotheses(512, 128, 0.3, 1.0).values())
    assert much_less(1.0, 2.0, 10) and not much_less(1.0, 1.05, 10)
