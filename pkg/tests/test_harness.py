import json
import os

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mwlab import harness
from mwlab.errors import ConfigError
from mwlab.harness import (
    KINDS,
    SCHEMA,
    bundled_configs,
    describe,
    load_config,
    main,
    parse_config,
    run,
    set_threads,
    verify_manifest,
)

SMALL_CLT = ["--set", "n=256", "--set", "M=200"]


# ---------------------------------------------------------------- config parsing


@given(
    st.sampled_from(["clt", "lil", "fdd", "conditions"]),
    st.integers(0, 2**63 - 1),
    st.floats(0.01, 0.99),
    st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=5),
    st.booleans(),
)
def test_spec_round_trip(kind, seed, a, times, center):
    spec = harness.validate(kind, {"seed": seed, "model.a": a, "times": tuple(times), "observable.center": center})
    again = parse_config(spec.serialize())
    assert again.kind == spec.kind and again.values == spec.values
    assert again.sha256() == spec.sha256()


def test_unknown_key_names_key(capsys):
    assert main(["clt", "--set", "modell=3"]) == 2
    assert "modell" in capsys.readouterr().err


def test_duplicate_key():
    with pytest.raises(ConfigError, match="seed"):
        parse_config("kind=clt\nseed=1\nseed=2\n")


def test_missing_kind_and_bad_choice():
    with pytest.raises(ConfigError, match="kind"):
        parse_config("seed=1\n")
    with pytest.raises(ConfigError, match="grid.kind"):
        parse_config("kind=clt\ngrid.kind=hexagonal\n")
    with pytest.raises(ConfigError, match="model.matrix"):
        parse_config("kind=clt\nmodel.kind=matrix\n")
    with pytest.raises(ConfigError, match="model.kind"):
        parse_config("kind=counterexample\nmodel.kind=two_state\n")


def test_bad_value_type():
    with pytest.raises(ConfigError, match="n"):
        parse_config("kind=clt\nn=many\n")


def test_bundled_configs_load():
    names = bundled_configs()
    assert {"two_state_clt", "two_state_lil", "renewal_counterexample", "uniform_empirical"} <= set(names)
    for name in names:
        spec = load_config(name)
        assert spec.kind in KINDS


def test_schema_defaults_have_known_types():
    assert {t for t, _ in SCHEMA.values()} <= {"int", "float", "bool", "str", "floats", "ints", "matrix"}


# ---------------------------------------------------------------- runs and outputs


@pytest.fixture(scope="module")
def clt_runs(tmp_path_factory):
    outs = []
    for i in range(2):
        out = tmp_path_factory.mktemp(f"clt{i}")
        assert main(["clt", "--config", "two_state_clt", "--out", str(out), *SMALL_CLT]) == 0
        outs.append(out)
    return outs


def test_reruns_byte_identical(clt_runs):
    a, b = clt_runs
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for name in csvs + ["summary.json", "spec.cfg"]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_manifest_checksums(clt_runs):
    out = clt_runs[0]
    assert all(verify_manifest(out).values())
    manifest = json.loads((out / "MANIFEST").read_text())
    assert manifest["seed"] == 12345 and "timestamp" in manifest
    assert manifest["spec_sha256"] == load_config(str(out / "spec.cfg")).sha256()


def test_manifest_detects_tampering(tmp_path):
    spec = load_config("two_state_clt", {"n": "128", "M": "50"})
    out = run(spec, tmp_path)
    (out / "summary.json").write_text("{}\n")
    assert not verify_manifest(out)["summary.json"]


def test_summary_has_ks_statistic(clt_runs):
    data = json.loads((clt_runs[0] / "summary.json").read_text())
    assert 0 <= data["result"]["summary"]["ks_statistic"] <= 1
    assert "ks_statistic" in data["result"]["verdicts"]
    assert data["kind"] == "clt" and data["seed"] == 12345


def test_seed_flag_changes_output(tmp_path, clt_runs):
    assert main(["clt", "--config", "two_state_clt", "--seed", "7", "--out", str(tmp_path), *SMALL_CLT]) == 0
    assert (tmp_path / "summary.json").read_bytes() != (clt_runs[0] / "summary.json").read_bytes()


def test_config_kind_mismatch(capsys):
    assert main(["lil", "--config", "two_state_clt"]) == 2
    assert "kind" in capsys.readouterr().err


def test_precondition_exit_code(tmp_path, capsys):
    # a tail exponent of 4 gives E tau^2 < infinity, so the construction is refused
    code = main(["counterexample", "--config", "renewal_counterexample", "--set", "model.renewal.tail_exponent=4", "--out", str(tmp_path)])
    assert code == 3
    assert "Error" in capsys.readouterr().err


@pytest.mark.parametrize("name", ["two_state_conditions", "two_state_approx", "random_dyadic", "two_state_fdd"])
def test_small_kinds_run(tmp_path, name):
    spec = load_config(name)
    small = {"conditions": {"n_max": 64}, "approx": {"n_max": 64}, "dyadic": {"paths": 10, "d": 6}, "fdd": {"n": 256, "M": 200}}
    spec = spec.with_values(**small[spec.kind])
    out = run(spec, tmp_path)
    assert all(verify_manifest(out).values())


def test_lil_run_small(tmp_path):
    spec = load_config("two_state_lil", {"horizon": "20000"})
    with pytest.warns(UserWarning, match="normalizer"):
        out = run(spec, tmp_path)
    data = json.loads((out / "summary.json").read_text())
    assert data["kind"] == "lil"


# ---------------------------------------------------------------- describe, threads, listing


def test_describe_texts():
    lil = describe("lil")
    assert "sqrt(2 n L(L(n)))" in lil and "10 sqrt(2) * MW2" in lil
    assert "E tau^2 = infinity" in describe("counterexample")
    assert "-2^d" in describe("dyadic")
    for kind in KINDS:
        assert describe(kind).startswith(kind)


def test_describe_cli(capsys):
    assert main(["describe", "clt"]) == 0
    assert capsys.readouterr().out.startswith("clt")
    assert main(["describe", "foo"]) == 2


def test_configs_cli(capsys):
    assert main(["configs"]) == 0
    assert "two_state_clt" in capsys.readouterr().out.split()


def test_threads(monkeypatch):
    import numba

    top = numba.config.NUMBA_NUM_THREADS
    assert set_threads(1) == 1
    monkeypatch.setenv(harness.THREADS_ENV, "1")
    assert set_threads(None) == 1
    monkeypatch.delenv(harness.THREADS_ENV)
    assert set_threads(None) == top
    assert set_threads(10**6) == top


def test_threads_do_not_change_results(tmp_path, clt_runs):
    assert main(["clt", "--config", "two_state_clt", "--threads", "1", "--out", str(tmp_path), *SMALL_CLT]) == 0
    for p in clt_runs[0].glob("*.csv"):
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()


def test_set_without_equals(capsys):
    assert main(["clt", "--set", "n"]) == 2
