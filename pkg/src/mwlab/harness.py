"""Configuration, experiment runner, artifact bundles and the ``mwlab`` CLI.

Configs are UTF-8 text with one ``key=value`` per line and dotted section
paths, e.g. ``model.renewal.tail_exponent=3``.  Lists are comma separated;
matrices separate rows with ``;``.  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, MWLabError

KINDS = ("conditions", "approx", "dyadic", "clt", "fdd", "lil", "counterexample", "empirical")
THREADS_ENV = "MWLAB_THREADS"

# key -> (type, default); choices are listed separately
SCHEMA: dict[str, tuple[str, object]] = {
    "kind": ("str", None),
    "seed": ("int", 0),
    "out": ("str", "mwlab-out"),
    "model.kind": ("str", "two_state"),
    "model.a": ("float", 0.3),
    "model.b": ("float", 0.6),
    "model.probs": ("floats", None),
    "model.matrix": ("matrix", None),
    "model.states": ("int", 5),
    "model.concentration": ("float", 1.0),
    "model.seed": ("int", 0),
    "model.renewal.tail_exponent": ("float", 3.0),
    "model.renewal.truncation": ("int", 4096),
    "observable.kind": ("str", "indicator"),
    "observable.state": ("int", 0),
    "observable.values": ("matrix", None),
    "observable.y": ("floats", None),
    "observable.center": ("bool", True),
    "grid.kind": ("str", "none"),
    "grid.points": ("floats", None),
    "grid.weights": ("floats", None),
    "grid.lo": ("float", 0.0),
    "grid.hi": ("float", 1.0),
    "grid.size": ("int", 64),
    "grid.finite": ("bool", True),
    "p": ("float", 2.0),
    "n": ("int", 4096),
    "M": ("int", 1000),
    "horizon": ("int", 1_000_000),
    "depth": ("int", 20),
    "n_max": ("int", 2000),
    "d": ("int", 8),
    "paths": ("int", 100),
    "times": ("floats", (0.0, 0.5, 1.0)),
    "checkpoints": ("ints", None),
    "burn_in": ("int", 1000),
    "lags": ("ints", (1, 16, 256, 1024)),
    "eps": ("float", 1e-6),
    "tol": ("float", 1e-14),
    "threshold": ("float", 0.03),
    "band": ("floats", (0.7, 1.2)),
    "net_size": ("int", 8),
    "use_martingale": ("bool", False),
    "a_rule": ("str", "inv_log"),
    "series_terms": ("int", 100_000),
    "truncations": ("ints", (1024, 2048, 4096)),
    "variance_ns": ("ints", (100, 1_000, 10_000, 100_000, 1_000_000)),
    "n_seeds": ("int", 10),
    "min_increasing": ("int", 8),
    "driver": ("str", "markov"),
    "lil_horizon": ("int", 0),
    "override": ("bool", False),
}

CHOICES = {
    "kind": KINDS,
    "model.kind": ("two_state", "iid", "matrix", "renewal", "random"),
    "observable.kind": ("indicator", "values", "cdf"),
    "grid.kind": ("none", "discrete", "lebesgue", "uniform"),
    "driver": ("markov", "uniform"),
}


# ----------------------------------------------------------------------------
# parsing and formatting values


def _parse_value(key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "str":
            return raw
        if kind == "floats":
            return tuple(float(x) for x in raw.replace(" ", "").split(",") if x)
        if kind == "ints":
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
        if kind == "matrix":
            rows = [tuple(float(x) for x in r.replace(" ", "").split(",") if x) for r in raw.split(";") if r.strip()]
            if len({len(r) for r in rows}) > 1:
                raise ValueError("ragged matrix")
            return tuple(rows)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r} as {kind} ({exc})", key) from None
    raise AssertionError(kind)


def _format_value(kind: str, value) -> str:
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return ",".join(repr(float(x)) for x in value)
    if kind == "ints":
        return ",".join(str(int(x)) for x in value)
    if kind == "matrix":
        return ";".join(",".join(repr(float(x)) for x in row) for row in value)
    return str(value)


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment configuration; ``values`` holds explicitly set keys."""

    kind: str
    values: dict = field(default_factory=dict)

    def get(self, key: str):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    @property
    def seed(self) -> int:
        return int(self.get("seed"))

    def with_values(self, **updates) -> "ExperimentSpec":
        vals = dict(self.values)
        vals.update(updates)
        return validate(self.kind, vals)

    def serialize(self) -> str:
        lines = [f"kind={self.kind}"]
        for key in sorted(self.values):
            if key == "kind":
                continue
            lines.append(f"{key}={_format_value(SCHEMA[key][0], self.values[key])}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()


def parse_config(text: str, overrides: dict | None = None) -> ExperimentSpec:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ConfigError(f"duplicate key on line {lineno}", key)
        raw[key] = value
    for key, value in (overrides or {}).items():
        raw[key] = str(value)
    typed = {}
    for key, value in raw.items():
        if key not in SCHEMA:
            raise ConfigError("unknown key", key)
        typed[key] = _parse_value(key, SCHEMA[key][0], value)
    if "kind" not in typed:
        raise ConfigError("missing experiment kind", "kind")
    return validate(typed.pop("kind"), typed)


def validate(kind: str, values: dict) -> ExperimentSpec:
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}", "kind")
    values = {k: v for k, v in values.items() if k != "kind"}
    for key, value in values.items():
        if key not in SCHEMA:
            raise ConfigError("unknown key", key)
        if key in CHOICES and value not in CHOICES[key]:
            raise ConfigError(f"{value!r} not in {CHOICES[key]}", key)
    spec = ExperimentSpec(kind, values)
    mk = spec.get("model.kind")
    if mk == "matrix" and spec.get("model.matrix") is None:
        raise ConfigError("model.kind=matrix needs model.matrix", "model.matrix")
    if mk == "iid" and spec.get("model.probs") is None:
        raise ConfigError("model.kind=iid needs model.probs", "model.probs")
    if kind == "counterexample" and mk != "renewal":
        raise ConfigError("counterexample runs on model.kind=renewal", "model.kind")
    ok = spec.get("observable.kind")
    if ok == "values" and spec.get("observable.values") is None:
        raise ConfigError("observable.kind=values needs observable.values", "observable.values")
    if ok == "cdf" and spec.get("observable.y") is None and not (kind == "empirical" and spec.get("driver") == "uniform"):
        raise ConfigError("observable.kind=cdf needs observable.y", "observable.y")
    values_ = spec.get("observable.values")
    if values_ is not None and len(values_) > 1 and spec.get("grid.kind") == "none":
        raise ConfigError("matrix-valued observable needs a grid", "grid.kind")
    if spec.get("grid.kind") == "discrete" and (spec.get("grid.points") is None or spec.get("grid.weights") is None):
        raise ConfigError("discrete grid needs grid.points and grid.weights", "grid.points")
    for key in ("n", "M", "horizon", "paths", "n_max"):
        if key in values and values[key] < 1:
            raise ConfigError("must be >= 1", key)
    if spec.get("p") < 1:
        raise ConfigError("norm exponent must be >= 1", "p")
    return spec


def load_config(path_or_name: str, overrides: dict | None = None) -> ExperimentSpec:
    """Read a config file, or a bundled config by name (without ``.cfg``)."""
    p = Path(path_or_name)
    if not p.exists():
        bundled = resources.files("mwlab") / "configs" / f"{path_or_name}.cfg"
        if not bundled.is_file():
            raise ConfigError(f"no config file or bundled config named {path_or_name!r}", "--config")
        text = bundled.read_text(encoding="utf-8")
    else:
        text = p.read_text(encoding="utf-8")
    return parse_config(text, overrides)


def bundled_configs() -> list[str]:
    return sorted(p.name[:-4] for p in (resources.files("mwlab") / "configs").iterdir() if p.name.endswith(".cfg"))


# ----------------------------------------------------------------------------
# building models and observables from a spec


def build_grid(spec: ExperimentSpec):
    from .models import Grid, lebesgue_grid, uniform_grid

    kind = spec.get("grid.kind")
    if kind == "none":
        return None
    if kind == "discrete":
        return Grid(spec.get("grid.points"), spec.get("grid.weights"), "discrete", spec.get("grid.finite"))
    lo, hi, size = spec.get("grid.lo"), spec.get("grid.hi"), spec.get("grid.size")
    if kind == "lebesgue":
        return lebesgue_grid(lo, hi, size, spec.get("grid.finite"))
    return uniform_grid(lo, hi, size)


def build_model(spec: ExperimentSpec):
    from . import models as mm
    from . import rng

    kind = spec.get("model.kind")
    if kind == "two_state":
        return mm.two_state(spec.get("model.a"), spec.get("model.b"))
    if kind == "iid":
        return mm.iid_model(spec.get("model.probs"))
    if kind == "matrix":
        return mm.FiniteMarkovModel.from_matrix(np.array(spec.get("model.matrix")), "matrix")
    if kind == "renewal":
        return mm.build_renewal_chain(renewal_spec(spec))
    return mm.random_chain(spec.get("model.states"), rng.generator(spec.get("model.seed"), 0xC0DE), spec.get("model.concentration"))


def renewal_spec(spec: ExperimentSpec):
    from .models import RenewalSpec

    return RenewalSpec(spec.get("model.renewal.tail_exponent"), spec.get("model.renewal.truncation"))


def build_observable(spec: ExperimentSpec, model):
    from .models import Observable, center_observable, indicator

    kind = spec.get("observable.kind")
    grid = build_grid(spec)
    if kind == "indicator":
        return indicator(model, spec.get("observable.state"), centered=spec.get("observable.center"))
    if kind == "cdf":
        from .empirical import EmpiricalSetup

        if grid is None:
            raise ConfigError("observable.kind=cdf needs a grid", "grid.kind")
        return EmpiricalSetup(model, grid, spec.get("p"), np.array(spec.get("observable.y"))).indicator_observable()
    rows = np.array(spec.get("observable.values"), dtype=float)
    if rows.shape[0] == 1:
        values = rows[0]
        if values.size != model.m:
            raise ConfigError(f"{values.size} values for {model.m} states", "observable.values")
        f = Observable(values)
    else:
        if rows.shape[0] != model.m:
            raise ConfigError(f"{rows.shape[0]} rows for {model.m} states", "observable.values")
        f = Observable(rows, grid, spec.get("p"))
    return center_observable(model, f) if spec.get("observable.center") else f


def load_model_config(path: str):
    """(model, observable) described by a config file."""
    spec = load_config(path)
    model = build_model(spec)
    return model, build_observable(spec, model)


# ----------------------------------------------------------------------------
# experiments


def _run_conditions(spec):
    from .conditions import condition_report

    model = build_model(spec)
    f = build_observable(spec, model)
    rep = condition_report(model, f, spec.get("depth"), spec.get("n_max"), spec.get("tol"))
    summary = {k: {"partial_sum": s.value, "last_term": s.last_term, "stopped": s.stopped, "tail_bound": s.tail_bound} for k, s in rep.series.items()}
    tables = {f"condition_{k}": (["n", "term", "partial_sum"], list(zip(s.index.tolist(), s.terms.tolist(), s.partials.tolist()))) for k, s in rep.series.items()}
    return {"model": model.name, "series": summary, "notes": rep.notes}, tables


def _run_approx(spec):
    from .martingale import (
        approximation_error,
        asymptotic_covariance,
        autocovariance_variance,
        cesaro_defect,
        resolvent_approx,
        solve_poisson,
    )

    model = build_model(spec)
    f = build_observable(spec, model)
    sol = solve_poisson(model, f)
    cov = asymptotic_covariance(model, f)
    lags = spec.get("lags")
    rows = []
    for n in lags:
        e = approximation_error(model, f, n)
        rows.append((n, e, e / math.sqrt(n), cesaro_defect(model, f, n)))
    y = resolvent_approx(model, f, spec.get("eps"))
    summary = {
        "poisson_residual": sol.residual,
        "poisson_mean": sol.mean,
        "condition_number": sol.condition,
        "resolvent_max_gap": float(np.abs(y.values - sol.h).max()),
        "covariance_min_eigenvalue": cov.min_eigenvalue(),
    }
    if cov.is_scalar:
        series, tail = autocovariance_variance(model, f, 200)
        summary.update(sigma2=cov.sigma2, sigma2_autocovariance=series, sigma2_tail_bound=tail)
    K = np.atleast_2d(cov.K)
    tables = {
        "approximation_error": (["n", "error", "error_over_sqrt_n", "cesaro_defect"], rows),
        "covariance": ([f"c{j}" for j in range(K.shape[1])], K.tolist()),
    }
    return summary, tables


def _run_dyadic(spec):
    from .maximal import PartialSums, dyadic_components, dyadic_mds_defect, dyadic_tables, verify_dyadic_inequality
    from .models import simulate_path

    model = build_model(spec)
    f = build_observable(spec, model)
    d = spec.get("d")
    n = 1 << d
    tables_h = dyadic_tables(model, f, d)
    reps = []
    for s in range(spec.get("paths")):
        path = simulate_path(model, -n, n, spec.seed, s)
        c = dyadic_components(model, f, path, d, tables_h)
        reps.append(verify_dyadic_inequality(c, PartialSums.from_path(f, path, n), s))
    summary = {
        "depth": d,
        "paths": len(reps),
        "min_slack": min(r.slack for r in reps),
        "max_lhs": max(r.lhs for r in reps),
        "martingale_defect": dyadic_mds_defect(model, f, d) if model.m <= 1024 else None,
    }
    rows = [(r.path_id, r.depth, r.lhs, r.rhs, r.slack) for r in reps]
    return summary, {"dyadic_slack": (["path_id", "d", "lhs", "rhs", "slack"], rows)}


def _from_result(res):
    summary = res.to_dict()
    return summary, res.tables


def _run_clt(spec):
    from .limits import clt_experiment

    model = build_model(spec)
    f = build_observable(spec, model)
    return _from_result(clt_experiment(model, f, spec.get("n"), spec.get("M"), spec.seed, spec.get("use_martingale"), spec.get("net_size"), spec.get("threshold")))


def _run_fdd(spec):
    from .limits import fdd_experiment

    model = build_model(spec)
    f = build_observable(spec, model)
    return _from_result(fdd_experiment(model, f, spec.get("times"), spec.get("n"), spec.get("M"), spec.seed, spec.get("threshold")))


def _run_lil(spec):
    from .limits import lil_experiment

    model = build_model(spec)
    f = build_observable(spec, model)
    return _from_result(
        lil_experiment(model, f, spec.get("horizon"), spec.seed, spec.get("checkpoints"), spec.get("burn_in"), tuple(spec.get("band")), spec.get("net_size"))
    )


def _run_counterexample(spec):
    from .limits import counterexample_experiment

    return _from_result(
        counterexample_experiment(
            renewal_spec(spec),
            horizon=spec.get("horizon"),
            seed=spec.seed,
            a_rule=spec.get("a_rule"),
            series_terms=spec.get("series_terms"),
            truncations=spec.get("truncations"),
            variance_ns=spec.get("variance_ns"),
            checkpoints=spec.get("checkpoints") or (10_000, 100_000, 1_000_000),
            n_seeds=spec.get("n_seeds"),
            min_increasing=spec.get("min_increasing"),
        )
    )


def _run_empirical(spec):
    from .empirical import EmpiricalSetup, bound_checks, coefficient_table, empirical_limit_experiment, uniform_driver

    grid = build_grid(spec)
    if grid is None:
        raise ConfigError("empirical experiments need a grid", "grid.kind")
    if spec.get("driver") == "uniform":
        setup = EmpiricalSetup(uniform_driver(), grid, spec.get("p"))
    else:
        if spec.get("observable.y") is None:
            raise ConfigError("a Markov driver needs observable.y", "observable.y")
        setup = EmpiricalSetup(build_model(spec), grid, spec.get("p"), np.array(spec.get("observable.y")))
    res = empirical_limit_experiment(setup, spec.get("n"), spec.get("M"), spec.seed, spec.get("override"), spec.get("net_size"), spec.get("lil_horizon"))
    summary, tables = _from_result(res)
    if setup.is_markov:
        table = coefficient_table(setup, min(spec.get("n_max"), 256))
        slacks = bound_checks(table, setup.F, grid, setup.p) if grid.finite else {}
        nan = [float("nan")] * table.lags.size
        rows = list(
            zip(
                table.lags.tolist(),
                table.phi_tilde.tolist(),
                table.alpha_tilde.tolist(),
                table.tau_check.tolist(),
                np.asarray(slacks.get("finite_measure", nan)).tolist(),
                np.asarray(slacks.get("integral_phi", nan)).tolist(),
                np.asarray(slacks.get("integral_alpha", nan)).tolist(),
            )
        )
        tables["coefficients"] = (["n", "phi_tilde", "alpha_tilde", "tau_check", "finite_measure_slack", "integral_phi_slack", "integral_alpha_slack"], rows)
    return summary, tables


RUNNERS = {
    "conditions": _run_conditions,
    "approx": _run_approx,
    "dyadic": _run_dyadic,
    "clt": _run_clt,
    "fdd": _run_fdd,
    "lil": _run_lil,
    "counterexample": _run_counterexample,
    "empirical": _run_empirical,
}


def _jsonable(x):
    from .limits import _jsonable as conv

    return conv(x)


def _write_csv(path: Path, columns, rows) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else (int(x) if isinstance(x, np.integer) else x) for x in row])


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(spec: ExperimentSpec, out: str | Path | None = None) -> Path:
    """Run the experiment and write summary.json, CSV tables, the spec and a MANIFEST."""
    out = Path(out if out is not None else spec.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    summary, tables = RUNNERS[spec.kind](spec)
    payload = {"kind": spec.kind, "seed": spec.seed, "spec_sha256": spec.sha256(), "code_version": __version__, "result": summary}
    files = []
    (out / "summary.json").write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    files.append("summary.json")
    (out / "spec.cfg").write_text(spec.serialize(), encoding="utf-8")
    files.append("spec.cfg")
    for name, (columns, rows) in sorted(tables.items()):
        _write_csv(out / f"{name}.csv", columns, rows)
        files.append(f"{name}.csv")
    manifest = {
        "spec_sha256": spec.sha256(),
        "seed": spec.seed,
        "code_version": __version__,
        "files": {name: _sha256(out / name) for name in files},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    (out / "MANIFEST").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def verify_manifest(out: str | Path) -> dict[str, bool]:
    """Recompute checksums of every file listed in the MANIFEST."""
    out = Path(out)
    manifest = json.loads((out / "MANIFEST").read_text(encoding="utf-8"))
    return {name: (out / name).exists() and _sha256(out / name) == digest for name, digest in manifest["files"].items()}


# ----------------------------------------------------------------------------
# describe


DESCRIPTIONS = {
    "conditions": """\
conditions: exact projective-condition series for a Markov functional.
  Series: MW2 partial sums sum_n ||E_0(S_{2^n})||_G / 2^{n/2}; strengthened
  sum ||E_0(X o theta^{n-1})||_G / sqrt(n); H2 sum of ||E_0(X o theta^n) -
  E_{-1}(X o theta^n)||_2; rho(2^n) partial sums; N_p for grid observables.
  E_0(S_n) is the state function g_n = f + Pf + ... + P^{n-1} f.
  Knobs: depth (default 20), n_max (2000), tol (1e-14).
  Output: summary.json {series: {name: partial_sum, last_term, stopped,
  tail_bound}}, condition_<series>.csv (n, term, partial_sum).""",
    "approx": """\
approx: martingale approximation via the Poisson equation (I - P) h = f.
  d(w, w') = h(w') - Ph(w); sigma^2 = pi(h^2) - pi((Ph)^2); exact error
  ||S_n(X) - S_n(d)||_2 = (2 pi((Ph)^2) - 2 pi(Ph P^n Ph))^{1/2}.
  Knobs: lags (1,16,256,1024), eps for the resolvent surrogate (1e-6).
  Output: summary.json {poisson_residual, sigma2, sigma2_autocovariance, ...},
  approximation_error.csv (n, error, error_over_sqrt_n, cesaro_defect),
  covariance.csv.""",
    "dyadic": """\
dyadic: pathwise dyadic maximal inequality with exact conditional expectations.
  E_{-m}(S_m) o theta^t = (P^m g_m)(W_{t-m}), m = 2^k.  Each path must start
  at time -2^d (it covers -2^d .. 2^d) so the top block expectation exists.
  Knobs: d (8), paths (100).
  Output: summary.json {min_slack, martingale_defect},
  dyadic_slack.csv (path_id, d, lhs, rhs, slack).""",
    "clt": """\
clt: Kolmogorov-Smirnov distance of S_n / sqrt(n) from Normal(0, sigma^2),
  sigma^2 exact from the martingale representation; grid observables are
  projected on a dual net of q-norm directions.
  Knobs: n (4096), M (1000), threshold (0.03), use_martingale (false).
  Output: summary.json {result.summary.ks_statistic, ...}, clt_quantiles.csv.""",
    "fdd": """\
fdd: increments of T_{n,t} = S_{n,t} / sqrt(n) (polygonal interpolation)
  against independent N(0, (t_i - t_{i-1}) sigma^2).
  Knobs: times (0,0.5,1), n, M, threshold.
  Output: summary.json {increment_ks, variance_ratios, max_cross_correlation},
  fdd_increments.csv (t_start, t_end, variance_ratio, ks).""",
    "lil": """\
lil: one long path; running max of |S_n| / sqrt(2 n L(L(n))) over
  burn_in <= n <= horizon with L = max(log, 1), compared with sigma and with
  the upper bound 10 sqrt(2) * MW2 partial sum (depth floor(log2 n)).  The
  form without the factor 2 is reported alongside.
  Knobs: horizon (1e6; below 1e5 a warning is issued), burn_in (1000),
  band (0.7,1.2), checkpoints (geometric by default).
  Output: summary.json, lil_trajectory.csv (n, ratio, bound).""",
    "counterexample": """\
counterexample: renewal chain p_{i,i-1} = 1, p_{0,i-1} = p_i with
  p_i ~ i^{-alpha}.  Gate: requires E tau^2 = infinity, i.e. tail exponent in
  (2, 3]; exponents above 3 are rejected.  Reports the weighted series
  sum a_n ||E_0(S_n)||_2 / n^{3/2} across truncations, exact Var(S_n)/n,
  the log growth of the E tau^2 partial sums, and max_{k<=n}|S_k| /
  sqrt(n L(L(n))) trajectories for seeds seed..seed+n_seeds-1.
  Knobs: model.renewal.tail_exponent (3), model.renewal.truncation (4096),
  horizon (1e6), a_rule (inv_log | inv_loglog | power:x), n_seeds (10).
  Output: summary.json, variance_growth.csv, weighted_series.csv,
  max_trajectories.csv (seed, n, max_ratio).""",
    "empirical": """\
empirical: sqrt(n) D_{n,p}(mu) with D_{n,p} = ||F_n - F||_{L^p(mu)} on a
  quadrature grid (p = 1 with Lebesgue mu is the Wasserstein-1 distance);
  Gamma along dual directions; for Markov drivers the coefficient table
  phi_tilde, alpha_tilde, tau_check and the bound slacks.
  Knobs: driver (markov | uniform), observable.y, grid.*, p, n, M,
  lil_horizon (0 = off), override.
  Output: summary.json, empirical_gamma.csv, coefficients.csv (n,
  phi_tilde, alpha_tilde, tau_check, finite_measure_slack, integral_phi_slack,
  integral_alpha_slack).""",
}


def describe(kind: str) -> str:
    if kind not in DESCRIPTIONS:
        raise ConfigError(f"unknown experiment kind {kind!r}; choose from {', '.join(KINDS)}", "kind")
    return DESCRIPTIONS[kind]


# ----------------------------------------------------------------------------
# CLI


def set_threads(n: int | None) -> int:
    from . import _kernels  # noqa: F401  (pins the threading layer before numba starts)
    import numba

    if n is None:
        env = os.environ.get(THREADS_ENV)
        n = int(env) if env else numba.config.NUMBA_NUM_THREADS
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mwlab", description="Projective conditions and limit theorems on finite Markov models.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=DESCRIPTIONS[kind].splitlines()[0])
        sp.add_argument("--config", help="config file or bundled config name")
        sp.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, help=f"worker threads (overrides ${THREADS_ENV})")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    d = sub.add_parser("describe", help="document an experiment kind")
    d.add_argument("kind")
    o = sub.add_parser("oracle", help="recompute the cached large-n empirical oracle")
    o.add_argument("--n", type=int, default=100_000)
    o.add_argument("--M", type=int, default=10_000)
    sub.add_parser("configs", help="list bundled configs")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "describe":
            print(describe(args.kind))
            return 0
        if args.command == "configs":
            print("\n".join(bundled_configs()))
            return 0
        if args.command == "oracle":
            from .empirical import _config_key, compute_oracle, oracle_path

            data = compute_oracle(args.n, args.M)
            oracle_path().write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
            print(json.dumps(data, indent=2, sort_keys=True))
            return 0
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", "--set")
            k, v = item.split("=", 1)
            overrides[k.strip()] = v
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        if args.config:
            spec = load_config(args.config, overrides)
            if spec.kind != args.command:
                raise ConfigError(f"config is for {spec.kind!r}, not {args.command!r}", "kind")
        else:
            spec = parse_config(f"kind={args.command}\n", overrides)
        set_threads(args.threads)
        out = run(spec, args.out)
        print(out / "summary.json")
        return 0
    except ConfigError as exc:
        print(f"mwlab: configuration error: {exc}", file=sys.stderr)
        return 2
    except MWLabError as exc:
        print(f"mwlab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
