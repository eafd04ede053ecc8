"""Declarative end-to-end runs: grid, initial state, Hamiltonian, schedule, analyses.

A scenario is a JSON object::

    {
      "name": "harmonic-return",
      "description": "...",
      "seed": 0,
      "grid": {"n_q": 128, "n_p": 128, "q_range": [-8, 8], "p_range": [-8, 8], "hbar": 1.0},
      "state": {"kind": "gaussian", "q0": 1.0, "p0": 0.5, "sigma_q": 1.0, "sigma_p": 1.0},
      "hamiltonian": {"kind": "harmonic", "m": 1.0, "omega": 1.0},
      "schedule": {"dt": 0.00314159, "steps": 2000, "checkpoint_every": 0},
      "analyses": [{"type": "fidelity", "min": 0.9999}]
    }

State kinds: ``gaussian``, ``cat`` (two Gaussians along q times a Gaussian
in p), ``correlated`` (superposition of two displaced product Gaussians) and
``random``. Analysis types are the keys of ``ANALYSES``; each returns metrics
and named checks, and a failed check marks the report as failed.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import fieldio
from .errors import InvalidDimension, InvalidRange, ScenarioError
from .grid import PhaseGrid, make_grid
from .propagator import HamiltonianSpec, canonical_transform, characteristics_evolve, kvn_evolve
from .states import (Amplitude, gaussian_state, marginal_cat, marginal_gaussian, modulus_squared,
                     partial_trace, product_state, pure_state_operator, random_state, superpose)
from .tilde_ops import (commutator_apply, make_tilde, momentum, named_generator, position,
                        verify_canonical_algebra, windowed)
from .uncertainty import robertson, tau_liouvillian_report
from .wigner import (expectation_integral, is_negative, moyal_residual,
                     negativity_volume, overlap_identity_check, partial_wigner, purity_integral,
                     qp_marginal, wigner_transform)

TOP_KEYS = {"name", "description", "seed", "grid", "state", "hamiltonian", "schedule", "analyses"}
STATE_KINDS = {"gaussian", "cat", "correlated", "random"}


@dataclass
class Check:
    name: str
    value: float
    limit: float
    op: str  # "<=" or ">="

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.limit if self.op == "<=" else self.value >= self.limit

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "limit": self.limit, "op": self.op,
                "passed": self.passed}


@dataclass
class ReportBundle:
    scenario: str
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "passed": self.passed, "metrics": self.metrics,
                "checks": [c.to_dict() for c in self.checks], "tables": self.tables,
                "artifacts": self.artifacts}

    def to_json(self) -> str:
        return dumps(self.to_dict())


def _finite_or_fail(obj, path="report"):
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ScenarioError(f"non-finite value at {path}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _finite_or_fail(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _finite_or_fail(v, f"{path}[{i}]")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON; raises ScenarioError on NaN or infinity."""
    obj = _plain(obj)
    _finite_or_fail(obj)
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# -- schema -------------------------------------------------------------------

def validate(s: dict) -> dict:
    """Check the scenario structure and fill defaults; returns a new dict."""
    if not isinstance(s, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = set(s) - TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    if not isinstance(s.get("name"), str) or not s["name"]:
        raise ScenarioError("scenario needs a non-empty 'name'")
    out = copy.deepcopy(s)
    out.setdefault("description", "")
    out.setdefault("seed", 0)
    g = out.setdefault("grid", {})
    g.setdefault("n_q", 128)
    g.setdefault("n_p", 128)
    g.setdefault("q_range", [-8.0, 8.0])
    g.setdefault("p_range", [-8.0, 8.0])
    g.setdefault("hbar", 1.0)
    try:
        build_grid(g)
    except (KeyError, TypeError, ValueError, InvalidDimension, InvalidRange) as exc:
        raise ScenarioError(f"invalid grid: {exc}") from None
    st = out.setdefault("state", {"kind": "gaussian"})
    if st.get("kind", "gaussian") not in STATE_KINDS:
        raise ScenarioError(f"state kind must be one of {sorted(STATE_KINDS)}")
    out.setdefault("hamiltonian", {"kind": "harmonic"})
    if out["hamiltonian"].get("kind", "free") not in ("free", "harmonic", "custom", "zero"):
        raise ScenarioError("hamiltonian kind must be free, harmonic, custom or zero")
    sch = out.setdefault("schedule", {})
    sch.setdefault("dt", 0.01)
    sch.setdefault("steps", 0)
    sch.setdefault("checkpoint_every", 0)
    if int(sch["steps"]) < 0 or int(sch["checkpoint_every"]) < 0:
        raise ScenarioError("steps and checkpoint_every must be nonnegative")
    an = out.setdefault("analyses", [])
    if not isinstance(an, list):
        raise ScenarioError("'analyses' must be a list")
    for a in an:
        if not isinstance(a, dict) or a.get("type") not in ANALYSES:
            raise ScenarioError(f"unknown analysis {a!r}; known: {sorted(ANALYSES)}")
    return out


def load(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return validate(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: invalid JSON ({exc})") from None


def build_grid(spec: dict) -> PhaseGrid:
    return make_grid(spec["n_q"], spec["n_p"], spec["q_range"], spec["p_range"], spec.get("hbar", 1.0))


def build_state(grid: PhaseGrid, spec: dict, rng: np.random.Generator) -> Amplitude:
    kind = spec.get("kind", "gaussian")
    if kind == "gaussian":
        return gaussian_state(grid, spec.get("q0", 0.0), spec.get("p0", 0.0), spec.get("sigma_q", 1.0),
                              spec.get("sigma_p", 1.0), spec.get("kick_q", 0.0), spec.get("kick_p", 0.0))
    if kind == "cat":
        sigma = spec.get("sigma", 0.7)
        sep = spec.get("separation", 6 * sigma)
        return product_state(
            marginal_cat(grid, 1, sep, sigma, spec.get("center", 0.0), spec.get("relative_phase", 0.0)),
            marginal_gaussian(grid, 2, spec.get("p0", 0.0), spec.get("sigma_p", 1.0))).normalized()
    if kind == "correlated":
        s = spec.get("sigma", 0.7)
        dq, dp = spec.get("q_separation", 3.0), spec.get("p_separation", 3.0)
        a = gaussian_state(grid, -dq / 2, -dp / 2, s, s)
        b = gaussian_state(grid, dq / 2, dp / 2, s, s)
        return superpose([(1.0, a), (np.exp(1j * spec.get("relative_phase", 0.0)), b)])
    return random_state(grid, rng, spec.get("width", 0.7), spec.get("spread", 1.5), spec.get("modes", 3))


def build_hamiltonian(spec: dict) -> HamiltonianSpec:
    return HamiltonianSpec.from_dict(spec)


# -- analyses -----------------------------------------------------------------

@dataclass
class Context:
    scenario: dict
    grid: PhaseGrid
    H: HamiltonianSpec
    chi0: Amplitude
    chi: Amplitude
    rng: np.random.Generator
    report: ReportBundle


def _l2(a, b, grid):
    return float(np.sqrt(np.sum(np.abs(a - b) ** 2) * grid.cell))


def _oracle_error(grid, chi0, H, t, dt, steps):
    chi = kvn_evolve(chi0, H, dt, steps)
    rho = characteristics_evolve(modulus_squared(chi0), H, t, dt=dt)
    return _l2(np.abs(chi.values) ** 2, rho.values, grid), rho.mass


def an_fidelity(ctx: Context, a: dict):
    f = abs(np.vdot(ctx.chi0.values, ctx.chi.values) * ctx.grid.cell)
    ctx.report.metrics["fidelity"] = f
    ctx.report.metrics["norm_drift"] = abs(ctx.chi.norm - 1.0)
    ctx.report.checks.append(Check("fidelity", f, a.get("min", 1 - 1e-4), ">="))
    ctx.report.checks.append(Check("norm_drift", abs(ctx.chi.norm - 1.0), a.get("norm_tol", 1e-8), "<="))


def an_support(ctx: Context, a: dict):
    """Relative change of the measure of ``{rho > eps * max}``."""
    eps = a.get("eps", 1e-3)

    def measure(x):
        r = np.abs(x.values) ** 2
        return float((r > eps * r.max()).sum() * ctx.grid.cell)

    m0, m1 = measure(ctx.chi0), measure(ctx.chi)
    rel = abs(m1 - m0) / m0
    ctx.report.metrics["support_measure"] = {"initial": m0, "final": m1, "relative_change": rel}
    ctx.report.checks.append(Check("support_relative_change", rel, a.get("tol", 0.02), "<="))


def an_oracle(ctx: Context, a: dict):
    sch = ctx.scenario["schedule"]
    dt, steps = float(sch["dt"]), int(sch["steps"])
    t = dt * steps
    rho = characteristics_evolve(modulus_squared(ctx.chi0), ctx.H, t, dt=dt)
    err = _l2(np.abs(ctx.chi.values) ** 2, rho.values, ctx.grid)
    out = {"t": t, "l2_error": err, "oracle_mass": rho.mass}
    ctx.report.checks.append(Check("oracle_l2", err, a.get("tol", 1e-3), "<="))
    ctx.report.checks.append(Check("oracle_mass_drift", abs(rho.mass - 1.0), 1e-6, "<="))
    if a.get("refine", True):
        g = ctx.grid
        coarse = make_grid(g.n_q // 2, g.n_p // 2, (g.q_min, g.q_max), (g.p_min, g.p_max), g.hbar)
        c0 = build_state(coarse, ctx.scenario["state"], np.random.default_rng(ctx.scenario["seed"]))
        err_c, _ = _oracle_error(coarse, c0, ctx.H, t, dt, steps)
        out["l2_error_coarse"] = err_c
        out["refinement_ratio"] = err_c / err if err > 0 else math.inf
        ctx.report.checks.append(Check("refinement_ratio", out["refinement_ratio"],
                                       a.get("min_ratio", 3.5), ">="))
    ctx.report.metrics["oracle"] = out


def an_translation(ctx: Context, a: dict):
    g, chi = ctx.grid, ctx.chi0
    cells = int(a.get("cells", 8))
    tol = a.get("tol", 1e-8)
    out = {}
    for gen in a.get("generators", ["p", "q"]):
        G = momentum(g) if gen == "p" else position(g)
        if gen == "p":
            gamma, oracle = cells * g.dq, np.roll(chi.values, cells, axis=0)
        else:
            gamma, oracle = cells * g.dp, np.roll(chi.values, -cells, axis=1)
        moved = canonical_transform(chi, G, gamma)
        shift_err = float(np.abs(moved.values - oracle).max())
        half = canonical_transform(canonical_transform(chi, G, gamma / 3), G, 2 * gamma / 3)
        comp_err = float(np.abs(half.values - moved.values).max())
        out[gen] = {"gamma": gamma, "shift_error": shift_err, "composition_error": comp_err,
                    "norm_drift": abs(moved.norm - chi.norm)}
        ctx.report.checks.append(Check(f"translation_{gen}_shift", shift_err, tol, "<="))
        ctx.report.checks.append(Check(f"translation_{gen}_composition", comp_err, tol, "<="))
    ctx.report.metrics["translation"] = out


def _operator(grid, name):
    if name == "q":
        return grid.Q
    if name == "p":
        return grid.P
    if name == "qt":
        return make_tilde(position(grid))
    if name == "pt":
        return make_tilde(momentum(grid))
    return named_generator(grid, name)


def an_uncertainty(ctx: Context, a: dict):
    rows = []
    for A, B in a.get("pairs", [["q", "pt"], ["q", "p"], ["qt", "p"]]):
        rep = robertson(ctx.chi, _operator(ctx.grid, A), _operator(ctx.grid, B), f"{A},{B}")
        rows.append(rep.to_dict())
        ctx.report.checks.append(Check(f"slack_{A}_{B}", rep.slack, -a.get("tol", 1e-6), ">="))
    ctx.report.tables["uncertainty"] = rows


def an_uncertainty_sweep(ctx: Context, a: dict):
    g = ctx.grid
    pt = make_tilde(momentum(g))
    rows = []
    for s in a.get("sigmas", [0.5, 1.0, 2.0]):
        chi = gaussian_state(g, sigma_q=s, sigma_p=a.get("sigma_p", 1.0))
        rep = robertson(chi, g.Q, pt, f"sigma={s}")
        rel = rep.slack / rep.bound
        row = rep.to_dict()
        row["relative_slack"] = rel
        rows.append(row)
        ctx.report.checks.append(Check(f"saturation_sigma_{s}", abs(rel), a.get("tol", 1e-3), "<="))
    ctx.report.tables["uncertainty"] = rows


def an_random_uncertainty(ctx: Context, a: dict):
    g = ctx.grid
    pt = make_tilde(momentum(g))
    n = int(a.get("count", 200))
    slacks = [robertson(random_state(g, ctx.rng), g.Q, pt).slack for _ in range(n)]
    ctx.report.metrics["random_uncertainty"] = {"count": n, "min_slack": min(slacks)}
    ctx.report.checks.append(Check("min_slack", min(slacks), -a.get("tol", 1e-6), ">="))


def an_commutators(ctx: Context, a: dict):
    g = ctx.grid
    qt, pt = make_tilde(position(g)), make_tilde(momentum(g))
    one = 1j * g.hbar
    worst = {"[q,pt]-ih": 0.0, "[qt,p]-ih": 0.0, "[q,p]": 0.0, "[qt,pt]": 0.0}
    for _ in range(int(a.get("count", 20))):
        c = random_state(g, ctx.rng).values
        res = {"[q,pt]-ih": commutator_apply(g.Q, pt, c, g) - one * c,
               "[qt,p]-ih": commutator_apply(qt, g.P, c, g) - one * c,
               "[q,p]": commutator_apply(g.Q, g.P, c, g),
               "[qt,pt]": commutator_apply(qt, pt, c, g)}
        for k, v in res.items():
            worst[k] = max(worst[k], float(np.abs(v)[g.trust_region].max()))
    ctx.report.metrics["commutators"] = worst
    for k, v in worst.items():
        ctx.report.checks.append(Check(f"commutator {k}", v, a.get("tol", 1e-7), "<="))


_POLY = {"q": lambda q, p: q, "p": lambda q, p: p, "q2": lambda q, p: q ** 2, "p2": lambda q, p: p ** 2}


def an_canonical_algebra(ctx: Context, a: dict):
    g = ctx.grid
    out = {}
    for u, v in a.get("pairs", [["q", "p"], ["q2", "p"], ["q", "p2"]]):
        U, V = windowed(g, _POLY[u], u), windowed(g, _POLY[v], v)
        worst = 0.0
        for _ in range(int(a.get("count", 3))):
            worst = max(worst, verify_canonical_algebra(U, V, random_state(g, ctx.rng)).worst)
        out[f"{u},{v}"] = worst
        ctx.report.checks.append(Check(f"algebra_{u}_{v}", worst, a.get("tol", 1e-6), "<="))
    ctx.report.metrics["canonical_algebra"] = out


def an_wigner(ctx: Context, a: dict):
    chi = ctx.chi
    W = wigner_transform(chi, a.get("allow_large", False))
    rho = pure_state_operator(chi)
    pw = partial_wigner(partial_trace(rho, 1))
    out = {"integral": W.integral(), "min": float(W.values.min()), "max": float(W.values.max()),
           "negativity_volume": negativity_volume(W), "imag_residue": W.imag_residue,
           "partial_min": float(pw.values.min()), "partial_max": float(pw.values.max()),
           "partial_negativity_volume": negativity_volume(pw),
           "partial_is_negative": is_negative(pw),
           "marginal_error": float(np.abs(qp_marginal(W).values - np.abs(chi.values) ** 2).max())}
    ctx.report.metrics["wigner"] = out
    ctx.report.checks.append(Check("wigner_integral", abs(out["integral"] - 1), 1e-6, "<="))
    ctx.report.checks.append(Check("wigner_marginal", out["marginal_error"], 1e-8, "<="))
    if "min_partial_negativity" in a:
        ctx.report.checks.append(Check("partial_negativity_volume", out["partial_negativity_volume"],
                                       a["min_partial_negativity"], ">="))
    if "max_min_ratio" in a:
        ctx.report.checks.append(Check("partial_min_over_max", out["partial_min"] / out["partial_max"],
                                       a["max_min_ratio"], "<="))
    if "max_negativity" in a:
        ctx.report.checks.append(Check("negativity_volume", out["negativity_volume"],
                                       a["max_negativity"], "<="))
    if a.get("write_field") and ctx.report.artifacts is not None:
        ctx.report.metrics.setdefault("_fields", {})["wigner"] = W


def wigner_property_states(grid: PhaseGrid):
    """Assorted pure states used by the Wigner property suite."""
    g = grid
    s = 1.0
    return {
        "gaussian": gaussian_state(g, sigma_q=s, sigma_p=s),
        "displaced": gaussian_state(g, 1.0, -0.5, s, s, 0.4, -0.3),
        "squeezed": gaussian_state(g, 0.0, 0.5, 1.3, 0.9),
        "cat": product_state(marginal_cat(g, 1, 3.0, 1.0), marginal_gaussian(g, 2, 0.0, 1.0)).normalized(),
        "correlated": superpose([(1.0, gaussian_state(g, -1.0, -1.0, s, s)),
                                 (1.0, gaussian_state(g, 1.0, 1.0, s, s))]),
        "excited": Amplitude(g.Q * gaussian_state(g, sigma_q=s, sigma_p=s).values, g).normalized(),
        "kicked": gaussian_state(g, -0.5, 0.0, s, 1.1, 0.8, 0.6),
        "cat_odd": product_state(marginal_cat(g, 1, 3.0, 1.0, relative_phase=np.pi),
                                 marginal_gaussian(g, 2, 0.3, 1.0)).normalized(),
        "p_cat": product_state(marginal_gaussian(g, 1, 0.2, 1.0), marginal_cat(g, 2, 3.0, 1.0)).normalized(),
        "correlated_phase": superpose([(1.0, gaussian_state(g, -1.0, 1.0, s, s)),
                                       (1j, gaussian_state(g, 1.0, -1.0, s, s))]),
    }


def wigner_property_pairs(states):
    return [("gaussian", "gaussian"), ("gaussian", "displaced"), ("gaussian", "excited"),
            ("cat", "correlated"), ("squeezed", "kicked")]


def an_wigner_properties(ctx: Context, a: dict):
    import sympy

    from .propagator import doubled_symbols

    g = ctx.grid
    q, _, _, p = doubled_symbols()
    states = wigner_property_states(g)
    peak = 1.0 / (2 * np.pi * g.hbar) ** 2
    worst = {"marginal": 0.0, "normalization": 0.0, "expectation": 0.0, "purity": 0.0, "overlap": 0.0}
    fields = {}
    for name, chi in states.items():
        W = wigner_transform(chi)
        fields[name] = W
        dens = np.abs(chi.values) ** 2
        worst["marginal"] = max(worst["marginal"], float(np.abs(qp_marginal(W).values - dens).max()))
        worst["normalization"] = max(worst["normalization"], abs(W.integral() - 1.0))
        for R in (q, p, q ** 2, q * p):
            exact = float(np.sum(dens * sympy.lambdify((q, p), R)(g.Q, g.P)) * g.cell)
            worst["expectation"] = max(worst["expectation"], abs(expectation_integral(W, R) - exact))
        worst["purity"] = max(worst["purity"], abs(purity_integral(W) - peak))
    for x, y in wigner_property_pairs(states):
        lhs, rhs = overlap_identity_check(states[x], states[y])
        worst["overlap"] = max(worst["overlap"], abs(lhs - rhs))
    ctx.report.metrics["wigner_properties"] = worst
    limits = {"marginal": 1e-8, "normalization": 1e-6, "expectation": 1e-6, "purity": 1e-4, "overlap": 1e-6}
    for k, lim in limits.items():
        ctx.report.checks.append(Check(f"wigner_{k}", worst[k], lim, "<="))


def an_moyal(ctx: Context, a: dict):
    dts = a.get("dts", [0.1, 0.05])
    res = [moyal_residual(ctx.chi0, ctx.H, dt) for dt in dts]
    ratios = [res[i] / res[i + 1] for i in range(len(res) - 1)]
    ctx.report.metrics["moyal"] = {"dts": dts, "residuals": res, "ratios": ratios}
    if "small_dt" in a:
        small = moyal_residual(ctx.chi0, ctx.H, a["small_dt"])
        ctx.report.metrics["moyal"]["small_dt_residual"] = small
        ctx.report.checks.append(Check("moyal_small_dt", small, a.get("tol", 1e-3), "<="))
    for i, r in enumerate(ratios):
        ctx.report.checks.append(Check(f"moyal_ratio_{dts[i]}_{dts[i + 1]}", r, a.get("min_ratio", 4.0), ">="))


def an_tau(ctx: Context, a: dict):
    rep = tau_liouvillian_report(ctx.chi0, ctx.H, a.get("p_cut", 1.0))
    ctx.report.tables["uncertainty"] = [rep.to_dict()]
    target = 0.5 * ctx.grid.hbar * rep.notes["mass_in_mask"]
    ctx.report.checks.append(Check("tau_bound", abs(rep.bound - target), a.get("tol", 1e-3), "<="))
    ctx.report.checks.append(Check("tau_slack", rep.slack, -1e-4, ">="))


ANALYSES = {
    "fidelity": an_fidelity,
    "support": an_support,
    "oracle-compare": an_oracle,
    "translation": an_translation,
    "uncertainty": an_uncertainty,
    "uncertainty-sweep": an_uncertainty_sweep,
    "random-uncertainty": an_random_uncertainty,
    "commutators": an_commutators,
    "canonical-algebra": an_canonical_algebra,
    "wigner": an_wigner,
    "wigner-properties": an_wigner_properties,
    "moyal": an_moyal,
    "tau-liouvillian": an_tau,
}


# -- runner -------------------------------------------------------------------

def run(scenario: dict, out_dir=None) -> ReportBundle:
    """Execute a scenario; writes ``report.json`` and friends when ``out_dir`` is given."""
    s = validate(scenario)
    try:
        grid = build_grid(s["grid"])
        rng = np.random.default_rng(s["seed"])
        H = build_hamiltonian(s["hamiltonian"])
        chi0 = build_state(grid, s["state"], rng)
        report = ReportBundle(s["name"])
        sch = s["schedule"]
        dt, steps, every = float(sch["dt"]), int(sch["steps"]), int(sch["checkpoint_every"])
        callback = None
        if out_dir is not None and every > 0:
            os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)

            def callback(n, values):
                if n % every == 0:
                    path = os.path.join(out_dir, "checkpoints", f"step_{n:06d}.kvnf")
                    fieldio.write_field(path, fieldio.Field(np.array(values), fieldio.grid_axes(grid)))
                    report.artifacts.append(os.path.relpath(path, out_dir))

        chi = kvn_evolve(chi0, H, dt, steps, callback=callback) if steps else chi0
        report.metrics["t_final"] = chi.time
        ctx = Context(s, grid, H, chi0, chi, rng, report)
        for a in s["analyses"]:
            ANALYSES[a["type"]](ctx, a)
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError(f"scenario {s['name']!r}: {type(exc).__name__}: {exc}") from exc
    fields = report.metrics.pop("_fields", {})
    if out_dir is not None:
        write_outputs(report, out_dir, grid, chi, fields)
    return report


def write_outputs(report: ReportBundle, out_dir, grid, chi, fields=None) -> None:
    from .wigner import WignerField

    os.makedirs(out_dir, exist_ok=True)
    final = os.path.join(out_dir, "final_amplitude.kvnf")
    fieldio.write_field(final, fieldio.Field(chi.values, fieldio.grid_axes(grid)))
    report.artifacts.append("final_amplitude.kvnf")
    for name, W in (fields or {}).items():
        if isinstance(W, WignerField):
            fieldio.write_field(os.path.join(out_dir, f"{name}.kvnf"),
                                fieldio.Field(W.values, fieldio.wigner_axes(W)))
            report.artifacts.append(f"{name}.kvnf")
    if "uncertainty" in report.tables:
        fieldio.atomic_write_text(os.path.join(out_dir, "uncertainty.csv"),
                                  uncertainty_csv(report.scenario, report.tables["uncertainty"]))
        report.artifacts.append("uncertainty.csv")
    report.artifacts.append("report.json")
    fieldio.atomic_write_text(os.path.join(out_dir, "report.json"), report.to_json())


def uncertainty_csv(scenario: str, rows) -> str:
    lines = ["scenario,label,sigma_a,sigma_b,bound,slack"]
    for r in rows:
        nums = ",".join(repr(float(r[k])) for k in ("sigma_a", "sigma_b", "bound", "slack"))
        lines.append(f"{scenario},\"{r['label']}\",{nums}")
    return "\n".join(lines) + "\n"


# -- builtins -----------------------------------------------------------------

_DENSE_GRID = {"n_q": 32, "n_p": 32, "q_range": [-8.0, 8.0], "p_range": [-8.0, 8.0]}

_BUILTINS = [
    {"name": "harmonic-return",
     "description": "Harmonic oscillator over one period returns the initial amplitude.",
     "state": {"kind": "gaussian", "q0": 1.0, "p0": 0.5, "sigma_q": 1.0, "sigma_p": 1.0},
     "hamiltonian": {"kind": "harmonic", "m": 1.0, "omega": 1.0},
     "schedule": {"dt": 2 * math.pi / 2000, "steps": 2000},
     "analyses": [{"type": "fidelity", "min": 1 - 1e-4}, {"type": "support", "tol": 0.02}]},
    {"name": "free-shear-oracle",
     "description": "Free particle at t = 1 against the characteristics oracle, with 2x refinement.",
     "grid": {"n_q": 128, "n_p": 128, "q_range": [-8.0, 8.0], "p_range": [-6.0, 6.0]},
     "state": {"kind": "gaussian", "q0": -1.0, "p0": 0.5, "sigma_q": 0.5, "sigma_p": 0.7},
     "hamiltonian": {"kind": "free", "m": 1.0},
     "schedule": {"dt": 1e-3, "steps": 1000},
     "analyses": [{"type": "oracle-compare", "tol": 1e-3, "min_ratio": 3.5}]},
    {"name": "harmonic-oracle",
     "description": "Harmonic oscillator at t = 1 against the characteristics oracle, with 2x refinement.",
     "state": {"kind": "gaussian", "q0": -1.0, "p0": 0.5, "sigma_q": 0.5, "sigma_p": 0.7},
     "hamiltonian": {"kind": "harmonic", "m": 1.0, "omega": 1.0},
     "schedule": {"dt": 1e-3, "steps": 1000},
     "analyses": [{"type": "oracle-compare", "tol": 1e-3, "min_ratio": 3.5}]},
    {"name": "translation-check",
     "description": "Generators p and q translate the amplitude by exactly 8 grid cells.",
     "state": {"kind": "random"},
     "hamiltonian": {"kind": "zero"},
     "analyses": [{"type": "translation", "generators": ["p", "q"], "cells": 8, "tol": 1e-8}]},
    {"name": "uncertainty-sweep",
     "description": "Gaussian widths 0.5, 1, 2 saturate sigma_q sigma_pt >= hbar/2; random states obey it.",
     "grid": {"n_q": 256, "n_p": 128, "q_range": [-20.0, 20.0], "p_range": [-8.0, 8.0]},
     "state": {"kind": "gaussian"},
     "hamiltonian": {"kind": "zero"},
     "analyses": [{"type": "uncertainty-sweep", "sigmas": [0.5, 1.0, 2.0], "tol": 1e-3},
                  {"type": "random-uncertainty", "count": 200, "tol": 1e-6},
                  {"type": "uncertainty", "pairs": [["q", "pt"], ["q", "p"], ["qt", "p"]]}]},
    {"name": "cat-negativity",
     "description": "Two-Gaussian cat in q (sigma 0.7, separation 6 sigma) shows partial-Wigner negativity.",
     "grid": dict(_DENSE_GRID),
     "state": {"kind": "cat", "sigma": 0.7, "separation": 4.2, "sigma_p": 0.7},
     "hamiltonian": {"kind": "zero"},
     "analyses": [{"type": "wigner", "min_partial_negativity": 0.05, "max_min_ratio": -0.1,
                   "write_field": True}]},
    {"name": "gaussian-nonnegative",
     "description": "Gaussian product state has a nonnegative Wigner function.",
     "grid": dict(_DENSE_GRID),
     "state": {"kind": "gaussian", "sigma_q": 0.7, "sigma_p": 0.7},
     "hamiltonian": {"kind": "zero"},
     "analyses": [{"type": "wigner", "max_negativity": 1e-8}]},
    {"name": "wigner-properties",
     "description": "Marginal, normalisation, expectation, peak and overlap identities on assorted states.",
     "grid": dict(_DENSE_GRID),
     "hamiltonian": {"kind": "zero"},
     "analyses": [{"type": "wigner-properties"}]},
    {"name": "moyal-residual",
     "description": "Doubled Moyal equation residual for the harmonic oscillator under step halving.",
     "grid": dict(_DENSE_GRID),
     "state": {"kind": "gaussian", "q0": 0.5, "p0": -0.3, "sigma_q": 0.8, "sigma_p": 0.8},
     "hamiltonian": {"kind": "harmonic", "m": 1.0, "omega": 1.0},
     "analyses": [{"type": "moyal", "dts": [0.1, 0.05], "min_ratio": 4.0, "small_dt": 1e-3, "tol": 1e-3}]},
    {"name": "tau-liouvillian",
     "description": "Dynamical time and Liouvillian of the free particle obey sigma_tau sigma_H >= hbar/2.",
     "state": {"kind": "gaussian", "p0": 3.0, "sigma_q": 1.0, "sigma_p": 0.3},
     "hamiltonian": {"kind": "free", "m": 1.0},
     "analyses": [{"type": "tau-liouvillian", "p_cut": 1.0, "tol": 1e-3}]},
    {"name": "commutator-suite",
     "description": "Fundamental commutators on 20 random band-limited states.",
     "state": {"kind": "random"},
     "hamiltonian": {"kind": "zero"},
     "analyses": [{"type": "commutators", "count": 20, "tol": 1e-7}]},
    {"name": "canonical-algebra",
     "description": "Sum, product and bracket rules of the tilde construction for windowed polynomials.",
     "state": {"kind": "random"},
     "hamiltonian": {"kind": "zero"},
     "analyses": [{"type": "canonical-algebra", "pairs": [["q", "p"], ["q2", "p"], ["q", "p2"]], "tol": 1e-6}]},
]


def list_builtins() -> list[dict]:
    return [validate(copy.deepcopy(b)) for b in _BUILTINS]


def get_builtin(name: str) -> dict:
    for b in _BUILTINS:
        if b["name"] == name:
            return validate(copy.deepcopy(b))
    raise ScenarioError(f"no builtin scenario named {name!r}")
