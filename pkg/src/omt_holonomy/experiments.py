"""Reproducible experiment runs: config in, trajectory dump out.

A config is a JSON object. Matrices are row-major nested lists. Every run
is deterministic; nothing in the pipeline draws random numbers.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .connection import BundleContext, CovCurve, curve_length, horizontal_lift, transition_factors
from .cycles import PolygonSpec, REF_POLICIES, ac_barycenter, ac_residual, alm_mean, gm2, solve_polygon
from .errors import UsageError
from .gaussian_omt import (
    extension_interval,
    mccann,
    mccann_samples,
    monge_map,
    monge_map_alt,
    triangle_curve,
    triangle_holonomy,
    w2_squared,
)
from .geodesics import (
    ImtProblem,
    fiber_rotation_target,
    imt_solve,
    isoholonomic_transform,
    necessary_conditions_residual,
)
from .numerics import check_skew, check_spd, congruence, rotation_angle, skew_exp

__all__ = ["KINDS", "ExperimentConfig", "TrajectoryDump", "load_config", "run", "write_dump", "dumps", "dump_document", "default_tracers"]

KINDS = ("monge", "geodesic", "lift", "triangle", "imt", "isoholonomic", "polygon", "barycenter", "gm")

#: Defaults for numerical settings; every one can be overridden in the config.
DEFAULTS = {
    "steps": 1000,
    "tol": 1e-9,
    "continuation_steps": 4,
    "max_iters": 50,
    "mean_tol": 1e-12,
}

_REQUIRED = {
    "monge": ("sigma0", "sigma1"),
    "geodesic": ("sigma0", "sigma1"),
    "lift": (),
    "triangle": ("vertices",),
    "imt": ("sigma_in", "sigma_fn"),
    "isoholonomic": ("omega",),
    "polygon": ("vertices",),
    "barycenter": ("vertices",),
    "gm": ("vertices",),
}


def default_tracers(n):
    """Unit basis vectors plus their mean; an arbitrary but fixed choice."""
    E = np.eye(n)
    return np.vstack([E, E.mean(axis=0)])


@dataclass
class ExperimentConfig:
    kind: str
    matrices: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    tracers: np.ndarray = None
    options: dict = field(default_factory=dict)

    @property
    def dim(self):
        for v in self.matrices.values():
            return (v[0] if isinstance(v, list) else v).shape[0]
        return None

    def setting(self, key):
        return self.settings.get(key, DEFAULTS[key])


@dataclass
class TrajectoryDump:
    """Everything an experiment produces, aligned on ``times``.

    ``tracers`` has shape ``(n_tracers, len(times), n)`` and holds
    ``factors[k] @ seed``.
    """

    kind: str
    times: np.ndarray
    covariances: np.ndarray
    factors: np.ndarray
    controls: np.ndarray
    seeds: np.ndarray
    summary: dict

    @property
    def tracers(self):
        if len(self.seeds) == 0:
            return np.zeros((0, len(self.times), self.covariances.shape[-1]))
        return np.einsum("kij,pj->pki", self.factors, self.seeds)

    @property
    def dim(self):
        return self.covariances.shape[-1]


def _matrix(raw, name, spd=True):
    try:
        M = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{name} is not a numeric matrix") from exc
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise UsageError(f"{name} must be a square matrix, got shape {M.shape}")
    return check_spd(M, name) if spd else M


def load_config(source, kind=None, overrides=None):
    """Parse and validate a config (path, JSON text, or dict) into :class:`ExperimentConfig`.

    ``kind`` from the command line takes precedence over the document's
    ``kind`` field; ``overrides`` replaces numerical settings.
    """
    if isinstance(source, dict):
        doc = dict(source)
    else:
        text = Path(source).read_text() if Path(str(source)).exists() else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    kind = kind or doc.get("kind")
    if kind not in KINDS:
        raise UsageError(f"unknown experiment kind {kind!r}; expected one of {', '.join(KINDS)}")
    if doc.get("kind") not in (None, kind):
        raise UsageError(f"config declares kind {doc['kind']!r} but {kind!r} was requested")
    missing = [k for k in _REQUIRED[kind] if k not in doc]
    if kind == "lift" and "curve" not in doc and "sigma" not in doc:
        missing.append("curve or sigma")
    if kind == "imt" and "phi_des" not in doc and "omega" not in doc:
        missing.append("phi_des or omega")
    if missing:
        raise UsageError(f"config for {kind!r} is missing: {', '.join(missing)}")

    matrices = {}
    for key in ("sigma0", "sigma1", "sigma_in", "sigma_fn", "sigma", "sigma_ref"):
        if key in doc:
            matrices[key] = _matrix(doc[key], key)
    for key in ("phi_des", "phi_in"):
        if key in doc:
            matrices[key] = _matrix(doc[key], key, spd=False)
    if "omega" in doc:
        matrices["omega"] = check_skew(_matrix(doc["omega"], "omega", spd=False), "omega")
    if "vertices" in doc:
        verts = doc["vertices"]
        if not isinstance(verts, list) or not verts:
            raise UsageError("vertices must be a non-empty list of matrices")
        matrices["vertices"] = [_matrix(v, f"vertices[{k}]") for k, v in enumerate(verts)]
    if "curve" in doc:
        matrices["curve"] = [_matrix(v, f"curve[{k}]") for k, v in enumerate(doc["curve"])]
    dims = {m.shape[0] for v in matrices.values() for m in (v if isinstance(v, list) else [v])}
    if len(dims) > 1:
        raise UsageError(f"matrices disagree in dimension: {sorted(dims)}")
    n = dims.pop() if dims else None

    settings = {k: doc[k] for k in DEFAULTS if k in doc}
    settings.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for key in ("steps", "continuation_steps", "max_iters"):
        if key in settings and (not isinstance(settings[key], int) or settings[key] < 1):
            raise UsageError(f"{key} must be a positive integer")
    for key in ("tol", "mean_tol"):
        if key in settings and not float(settings[key]) > 0:
            raise UsageError(f"{key} must be positive")

    tracers = doc.get("tracers")
    if tracers is None:
        tracers = default_tracers(n) if n else np.zeros((0, 0))
    else:
        tracers = np.array(tracers, dtype=float).reshape(len(tracers), -1) if tracers else np.zeros((0, n or 0))
        if len(tracers) and tracers.shape[1] != n:
            raise UsageError(f"tracer seeds must be {n}-vectors")

    options = {k: doc[k] for k in ("ref_policy", "family", "stride") if k in doc}
    if kind == "polygon":
        pol = doc.get("ref_policy", "agueh_carlier")
        if not isinstance(pol, str):
            pol = _matrix(pol, "ref_policy")
        elif pol not in REF_POLICIES:
            raise UsageError(f"ref_policy must be one of {REF_POLICIES} or a matrix")
        options["ref_policy"] = pol
    if kind in ("triangle",) and len(matrices["vertices"]) != 3:
        raise UsageError("a triangle needs exactly three vertices")
    if kind == "polygon" and len(matrices["vertices"]) < 3:
        raise UsageError("a polygon needs at least three vertices")
    if kind == "gm" and len(matrices["vertices"]) < 2:
        raise UsageError("gm needs at least two matrices")
    return ExperimentConfig(kind, matrices, settings, tracers, options)


def _angle_or_none(theta):
    return rotation_angle(theta) if np.shape(theta) == (2, 2) else None


def _closed_rotation(factors, sigma0):
    """Rotation angle of the whitened holonomy ``S^{-1/2} Phi S^{1/2}`` for 2x2 loops."""
    from .numerics import sym_inv_sqrt, sym_sqrt

    if factors.shape[-1] != 2:
        return None
    return rotation_angle(sym_inv_sqrt(sigma0) @ factors[-1] @ sym_sqrt(sigma0))


def _static_dump(cfg, summary, sigma0, sigma1, phi):
    n = sigma0.shape[0]
    return TrajectoryDump(
        cfg.kind,
        np.array([0.0, 1.0]),
        np.array([sigma0, sigma1]),
        np.array([np.eye(n), phi]),
        np.zeros((2, n, n)),
        cfg.tracers,
        summary,
    )


def _run_monge(cfg):
    s0, s1 = cfg.matrices["sigma0"], cfg.matrices["sigma1"]
    T = monge_map(s0, s1)
    ext = extension_interval(mccann(s0, s1))
    summary = {
        "monge_map": T,
        "w2_squared": w2_squared(s0, s1),
        "w2": float(np.sqrt(w2_squared(s0, s1))),
        "pushforward_residual": float(np.linalg.norm(congruence(T, s0) - s1)),
        "alternative_form_gap": float(np.linalg.norm(T - monge_map_alt(s0, s1))),
        "extension_interval": [ext.t_min, ext.t_max],
        "extension_degenerate": ext.degenerate,
    }
    return _static_dump(cfg, summary, s0, s1, T)


def _lift_dump(cfg, curve, factors, controls, summary):
    return TrajectoryDump(cfg.kind, curve.grid, curve.samples, factors, controls, cfg.tracers, summary)


def _run_geodesic(cfg):
    s0, s1 = cfg.matrices["sigma0"], cfg.matrices["sigma1"]
    K = cfg.setting("steps")
    _, S = mccann_samples(s0, s1, K)
    curve = CovCurve(S)
    factors, controls = transition_factors(curve)
    T = monge_map(s0, s1)
    ext = extension_interval(mccann(s0, s1))
    summary = {
        "length": curve_length(None, curve),
        "w2": float(np.sqrt(w2_squared(s0, s1))),
        "transport": factors[-1],
        "transport_vs_monge": float(np.linalg.norm(factors[-1] - T)),
        "extension_interval": [ext.t_min, ext.t_max],
    }
    return _lift_dump(cfg, curve, factors, controls, summary)


def _run_lift(cfg):
    K = cfg.setting("steps")
    if "curve" in cfg.matrices:
        curve = CovCurve(np.array(cfg.matrices["curve"]))
    else:
        S = cfg.matrices["sigma"]
        curve = CovCurve(np.broadcast_to(S, (K + 1,) + S.shape).copy())
    ctx = BundleContext(cfg.matrices.get("sigma_ref", np.eye(curve.dim)))
    lift = horizontal_lift(ctx, curve, cfg.matrices.get("phi_in"))
    trans = lift.factors @ np.linalg.inv(lift.factors[0])
    closed = bool(curve.is_closed())
    summary = {
        "length": curve_length(ctx, curve),
        "transport": trans[-1],
        "closed": closed,
        "holonomy_angle": _closed_rotation(trans, curve.samples[0]) if closed else None,
    }
    return _lift_dump(cfg, curve, trans, lift.controls, summary)


def _run_triangle(cfg):
    verts = cfg.matrices["vertices"]
    K = cfg.setting("steps")
    K += (-K) % 3
    _, S = triangle_curve(*verts, K)
    curve = CovCurve(S, breaks=(K // 3, 2 * K // 3))
    factors, controls = transition_factors(curve)
    closed_form = triangle_holonomy(*verts)
    summary = {
        "holonomy": factors[-1],
        "holonomy_closed_form": closed_form,
        "holonomy_gap": float(np.linalg.norm(factors[-1] - closed_form)),
        "holonomy_angle": _closed_rotation(factors, verts[0]),
        "distance_from_identity": float(np.linalg.norm(closed_form - np.eye(len(closed_form)))),
        "perimeter": curve_length(None, curve),
    }
    return _lift_dump(cfg, curve, factors, controls, summary)


def _imt_problem(cfg, s_in, s_fn):
    ctx = BundleContext(cfg.matrices.get("sigma_ref", np.eye(s_in.shape[0])))
    phi_in = cfg.matrices.get("phi_in")
    if "phi_des" in cfg.matrices:
        phi_des = cfg.matrices["phi_des"]
    else:
        phi_des = fiber_rotation_target(s_in, s_fn, skew_exp(cfg.matrices["omega"]), ctx, phi_in)
    return ImtProblem(
        s_in,
        s_fn,
        phi_des,
        ctx=ctx,
        steps=cfg.setting("steps"),
        continuation_steps=cfg.setting("continuation_steps"),
        tol=cfg.setting("tol"),
        max_iters=cfg.setting("max_iters"),
        phi_in=phi_in,
    )


def _imt_summary(sol):
    p = sol.problem
    T = monge_map(p.sigma_in, p.sigma_fn)
    fiber = np.linalg.solve(T @ p.phi_in, sol.lift.factors[-1])
    trans = sol.transport
    return {
        "residual": sol.residual,
        "length": sol.length,
        "w2": float(np.sqrt(w2_squared(p.sigma_in, p.sigma_fn))),
        "omega": sol.omega,
        "pi0": sol.pi0,
        "transport": trans,
        "fiber_rotation": fiber,
        "fiber_rotation_angle": _angle_or_none(fiber),
        "fiber_rotation_degrees": None if fiber.shape != (2, 2) else float(np.degrees(rotation_angle(fiber))),
        "necessary_conditions_residual": necessary_conditions_residual(sol),
        "iterations": sol.iterations,
    }


def _transition(sol):
    f = sol.lift.factors
    return f @ np.linalg.inv(f[0])


def _run_imt(cfg):
    sol = imt_solve(_imt_problem(cfg, cfg.matrices["sigma_in"], cfg.matrices["sigma_fn"]))
    return _lift_dump(cfg, sol.curve, _transition(sol), sol.lift.controls, _imt_summary(sol))


def _run_isoholonomic(cfg):
    s = cfg.matrices.get("sigma", np.eye(cfg.matrices["omega"].shape[0]))
    sol = imt_solve(_imt_problem(cfg, s, s))
    summary = _imt_summary(sol)
    trans = _transition(sol)
    summary["loop_closure"] = float(np.linalg.norm(sol.curve.samples[-1] - s))
    summary["tracer_rotation_angle"] = _angle_or_none(trans[-1])
    family = int(cfg.options.get("family", 0))
    if family and s.shape == (2, 2) and np.allclose(s, s[0, 0] * np.eye(2)):
        lengths = []
        for k in range(family):
            curve = isoholonomic_transform(sol, skew_exp(np.array([[0.0, -1.0], [1.0, 0.0]]) * np.pi * k / family))
            lengths.append(curve_length(None, curve))
        summary["family_lengths"] = lengths
    return _lift_dump(cfg, sol.curve, trans, sol.lift.controls, summary)


def _run_polygon(cfg):
    spec = PolygonSpec(
        cfg.matrices["vertices"],
        cfg.options["ref_policy"],
        steps=cfg.setting("steps"),
        continuation_steps=cfg.setting("continuation_steps"),
        tol=cfg.setting("tol"),
        max_iters=cfg.setting("max_iters"),
    )
    sol = solve_polygon(spec)
    _, controls = transition_factors(sol.curve)
    summary = {
        "ref_policy": cfg.options["ref_policy"] if isinstance(cfg.options["ref_policy"], str) else "explicit",
        "sigma_ref": sol.sigma_ref,
        "perimeter": sol.perimeter,
        "edge_lengths": [e.length for e in sol.edges],
        "edge_residuals": [e.residual for e in sol.edges],
        "total_holonomy": sol.total_holonomy,
        "holonomy_error": sol.holonomy_error,
        "holonomy_ok": sol.holonomy_ok,
    }
    return _lift_dump(cfg, sol.curve, sol.factors, controls, summary)


def _run_barycenter(cfg):
    verts = cfg.matrices["vertices"]
    S = ac_barycenter(verts, tol=cfg.setting("mean_tol"))
    summary = {"barycenter": S, "fixed_point_residual": ac_residual(S, verts)}
    return _static_dump(cfg, summary, S, S, np.eye(S.shape[0]))


def _run_gm(cfg):
    verts = cfg.matrices["vertices"]
    G = gm2(*verts) if len(verts) == 2 else alm_mean(verts, tol=cfg.setting("mean_tol"))
    summary = {"geometric_mean": G}
    return _static_dump(cfg, summary, G, G, np.eye(G.shape[0]))


_RUNNERS = {
    "monge": _run_monge,
    "geodesic": _run_geodesic,
    "lift": _run_lift,
    "triangle": _run_triangle,
    "imt": _run_imt,
    "isoholonomic": _run_isoholonomic,
    "polygon": _run_polygon,
    "barycenter": _run_barycenter,
    "gm": _run_gm,
}


def run(config):
    """Run one experiment. Accepts an :class:`ExperimentConfig` or anything :func:`load_config` takes."""
    cfg = config if isinstance(config, ExperimentConfig) else load_config(config)
    return _RUNNERS[cfg.kind](cfg)


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, float) and not np.isfinite(x):
        return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def dump_document(dump):
    """The structured result document as a plain dict."""
    return {
        "kind": dump.kind,
        "dim": dump.dim,
        "summary": _plain(dump.summary),
        "arrays": {
            "times": _plain(dump.times),
            "covariances": _plain(dump.covariances),
            "factors": _plain(dump.factors),
            "controls": _plain(dump.controls),
            "tracer_seeds": _plain(dump.seeds),
            "tracers": _plain(dump.tracers),
        },
    }


def _num(x):
    return format(float(x), ".17g")


def _emit(x, indent=0):
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent + 1)
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(x[k], indent + 1)}" for k in sorted(x)]
        return "{\n" + ",\n".join(items) + "\n" + " " * indent + "}"
    if isinstance(x, list):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
            return "[" + ", ".join(_emit(v) for v in x) + "]"
        return "[\n" + ",\n".join(pad + _emit(v, indent + 1) for v in x) + "\n" + " " * indent + "]"
    if isinstance(x, float):
        return _num(x)
    return json.dumps(x)


def dumps(dump):
    """Serialized result document; byte-identical for identical runs."""
    return _emit(dump_document(dump)) + "\n"


def _table(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_num(v) for v in row])


def write_dump(dump, out_dir, tables=True):
    """Write ``result.json`` and, optionally, one CSV table per sampled quantity.

    Floats are written with 17 significant digits, so reading them back
    reproduces the computed doubles exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "result.json"]
    paths[0].write_text(dumps(dump))
    if tables:
        n = dump.dim
        idx = [f"{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
        for name in ("covariances", "factors", "controls"):
            arr = getattr(dump, name).reshape(len(dump.times), -1)
            p = out / f"{name}.csv"
            _table(p, ["t"] + [f"m{k}" for k in idx], np.column_stack([dump.times, arr]))
            paths.append(p)
        tr = dump.tracers
        if len(tr):
            p = out / "tracers.csv"
            header = ["t"] + [f"p{k}_x{i + 1}" for k in range(len(tr)) for i in range(n)]
            rows = np.column_stack([dump.times, tr.transpose(1, 0, 2).reshape(len(dump.times), -1)])
            _table(p, header, rows)
            paths.append(p)
    return paths
