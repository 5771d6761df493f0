"""Scenario documents: schema, construction of sources, and output runners.

A scenario is a JSON object validated against :data:`SCHEMA` (unknown keys
are errors).  Running it writes CSV curves and a ``summary.json`` that
carries the SHA-256 of the canonical scenario text.
"""
from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from . import _kernels
from .arrival import DilationData, DirectIntegralSpace, assemble_effect, kijowski_free_1d
from .beam import (
    SKernel,
    StationaryState,
    finite_beam_truncation,
    g2_xy,
    gaussian_line,
    plane_wave,
    plane_wave_coherent,
)
from .errors import ValidationError
from .linalg import Statistics, as_statistics
from .pointproc import OutcomeGrid, PoissonGenerator, number_distribution, stationary_waiting_time_density
from .quasifree import QuasiFreeGenerator, characteristic_function, coherent_generator
from .sampler import BinnedKernel, binned_pair_expectation, count_law, estimate, sample
from .source import SourceSpec, boltzmann_reference, gamma_check, lambda_for_rate, stationary_sigma

_pos = {"type": "number", "exclusiveMinimum": 0}
_num = {"type": "number"}
_pos_or_list = {"oneOf": [_pos, {"type": "array", "items": _pos, "minItems": 1}]}


def _obj(props, required=()):
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required)}


SCHEMA = _obj(
    {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "statistics": {"type": "string", "pattern": r"^(bose|fermi|boltzmann|(para|parabose|parafermi):-?[1-9][0-9]*)$"},
        "grid": _obj(
            {
                "E_min": {"type": "number", "minimum": 0},
                "E_max": _pos,
                "n_nodes": {"type": "integer", "minimum": 2},
                "rule": {"enum": ["trapezoid", "rectangle"]},
                "mult": {"enum": [1, 2]},
            },
            ["E_min", "E_max", "n_nodes"],
        ),
        "source": {
            "oneOf": [
                {
                    "oneOf": [
                        _obj({"type": {"const": "plane_wave"}, "kappa": _pos, "E0": _pos}, ["type", "kappa", "E0"]),
                        _obj({"type": {"const": "plane_wave"}, "q": _pos, "E0": _pos}, ["type", "q", "E0"]),
                    ]
                },
                {
                    "oneOf": [
                        _obj(
                            {"type": {"const": "master"}, "profile": {"enum": ["lorentzian", "gaussian"]},
                             "E0": _pos, "alpha": _pos, "lambda": _pos_or_list},
                            ["type", "profile", "E0", "alpha", "lambda"],
                        ),
                        _obj(
                            {"type": {"const": "master"}, "profile": {"enum": ["lorentzian", "gaussian"]},
                             "E0": _pos, "alpha": _pos, "rate": _pos_or_list},
                            ["type", "profile", "E0", "alpha", "rate"],
                        ),
                    ]
                },
                {
                    "oneOf": [
                        _obj({"type": {"const": "table"}, "path": {"type": "string"}, "lambda": _pos_or_list},
                             ["type", "path", "lambda"]),
                        _obj({"type": {"const": "table"}, "path": {"type": "string"}, "rate": _pos_or_list},
                             ["type", "path", "rate"]),
                    ]
                },
            ]
        },
        "observable": {
            "oneOf": [
                _obj({"type": {"const": "kijowski_1d"}}, ["type"]),
                _obj({"type": {"const": "custom"}, "path": {"type": "string"}}, ["type", "path"]),
            ]
        },
        "windows": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
        },
        "outputs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    _obj({"type": {"const": "g2"}, "tau_max": _pos, "n_tau": {"type": "integer", "minimum": 2},
                          "detector": {"type": "string"}, "boltzmann_reference": {"type": "boolean"}},
                         ["type", "tau_max", "n_tau"]),
                    _obj({"type": {"const": "numberdist"}, "n_max": {"type": "integer", "minimum": 0},
                          "window": {"type": "integer", "minimum": 0}, "detector": {"type": "string"}},
                         ["type", "n_max"]),
                    _obj({"type": {"const": "waiting"}, "tau_max": _pos, "n_tau": {"type": "integer", "minimum": 2},
                          "step": _pos, "detector": {"type": "string"}},
                         ["type", "tau_max", "n_tau"]),
                    _obj({"type": {"const": "sample"}, "n_draws": {"type": "integer", "minimum": 2},
                          "seed": {"type": "integer", "minimum": 0}, "n_bins": {"type": "integer", "minimum": 1},
                          "window": {"type": "integer", "minimum": 0}, "detector": {"type": "string"},
                          "g2_bins": {"type": "integer", "minimum": 1}, "g2_max": _pos,
                          "wait_bins": {"type": "integer", "minimum": 1}, "wait_max": _pos},
                         ["type", "n_draws"]),
                    _obj({"type": {"const": "compare_truncation"},
                          "T": {"type": "array", "items": _pos, "minItems": 1},
                          "f": _num, "window": {"type": "integer", "minimum": 0}, "detector": {"type": "string"},
                          "line_width": _pos},
                         ["type", "T"]),
                ]
            },
        },
        "tolerances": _obj({"tail": _pos, "stationarity": _pos}),
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
    ["statistics", "source", "observable", "windows", "outputs"],
)


def scenario_hash(doc: dict) -> str:
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def validate(doc: dict) -> dict:
    """Schema and semantic checks; raises :class:`ValidationError`."""
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"scenario invalid at {where}: {exc.message}") from None
    as_statistics(doc["statistics"])
    for w in doc["windows"]:
        if not w[1] > w[0]:
            raise ValidationError(f"window {w} has non-positive length")
    if doc["source"]["type"] != "plane_wave" and "grid" not in doc:
        raise ValidationError("master and table sources need a grid")
    g = doc.get("grid")
    if g and not g["E_max"] > g["E_min"]:
        raise ValidationError("grid needs E_max > E_min")
    for out in doc["outputs"]:
        idx = out.get("window", 0)
        if idx >= len(doc["windows"]):
            raise ValidationError(f"output {out['type']} refers to missing window {idx}")
    return doc


def load(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"scenario is not valid JSON: {exc}") from None
    return validate(doc)


@dataclass
class Variant:
    """One concrete beam of a scenario (a scenario may sweep rates)."""

    label: str
    state: StationaryState
    dil: DilationData
    spec: SourceSpec | None = None
    coherent: object = None
    kappa: float | None = None


def _fmt(x: float) -> str:
    return repr(float(x))


def _custom_dilation(space, path: Path) -> DilationData:
    doc = json.loads(path.read_text())

    def mat(rows):
        return np.array([[complex(*e) if isinstance(e, list) else complex(e) for e in r] for r in rows])

    try:
        V = mat(doc["V"])
        G = {k: mat(v) for k, v in doc["G"].items()}
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"custom observable file malformed: {exc}") from None
    if V.shape[1] not in set(space.mult.tolist()) or len(set(space.mult.tolist())) != 1:
        raise ValidationError("custom V must match the grid multiplicity")
    return DilationData(space, V.shape[0], [V] * space.n_nodes, G)


def build_variants(doc: dict, base: Path) -> list[Variant]:
    stats = as_statistics(doc["statistics"])
    src = doc["source"]
    obs = doc["observable"]
    if src["type"] == "plane_wave":
        ell = doc["windows"][0][1] - doc["windows"][0][0]
        kappa = src["kappa"] if "kappa" in src else 2 * np.pi * src["q"] / ell
        state, dil = plane_wave(kappa, src["E0"], statistics=stats)
        if obs["type"] == "custom":
            dil = _custom_dilation(state.space, base / obs["path"])
        return [Variant("", state, dil, coherent=plane_wave_coherent(kappa, src["E0"]), kappa=kappa)]
    g = doc["grid"]
    space = DirectIntegralSpace.uniform(g["E_min"], g["E_max"], g["n_nodes"], g.get("mult", 1),
                                        g.get("rule", "trapezoid"))
    dil = kijowski_free_1d(space) if obs["type"] == "kijowski_1d" else _custom_dilation(space, base / obs["path"])
    if src["type"] == "master":
        spec = SourceSpec.from_profile(space, src["profile"], src["E0"], src["alpha"], 1.0)
    else:
        spec = SourceSpec.from_profile(space, "table", table=str(base / src["path"]), lam=1.0)
    gch = gamma_check(spec)
    key = "rate" if "rate" in src else "lambda"
    values = src[key] if isinstance(src[key], list) else [src[key]]
    multi = len(values) > 1
    out = []
    for v in values:
        lam = lambda_for_rate(spec, v, gch) if key == "rate" else v
        sp = spec.with_lambda(lam)
        state = stationary_sigma(sp, stats, gcheck=gch)
        out.append(Variant(f"_{key}{_fmt(v)}" if multi else "", state, dil, spec=sp))
    return out


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if not isinstance(x, (int, np.integer)) else int(x) for x in r])


def _detector(out, dil):
    x = out.get("detector", "+" if "+" in dil.G else next(iter(dil.G)))
    dil.effect_operator(x)
    return x


def _window(doc, out):
    a, b = doc["windows"][out.get("window", 0)]
    return float(a), float(b)


def _run_g2(doc, out, variants, outdir, stats, pool):
    tau = np.linspace(0.0, out["tau_max"], out["n_tau"])
    cols, header = [tau], ["tau"]

    def one(v):
        x = _detector(out, v.dil)
        G = v.dil.effect_operator(x)
        return g2_xy(SKernel(v.state, v.dil), G, G, tau, stats)

    for v, g in zip(variants, pool.map(one, variants)):
        header.append("g2" + v.label)
        cols.append(g)
    if out.get("boltzmann_reference") and variants[0].spec is not None:
        header.append("g2_boltzmann")
        cols.append(boltzmann_reference(variants[0].spec, tau))
    _write_csv(outdir / "g2.csv", header, zip(*cols))
    return {"file": "g2.csv", "g2_at_zero": [float(c[0]) for c in cols[1:]]}


def _source_grid(doc, out, v):
    x = _detector(out, v.dil)
    a, b = _window(doc, out)
    grid = OutcomeGrid([a, b], (x,))
    return grid, x


def _run_numberdist(doc, out, variants, outdir, stats, pool):
    n_max = out["n_max"]
    tail = doc.get("tolerances", {}).get("tail", 1e-6)
    summary = {}
    header, cols = ["n"], [np.arange(n_max + 1)]
    for v in variants:
        grid, x = _source_grid(doc, out, v)
        h = QuasiFreeGenerator(v.state.source(v.dil, stats), grid)
        region = grid.region()
        # compute deep enough to certify the tail, report the first n_max + 1
        mean = float(h.region_kernel(region).eigenvalues.sum())
        deep = number_distribution(h, region, max(n_max, 8 * int(np.ceil(mean)) + 40), tail)
        pq = deep.probs[: n_max + 1]
        if v.coherent is not None:
            pc = number_distribution(coherent_generator(v.coherent, grid), region, n_max, 1.0).probs
        else:
            pc = number_distribution(PoissonGenerator(grid, mean), region, n_max, 1.0).probs
        header += ["p_quasifree" + v.label, "p_coherent" + v.label]
        cols += [pq, pc]
        summary[v.label or "beam"] = {"mean": mean, "p0": float(pq[0])}
    _write_csv(outdir / "numberdist.csv", header, zip(*cols))
    return {"file": "numberdist.csv", "beams": summary}


def _run_waiting(doc, out, variants, outdir, stats, pool):
    tau = np.linspace(0.0, out["tau_max"], out["n_tau"])
    tol = doc.get("tolerances", {}).get("stationarity", 1e-6)
    header, cols = ["tau"], [tau]
    for v in variants:
        x = _detector(out, v.dil)
        src = v.state.source(v.dil, stats)
        gam = v.state.rate
        h = out.get("step", 1e-3 / gam)
        wq = stationary_waiting_time_density(src.void_function([x]), tau, h, tol=tol)
        if v.coherent is not None:
            wc = stationary_waiting_time_density(v.coherent.void_function([x]), tau, h, tol=tol)
        else:
            wc = gam * np.exp(-gam * tau)
        header += ["w_quasifree" + v.label, "w_coherent" + v.label]
        cols += [wq, wc]
    _write_csv(outdir / "waiting.csv", header, zip(*cols))
    return {"file": "waiting.csv"}


def _run_sample(doc, out, variants, outdir, stats, pool, seed):
    res = {}
    for v in variants:
        x = _detector(out, v.dil)
        a, b = _window(doc, out)
        src = v.state.source(v.dil, stats)
        k = BinnedKernel.from_source(src, (a, b), out.get("n_bins"), [x])
        s = out.get("seed", seed)
        batch = sample(k, s, out["n_draws"])
        L = b - a
        gam = k.expected_counts().sum() / L
        ge = np.linspace(0.0, out.get("g2_max", min(L / 2, 2.0 / gam)), out.get("g2_bins", 10) + 1)
        we = np.linspace(0.0, out.get("wait_max", min(L / 2, 3.0 / gam)), out.get("wait_bins", 15) + 1)
        est = estimate(batch, n_max=3, g2_edges=ge, wait_edges=we)
        law = count_law(k, 3)
        g2a = binned_pair_expectation(k, ge)
        name = "sample" + v.label
        _write_csv(outdir / f"{name}_g2.csv", ["lag_lo", "lag_hi", "g2_empirical", "stderr", "g2_analytic"],
                   zip(ge[:-1], ge[1:], est.g2.value, est.g2.stderr, g2a))
        _write_csv(outdir / f"{name}_waiting.csv", ["tau_lo", "tau_hi", "density", "stderr"],
                   zip(we[:-1], we[1:], est.wait.value, est.wait.stderr))
        res[v.label or "beam"] = {
            "seed": s,
            "n_draws": out["n_draws"],
            "n_cells": k.n_cells,
            "p0": [float(est.p_n.value[0]), float(est.p_n.stderr[0]), float(law.probs[0])],
            "p1": [float(est.p_n.value[1]), float(est.p_n.stderr[1]), float(law.probs[1])],
            "mean": [float(est.mean.value), float(est.mean.stderr), float(k.expected_counts().sum())],
            "max_abs_z_g2": float(np.max(np.abs(est.g2.z(g2a)))),
            "train_hash": hashlib.sha256(
                (batch.times.tobytes() + batch.detectors.tobytes() + batch.offsets.tobytes())
            ).hexdigest(),
        }
    return {"files": "sample*_g2.csv, sample*_waiting.csv", "beams": res,
            "columns": "p0/p1/mean = [empirical, stderr, analytic]"}


def _run_truncation(doc, out, variants, outdir, stats, pool):
    a, b = _window(doc, out)
    ell = b - a
    f = out.get("f", 1.0)
    rows = []
    for v in variants:
        state, dil = v.state, v.dil
        x = _detector(out, dil)
        if state.space.n_nodes == 1:
            # a sharp line cannot be time-windowed; use a narrow line of the same rate
            width = out.get("line_width", 0.2 / ell)
            state, dil = gaussian_line(v.kappa, float(state.space.nodes[0]), width, np.pi / (4 * max(out["T"]) + 1e-300),
                                       statistics=stats)
        F = assemble_effect(state.space, dil, (a, b), x, check_resolution=False)
        c_inf = characteristic_function(state.source(dil, stats), [F], [f])
        for T in out["T"]:
            c_T = characteristic_function(finite_beam_truncation(state, T, dil, stats), [F], [f])
            rows.append((T, abs(c_T - c_inf)))
    _write_csv(outdir / "truncation.csv", ["T", "gap"], rows)
    return {"file": "truncation.csv", "final_gap": float(rows[-1][1])}


RUNNERS = {
    "g2": _run_g2,
    "numberdist": _run_numberdist,
    "waiting": _run_waiting,
    "compare_truncation": _run_truncation,
}


def run(doc: dict, outdir, *, base=".", seed: int | None = None, threads: int = 1) -> dict:
    """Run a validated scenario; returns the summary written to ``summary.json``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stats: Statistics = as_statistics(doc["statistics"])
    seed = doc.get("seed", 0) if seed is None else seed
    variants = build_variants(doc, Path(base))
    results = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for out in doc["outputs"]:
            kind = out["type"]
            if kind == "sample":
                r = _run_sample(doc, out, variants, outdir, stats, pool, seed)
            else:
                r = RUNNERS[kind](doc, out, variants, outdir, stats, pool)
            results.append({"type": kind, **r})
    summary = {
        "scenario": doc.get("name", ""),
        "scenario_hash": scenario_hash(doc),
        "statistics": stats.name,
        "seed": seed,
        "beams": [
            {"label": v.label or "beam", "rate": v.state.rate, "lambda": None if v.spec is None else v.spec.lam}
            for v in variants
        ],
        "outputs": results,
    }
    with open(outdir / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def backend() -> str:
    return _kernels.active_backend()
