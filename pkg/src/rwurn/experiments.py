"""Seeded experiment runners behind the command line.

Replicates are processed in fixed-size blocks.  Block ``b`` draws from the
streams keyed ``(seed, b, stream_id)``, blocks may run on any worker, and their
partial results are merged in block order, so every output is a function of
the configuration alone.
"""

from __future__ import annotations

import copy
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from typing import Callable, Optional

import numpy as np
from scipy import stats

from . import __version__
from . import analysis, batch, brw, trees, urns
from .errors import ConfigError, NodeCapExceeded
from .measures import AtomicMeasure, fourier, measure_from_json
from .offsets import PairedOffset, find_cf_domain, law_from_json
from .rng import Stream, stream

EXPERIMENTS = ("urn", "tree", "moments", "normality", "gem", "coupling", "initial-drift")
SUBCOMMAND_EXPERIMENTS = {
    "simulate": ("urn", "tree"),
    "moments": ("moments",),
    "normality": ("normality",),
    "gem": ("gem",),
    "coupling": ("coupling",),
    "drift": ("initial-drift",),
}
DEFAULT_BLOCK = 1000


# ----------------------------------------------------------------------------
# configuration


def load_schema() -> dict:
    with resources.files("rwurn").joinpath("schemas/run_config.schema.json").open() as fh:
        return json.load(fh)


def normalize_config(cfg: dict) -> dict:
    """Accept the bare urn descriptor and manifests; returns a fresh dict."""
    if not isinstance(cfg, dict):
        raise ConfigError("a configuration must be a JSON object")
    if "config" in cfg and "outputs" in cfg and "config_sha256" in cfg:
        cfg = cfg["config"]
    cfg = copy.deepcopy(cfg)
    if "experiment" not in cfg and "urn" in cfg:
        cfg["experiment"] = "urn"
    if "master_seed" in cfg and "seed" not in cfg:
        cfg["seed"] = cfg.pop("master_seed")
    return cfg


def schema_errors(cfg: dict) -> list:
    import jsonschema

    validator = jsonschema.Draft202012Validator(load_schema())
    out = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: (list(e.absolute_path), e.message)):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def check_config(cfg: dict) -> dict:
    cfg = normalize_config(cfg)
    errs = schema_errors(cfg)
    if errs:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(errs))
    return cfg


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _offset(cfg):
    if "offset" not in cfg:
        raise ConfigError("this experiment needs an 'offset'")
    return law_from_json(cfg["offset"])


def _model(cfg) -> dict:
    m = dict(cfg.get("model", {}))
    m.setdefault("rho", 1.0)
    return m


def _points(values, dim):
    out = []
    for v in values:
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        if arr.shape != (dim,):
            raise ConfigError(f"frequency {v!r} does not have dimension {dim}")
        out.append(arr)
    return out


def _label(p) -> str:
    return " ".join(repr(float(x)) for x in np.atleast_1d(p))


# ----------------------------------------------------------------------------
# block scheduling


def _blocks(total: int, size: int):
    return [(b, min(size, total - b * size)) for b in range((total + size - 1) // size)]


def map_blocks(fn: Callable, cfg: dict, total: int, workers: int = 1) -> list:
    """``[fn(cfg, b, count) for each block]`` in block order, possibly in parallel."""
    blocks = _blocks(total, int(cfg.get("block", DEFAULT_BLOCK)))
    if workers <= 1 or len(blocks) <= 1:
        return [fn(cfg, b, c) for b, c in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(fn, cfg, b, c) for b, c in blocks]
        return [f.result() for f in futs]


# ----------------------------------------------------------------------------
# moments


def _moment_plan(cfg):
    law = _offset(cfg)
    model = _model(cfg)
    kind = model.get("kind")
    if kind == "bst":
        raise ConfigError("moment oracles exist for yule, wrrt and binary_yule trees only")
    binary = kind == "binary_yule"
    if binary != isinstance(law, PairedOffset):
        raise ConfigError("binary_yule needs a paired offset and the other kinds a single offset")
    if binary and float(model.get("rho", 1.0)) != 1.0:
        raise ConfigError("binary Yule trees have root weight 1")
    if kind == "wrrt":
        times = [int(n) for n in _list(model["n"])]
        mode = "discrete"
    else:
        times = [float(t) for t in _list(model["t"])]
        mode = "binary" if binary else "continuous"
    oracle = analysis.MomentOracle(law, float(model["rho"]), mode)
    singles = _points(cfg.get("s", []), law.dim)
    pairs = [tuple(_points(p, law.dim)) for p in cfg.get("pairs", [])]
    which = cfg.get("moments", ["first"] + (["second"] if pairs else []))
    grid = singles + [x for p in pairs for x in p]
    return law, model, kind, times, oracle, singles, pairs, which, grid


def _moments_block(cfg, b, count):
    law, model, kind, times, oracle, singles, pairs, which, grid = _moment_plan(cfg)
    seed = int(cfg["seed"])
    rt, ro = stream(seed, b, Stream.TREE), stream(seed, b, Stream.OFFSET)
    cap = int(cfg.get("node_cap", trees.DEFAULT_NODE_CAP))
    s = np.array(grid).reshape(len(grid), law.dim)
    if kind == "wrrt":
        F = batch.wrrt_cf(count, times, float(model["rho"]), law, s, rt, ro)
    elif kind == "yule":
        F = batch.yule_cf(count, times, float(model["rho"]), law, s, rt, ro, cap)
    else:
        F = batch.binary_yule_external_cf(count, times, law, s, rt, ro, cap)
    stimes = sorted(times)  # the batch engines return checkpoints in sorted order
    out = {}
    for ti, t in enumerate(stimes):
        for si, p in enumerate(singles):
            if "first" in which:
                out[("F", ti, si)] = analysis.Moments.of(F[:, ti, si])
            if "martingale" in which:
                out[("M", ti, si)] = analysis.Moments.of(F[:, ti, si] / oracle.mean(t, p))
        base = len(singles)
        for pi in range(len(pairs)):
            if "second" in which:
                prod = F[:, ti, base + 2 * pi] * F[:, ti, base + 2 * pi + 1]
                out[("FF", ti, pi)] = analysis.Moments.of(prod)
    return out


def run_moments(cfg: dict, workers: int = 1) -> list:
    law, model, kind, times, oracle, singles, pairs, which, grid = _moment_plan(cfg)
    if not grid:
        raise ConfigError("give frequencies in 's' or 'pairs'")
    parts = map_blocks(_moments_block, cfg, int(cfg.get("replicates", 1)), workers)
    total = {}
    for part in parts:
        for key, mom in part.items():
            total[key] = total[key].merge(mom) if key in total else mom
    rows = []
    label = {"wrrt": "wrrt", "yule": "yule", "binary_yule": "binary_yule_ext"}[kind]
    for ti, t in enumerate(sorted(times)):
        for si, p in enumerate(singles):
            if "first" in which:
                cmp = total[("F", ti, si)].compare(oracle.mean(t, p))
                rows.append(analysis.comparison_row(f"{label}:F", t, _label(p), cmp))
            if "martingale" in which:
                cmp = total[("M", ti, si)].compare(1.0)
                rows.append(analysis.comparison_row(f"{label}:M", t, _label(p), cmp))
        if "second" in which:
            for pi, (p1, p2) in enumerate(pairs):
                cmp = total[("FF", ti, pi)].compare(oracle.second(t, p1, p2))
                rows.append(analysis.comparison_row(f"{label}:FF", t, f"{_label(p1)} | {_label(p2)}", cmp))
    return rows


# ----------------------------------------------------------------------------
# trees with labels


def grow_labelled(kind: str, rho: float, size, law, seed: int, unit: int,
                  node_cap: int = trees.DEFAULT_NODE_CAP) -> brw.LabelledTree:
    """One labelled tree; ``size`` is ``n`` for wrrt/bst and ``t`` for Yule kinds."""
    rt, ro = stream(seed, unit, Stream.TREE), stream(seed, unit, Stream.OFFSET)
    if kind == "wrrt":
        tree = trees.grow_wrrt(int(size), rho, rt)
    elif kind == "yule":
        tree = trees.grow_yule(rho, rt, until_time=float(size), node_cap=node_cap)[0]
    elif kind == "bst":
        tree = trees.grow_bst(int(size), rt)
    elif kind == "binary_yule":
        tree = trees.grow_binary_yule(rt, until_time=float(size), node_cap=node_cap)[0]
    else:
        raise ConfigError(f"unknown tree kind {kind!r}")
    if law is None:
        return brw.LabelledTree(tree, np.zeros((tree.size, 1)), np.zeros((tree.size, 1)))
    if tree.is_binary:
        if not isinstance(law, PairedOffset):
            raise ConfigError("binary trees need a paired offset")
        return brw.assign_labels_binary(tree, law, ro)
    if isinstance(law, PairedOffset):
        raise ConfigError("paired offsets need a binary tree kind")
    return brw.assign_labels(tree, law, ro)


NORMALITY_COLUMNS = ("kind", "n_or_t", "u", "mode", "which", "ks", "sample_size", "a", "b",
                     "variance", "sample_var", "unit")


def _normality_sizes(model):
    kind = model["kind"]
    key = "n" if kind in ("wrrt", "bst") else "t"
    if key not in model:
        raise ConfigError(f"{kind} trees need model.{key}")
    return kind, key, _list(model[key])


def _normality_block(cfg, b, count):
    law = _offset(cfg)
    model = _model(cfg)
    kind, key, sizes = _normality_sizes(model)
    seed = int(cfg["seed"])
    reps = int(cfg.get("replicates", 1))
    direction = cfg.get("direction")
    which = cfg.get("which", "internal" if kind == "bst" else "all")
    scaling = cfg.get("scaling", "log" if key == "n" else "time")
    if isinstance(scaling, list):
        scaling = tuple(scaling)
    sigma2 = cfg.get("sigma2")
    annealed = bool(cfg.get("annealed", False))
    cap = int(cfg.get("node_cap", trees.DEFAULT_NODE_CAP))
    rows = []
    block = int(cfg.get("block", DEFAULT_BLOCK))
    for j in range(count):
        r = b * block + j
        for si, size in enumerate(sizes):
            unit = si * reps + r
            lt = grow_labelled(kind, float(model["rho"]), size, law, seed, unit, cap)
            if annealed:
                pick = stream(seed, unit, Stream.AUX)
                v = brw.random_node(lt, pick, which)
                rows.append((si, r, float(lt.labels[v] @ _dir(direction, lt.dim))))
                continue
            rep = analysis.normality_report(lt, law, direction, scaling, which, sizes=[size], sigma2=sigma2)
            rows.append((si, r, rep.rows[0]))
    return rows


def _dir(direction, dim):
    return np.ones(1) if direction is None else np.asarray(direction, dtype=float).reshape(dim)


def run_normality(cfg: dict, workers: int = 1) -> list:
    law = _offset(cfg)
    model = _model(cfg)
    kind, key, sizes = _normality_sizes(model)
    which = cfg.get("which", "internal" if kind == "bst" else "all")
    reps = int(cfg.get("replicates", 1))
    parts = map_blocks(_normality_block, cfg, reps, workers)
    items = [x for part in parts for x in part]
    rows = []
    if cfg.get("annealed", False):
        scaling = cfg.get("scaling", "log" if key == "n" else "time")
        u = _dir(cfg.get("direction"), law.dim)
        var = float(u @ law.second_moment @ u) if cfg.get("sigma2") is None else float(cfg["sigma2"])
        if not var > 0:
            raise analysis.DomainError("u' Sigma u = 0: the offsets are a.s. orthogonal to the direction")
        for si, size in enumerate(sizes):
            vals = np.array([v for s_, r, v in sorted(items) if s_ == si])
            a, bb = analysis._scaling(tuple(scaling) if isinstance(scaling, list) else scaling,
                                      size, float(u @ law.mean))
            z = (vals - bb) / a
            ks = analysis.ks_statistic(z, lambda x: stats.norm.cdf(x, scale=math.sqrt(var)))
            rows.append({"kind": kind, "n_or_t": size, "u": _label(u), "mode": "annealed", "which": which,
                         "ks": ks, "sample_size": len(vals), "a": a, "b": bb, "variance": var,
                         "sample_var": float(z.var(ddof=1)) if len(z) > 1 else 0.0, "unit": ""})
        return rows
    for si, r, row in sorted(items, key=lambda x: (x[0], x[1])):
        rows.append({"kind": kind, "n_or_t": sizes[si], "u": _label(row.direction), "mode": "quenched",
                     "which": which, "ks": row.ks, "sample_size": row.sample_size, "a": row.a, "b": row.b,
                     "variance": row.variance, "sample_var": row.sample_var, "unit": si * reps + r})
    for si, size in enumerate(sizes):
        ks = [row.ks for s_, r, row in items if s_ == si]
        rows.append({"kind": kind, "n_or_t": size, "u": rows[0]["u"], "mode": "median", "which": which,
                     "ks": float(np.median(ks)), "sample_size": len(ks), "a": "", "b": "",
                     "variance": "", "sample_var": "", "unit": ""})
    return rows


def normality_from_file(path: str, cfg: dict) -> list:
    """Quenched report for a tree stored as JSON lines (labels taken from the file,
    or drawn from ``cfg['offset']`` with the configured seed if absent)."""
    with open(path) as fh:
        tree, labels = trees.read_tree_jsonl(fh)
    law = _offset(cfg)
    if labels is None:
        ro = stream(int(cfg["seed"]), 0, Stream.OFFSET)
        lt = brw.assign_labels_binary(tree, law, ro) if tree.is_binary else brw.assign_labels(tree, law, ro)
    else:
        lt = brw.LabelledTree(tree, labels, np.zeros_like(labels))
    which = cfg.get("which", "internal" if tree.kind == "bst" else "all")
    scaling = cfg.get("scaling", "time" if tree.kind in ("yule", "binary_yule") else "log")
    if isinstance(scaling, list):
        scaling = tuple(scaling)
    rep = analysis.normality_report(lt, law, cfg.get("direction"), scaling, which, sigma2=cfg.get("sigma2"))
    row = rep.rows[0]
    return [{"kind": tree.kind, "n_or_t": row.size, "u": _label(row.direction), "mode": "quenched",
             "which": which, "ks": row.ks, "sample_size": row.sample_size, "a": row.a, "b": row.b,
             "variance": row.variance, "sample_var": row.sample_var, "unit": ""}]


# ----------------------------------------------------------------------------
# GEM / branch fractions


GEM_COLUMNS = ("kind", "rho", "n", "replicates", "estimate", "target", "se", "z", "ks")


def _gem_block(cfg, b, count):
    model = _model(cfg)
    rho, n = float(model["rho"]), int(model["n"])
    seed = int(cfg["seed"])
    block = int(cfg.get("block", DEFAULT_BLOCK))
    first = np.empty(count)
    v1 = np.empty(count)
    for j in range(count):
        unit = b * block + j
        tree = trees.grow_wrrt(n, rho, stream(seed, unit, Stream.TREE))
        first[j] = trees.branch_fractions(tree).fractions[0]
        v1[j] = trees.sample_gem(rho, 1, stream(seed, unit, Stream.AUX))[0]
    return first, v1


def run_gem(cfg: dict, workers: int = 1) -> list:
    model = _model(cfg)
    rho, n = float(model["rho"]), int(model["n"])
    parts = map_blocks(_gem_block, cfg, int(cfg.get("replicates", 1)), workers)
    first = np.concatenate([p[0] for p in parts])
    v1 = np.concatenate([p[1] for p in parts])
    target = 1.0 / (1.0 + rho)
    cdf = lambda x: stats.beta.cdf(x, 1.0, rho)  # noqa: E731
    rows = []
    for kind, x in (("first_branch_fraction", first), ("gem_first_stick", v1)):
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
        z = analysis._z(float(x.mean()) - target, se)
        rows.append({"kind": kind, "rho": rho, "n": n if kind.startswith("first") else "",
                     "replicates": int(x.size), "estimate": float(x.mean()), "target": target,
                     "se": se, "z": z, "ks": analysis.ks_statistic(x, cdf)})
    return rows


# ----------------------------------------------------------------------------
# embedding coupling


COUPLING_COLUMNS = ("kind", "n", "statistic", "replicates", "chi2", "dof", "p")


def _coupling_block(cfg, b, count):
    model = _model(cfg)
    rho, n = float(model["rho"]), int(model["n"])
    seed = int(cfg["seed"])
    block = int(cfg.get("block", DEFAULT_BLOCK))
    out = np.empty((count, 4), dtype=np.int64)
    for j in range(count):
        unit = b * block + j
        yule = trees.grow_yule(rho, stream(seed, unit, Stream.TREE), until_size=n)[0]
        wrrt = trees.grow_wrrt(n, rho, stream(seed, unit, Stream.PICK))
        out[j, 0] = np.count_nonzero(yule.parent == 0)
        out[j, 1] = np.count_nonzero(wrrt.parent == 0)
        by = trees.grow_binary_yule(stream(seed, unit, Stream.INITIAL), until_deaths=n)[0]
        bst = trees.grow_bst(n, stream(seed, unit, Stream.OFFSET))
        pick = stream(seed, unit, Stream.AUX)
        for col, t in ((2, by), (3, bst)):
            ext = np.flatnonzero(t.status == trees.EXTERNAL)
            v = ext[min(int(pick.random() * ext.size), ext.size - 1)]
            out[j, col] = trees.depths(t)[v]
    return out


def run_coupling(cfg: dict, workers: int = 1) -> list:
    n = int(_model(cfg)["n"])
    stats_ = np.concatenate(map_blocks(_coupling_block, cfg, int(cfg.get("replicates", 1)), workers))
    rows = []
    for kind, stat, a, b in (("yule_at_tau_vs_wrrt", "root_degree", 0, 1),
                             ("binary_yule_at_death_vs_bst", "random_external_depth", 2, 3)):
        chi2, dof, p = analysis.two_sample_chi2(stats_[:, a], stats_[:, b])
        rows.append({"kind": kind, "n": n, "statistic": stat, "replicates": stats_.shape[0],
                     "chi2": chi2, "dof": dof, "p": p})
    return rows


# ----------------------------------------------------------------------------
# initial-condition drift


DRIFT_COLUMNS = ("n", "s_n", "median_gap", "mean_gap", "se", "pairs")


def _drift_setup(cfg):
    law = _offset(cfg)
    if "mu0" not in cfg or "mu0_b" not in cfg:
        raise ConfigError("the drift experiment needs 'mu0' and 'mu0_b'")
    a, b = measure_from_json(cfg["mu0"]), measure_from_json(cfg["mu0_b"])
    if not isinstance(a, AtomicMeasure) or not isinstance(b, AtomicMeasure):
        raise ConfigError("drift initial compositions must be atomic")
    return law, a, b, [int(n) for n in cfg["n_grid"]], float(_list(cfg.get("s", [0.3]))[0])


def _drift_block(cfg, b, count):
    law, mu_a, mu_b, n_grid, s = _drift_setup(cfg)
    block = int(cfg.get("block", DEFAULT_BLOCK))
    units = range(b * block, b * block + count)
    return urns.drift_gaps(mu_a, mu_b, law, n_grid, s, units, int(cfg["seed"]), bool(cfg.get("coupled", True)))


def run_drift(cfg: dict, workers: int = 1) -> list:
    law, mu_a, mu_b, n_grid, s = _drift_setup(cfg)
    gaps = np.concatenate(map_blocks(_drift_block, cfg, int(cfg.get("replicates", 1)), workers))
    return [{"n": r.n, "s_n": r.s, "median_gap": r.median_gap, "mean_gap": r.mean_gap, "se": r.se,
             "pairs": gaps.shape[0]} for r in urns.summarize_drift(n_grid, s, gaps)]


# ----------------------------------------------------------------------------
# simulate: urns and trees


URN_COLUMNS = ("replicate", "urn", "steps", "mass", "s", "cf_re", "cf_im")
TREE_COLUMNS = ("replicate", "kind", "size", "n", "total_weight", "max_depth", "label_mean")


def _record_freqs(record, dim):
    out = []
    for item in record:
        if item.startswith("cf:s="):
            out.append(_points([json.loads("[" + item[5:] + "]") if dim > 1 else float(item[5:])], dim)[0])
        elif item not in ("mass", "trace"):
            raise ConfigError(f"unknown record item {item!r}")
    return out


def _urn_block(cfg, b, count):
    law = _offset(cfg)
    mu0 = measure_from_json(cfg["mu0"])
    steps = int(cfg["steps"])
    seed = int(cfg["seed"])
    record = cfg.get("record", ["mass"])
    freqs = _record_freqs(record, law.dim)
    block = int(cfg.get("block", DEFAULT_BLOCK))
    results = []
    for j in range(count):
        unit = b * block + j
        pick, off, init = (stream(seed, unit, Stream.PICK), stream(seed, unit, Stream.OFFSET),
                           stream(seed, unit, Stream.INITIAL))
        if cfg["urn"] == "srw":
            if not isinstance(mu0, AtomicMeasure):
                raise ConfigError("the SRW urn needs an atomic initial composition")
            tr = urns.run_srw(mu0, law, steps, pick, off)
            comp = tr.state.composition
            mass = comp.total_mass
            cfs = [complex(fourier(comp, s)) for s in freqs]
            trace = comp if unit == 0 and "trace" in record else None
        else:
            tr = urns.run_drw(mu0, law, steps, pick, off, init)
            mass = tr.state.total_mass
            cfs = [complex(tr.fourier_at(steps, s)) for s in freqs]
            trace = tr.composition if unit == 0 and "trace" in record else None
        results.append((unit, mass, cfs, trace))
    return results


def run_urn(cfg: dict, workers: int = 1):
    law = _offset(cfg)
    freqs = _record_freqs(cfg.get("record", ["mass"]), law.dim)
    parts = map_blocks(_urn_block, cfg, int(cfg.get("replicates", 1)), workers)
    rows, trace = [], None
    for unit, mass, cfs, tr in (x for p in parts for x in p):
        if tr is not None:
            trace = tr
        if not freqs:
            rows.append({"replicate": unit, "urn": cfg["urn"], "steps": cfg["steps"], "mass": mass,
                         "s": "", "cf_re": "", "cf_im": ""})
        for s, c in zip(freqs, cfs):
            rows.append({"replicate": unit, "urn": cfg["urn"], "steps": cfg["steps"], "mass": mass,
                         "s": _label(s), "cf_re": c.real, "cf_im": c.imag})
    return rows, trace


def run_tree(cfg: dict, workers: int = 1):
    model = _model(cfg)
    kind = model["kind"]
    size = model["n"] if kind in ("wrrt", "bst") else model["t"]
    law = law_from_json(cfg["offset"]) if "offset" in cfg else None
    reps = int(cfg.get("replicates", 1))
    seed = int(cfg["seed"])
    cap = int(cfg.get("node_cap", trees.DEFAULT_NODE_CAP))
    rows, first = [], None
    for r in range(reps):
        lt = grow_labelled(kind, float(model["rho"]), size, law, seed, r, cap)
        if r == 0:
            first = lt
        rows.append({"replicate": r, "kind": kind, "size": lt.tree.size, "n": lt.tree.n,
                     "total_weight": lt.tree.total_weight, "max_depth": int(trees.depths(lt.tree).max()),
                     "label_mean": _label(lt.labels.mean(axis=0)) if law is not None else ""})
    return rows, first


# ----------------------------------------------------------------------------
# top level


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    analysis.write_csv(rows, buf, columns)
    return buf.getvalue()


def execute(cfg: dict, workers: int = 1) -> dict:
    """Run a validated configuration; returns ``{filename: text}``."""
    exp = cfg["experiment"]
    if exp == "moments":
        return {"moments.csv": _csv_text(run_moments(cfg, workers), analysis.CSV_COLUMNS)}
    if exp == "normality":
        if cfg.get("tree_file"):
            rows = normality_from_file(cfg["tree_file"], cfg)
        else:
            rows = run_normality(cfg, workers)
        return {"normality.csv": _csv_text(rows, NORMALITY_COLUMNS)}
    if exp == "gem":
        return {"gem.csv": _csv_text(run_gem(cfg, workers), GEM_COLUMNS)}
    if exp == "coupling":
        return {"coupling.csv": _csv_text(run_coupling(cfg, workers), COUPLING_COLUMNS)}
    if exp == "initial-drift":
        return {"drift.csv": _csv_text(run_drift(cfg, workers), DRIFT_COLUMNS)}
    if exp == "urn":
        rows, trace = run_urn(cfg, workers)
        out = {"urn.csv": _csv_text(rows, URN_COLUMNS)}
        if trace is not None:
            from .measures import measure_to_json
            out["urn_trace.json"] = canonical_json(measure_to_json(trace)) + "\n"
        return out
    if exp == "tree":
        rows, lt = run_tree(cfg, workers)
        buf = io.StringIO()
        trees.write_tree_jsonl(lt.tree, buf, lt.labels if "offset" in cfg else None)
        return {"tree.csv": _csv_text(rows, TREE_COLUMNS), "tree_0.jsonl": buf.getvalue()}
    raise ConfigError(f"unknown experiment {exp!r}")


def manifest(cfg: dict, outputs: dict) -> dict:
    body = {k: v for k, v in cfg.items() if k != "workers"}
    return {"config": body, "config_sha256": sha256_text(canonical_json(body)), "seed": cfg["seed"],
            "version": __version__,
            "outputs": {name: sha256_text(text) for name, text in sorted(outputs.items())}}


def run(cfg: dict, out_dir: str, workers: int = 1) -> dict:
    cfg = check_config(cfg)
    outputs = execute(cfg, workers)
    os.makedirs(out_dir, exist_ok=True)
    for name, text in outputs.items():
        with open(os.path.join(out_dir, name), "w", newline="") as fh:
            fh.write(text)
    man = manifest(cfg, outputs)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return man


# ----------------------------------------------------------------------------
# validation diagnostics


def validate(cfg) -> list:
    """Human-readable diagnostics; never raises for a bad configuration."""
    msgs = []
    try:
        cfg = normalize_config(cfg)
    except ConfigError as exc:
        return [f"error: {exc}"]
    for e in schema_errors(cfg):
        msgs.append(f"error: schema: {e}")
    if msgs:
        return msgs
    model = cfg.get("model", {})
    try:
        law = law_from_json(cfg["offset"]) if "offset" in cfg else None
    except ConfigError as exc:
        return [f"error: {exc}"]
    freqs = list(cfg.get("s", [])) + [x for p in cfg.get("pairs", []) for x in p]
    if law is not None and freqs and getattr(law, "has_cf", True):
        for v in freqs:
            arr = np.atleast_1d(np.asarray(v, dtype=float))
            norm = float(np.linalg.norm(arr))
            if norm == 0:
                continue
            dom = find_cf_domain(law, arr if law.dim > 1 else None)
            if norm > dom.delta:
                msgs.append(f"warning: s={_label(arr)} lies outside the CF domain J: |s| = {norm:.4g} > "
                            f"delta = {dom.delta:.6g} (Re phi >= 3/4 fails beyond delta)")
    cap = int(cfg.get("node_cap", trees.DEFAULT_NODE_CAP))
    if model.get("kind") in ("yule", "binary_yule") and "t" in model:
        rho = float(model.get("rho", 1.0))
        for t in _list(model["t"]):
            nodes = (rho if model["kind"] == "yule" else 2.0) * math.exp(float(t))
            if nodes > cap:
                msgs.append(f"warning: t={t}: expected nodes ~ {nodes:.3g} (rho e^t) exceeds the node cap {cap}")
    return msgs or ["ok"]
