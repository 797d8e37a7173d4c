"""Verification runs, parameter sweeps and plot-data emission."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import __version__
from .. import bounds as B
from ..estimators import density as D
from ..estimators import transport as T
from ..rng import Stream
from ..sources import source_from_spec
from ..stats import estimate_stats
from .checks import REGISTRY, UnitContext, VerificationRow
from .config import ConfigError

EXIT_OK, EXIT_VIOLATION, EXIT_MARGINAL, EXIT_CONFIG = 0, 1, 2, 64
JOBS_ENV = "PROJCLT_JOBS"

CSV_FIELDS = ["check", "variant", "source", "n", "k", "t", "epsilon", "relation", "lhs", "lhs_se", "rhs", "rhs_log",
              "se", "margin", "verdict", "seed_path"]


@dataclass(frozen=True)
class Unit:
    index: int
    check: str
    source_name: str
    source_spec: Optional[dict]
    point: dict


def _grid_points(grid: dict):
    for n, k, t, eps in itertools.product(grid["n"], grid["k"], grid["t"], grid["epsilon"]):
        yield {"n": int(n), "k": int(k), "t": float(t), "epsilon": float(eps)}


def build_units(cfg: dict) -> list[Unit]:
    """All work units in config order; the position fixes each unit's seed path."""
    units: list[Unit] = []
    for entry in cfg["checks"]:
        name = entry if isinstance(entry, str) else entry["name"]
        check = REGISTRY[name]
        names = list(cfg["sources"]) if isinstance(entry, str) or "sources" not in entry else entry["sources"]
        if check.scope == "global":
            units.append(Unit(len(units), name, "-", None, {}))
        elif check.scope == "series":
            g = cfg["grid"]
            for s in names:
                for k, t in itertools.product(g["k"], g["t"]):
                    units.append(Unit(len(units), name, s, cfg["sources"][s],
                                      {"k": int(k), "t": float(t), "n_series": [int(n) for n in g["n"]]}))
        else:
            for s in names:
                for pt in _grid_points(cfg["grid"]):
                    units.append(Unit(len(units), name, s, cfg["sources"][s], pt))
    return units


def _context(unit: Unit, cfg: dict) -> UnitContext:
    return UnitContext(unit.check, unit.source_name, unit.source_spec, dict(unit.point), cfg["budgets"],
                       cfg["constants"], Stream((cfg["root_seed"], unit.index)))


def estimate_runtime(cfg: dict, units: Sequence[Unit], jobs: int = 1) -> float:
    total = 0.0
    for u in units:
        ctx = _context(u, cfg)
        if u.check == "cor1_trend":
            ctx.point.setdefault("n", max(ctx.point["n_series"]))
        total += REGISTRY[u.check].cost(ctx)
    return total / max(1, jobs)


def _run_unit(args) -> tuple[list[dict], Optional[dict]]:
    unit, cfg = args
    ctx = _context(unit, cfg)
    check = REGISTRY[unit.check]
    if check.scope == "point":
        ok, why = check.applicable(ctx)
        if not ok:
            return [], {"check": unit.check, "source": unit.source_name, "params": unit.point, "reason": why}
    rows = check.run(ctx)
    return [r.as_dict() for r in rows], None


def exit_status(rows: Sequence[dict]) -> int:
    verdicts = {r["verdict"] for r in rows}
    if "violated" in verdicts:
        return EXIT_VIOLATION
    if "holds-marginal" in verdicts:
        return EXIT_MARGINAL
    return EXIT_OK


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV)
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ConfigError(f"{JOBS_ENV}={raw!r} is not an integer") from None


def _map_units(units, cfg, jobs):
    work = [(u, cfg) for u in units]
    if jobs <= 1 or len(work) <= 1:
        return [_run_unit(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map keeps submission order, so the merge follows the config
        return list(pool.map(_run_unit, work, chunksize=1))


def run_verify(cfg: dict, jobs: Optional[int] = None, check_budget: bool = True) -> tuple[list[dict], int, dict]:
    """Run every (check, source, grid point) unit; returns (rows, exit status, run metadata)."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    units = build_units(cfg)
    est = estimate_runtime(cfg, units, jobs)
    ceiling = cfg.get("runtime_ceiling_s")
    if check_budget and ceiling is not None and est > ceiling:
        raise ConfigError(f"estimated runtime {est:.0f}s exceeds the configured ceiling {ceiling:.0f}s")
    rows, skipped = [], []
    for unit_rows, skip in _map_units(units, cfg, jobs):
        rows.extend(unit_rows)
        if skip:
            skipped.append(skip)
    meta = {"root_seed": cfg["root_seed"], "units": len(units), "estimated_runtime_s": est, "skipped": skipped,
            "version": __version__}
    return rows, exit_status(rows), meta


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in rows:
        p = r["params"]
        flat = {**r, "n": p.get("n", ""), "k": p.get("k", ""), "t": p.get("t", ""), "epsilon": p.get("epsilon", "")}
        w.writerow([_fmt(flat[f]) for f in CSV_FIELDS])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def write_report(out_dir, cfg: dict, rows: Sequence[dict], status: int, meta: dict) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {v: sum(1 for r in rows if r["verdict"] == v) for v in ("holds", "holds-marginal", "violated")}
    doc = {"config": cfg, "meta": meta, "exit_status": status, "summary": summary, "rows": list(rows)}
    jpath, cpath = out / "report.json", out / "report.csv"
    jpath.write_text(json.dumps(_json_safe(doc), indent=2, sort_keys=True))
    cpath.write_text(rows_to_csv(rows))
    return jpath, cpath


# ---------------------------------------------------------------- sweep

def _sweep_point(args) -> dict:
    index, name, spec, pt, cfg = args
    stream = Stream((cfg["root_seed"], index))
    b, c = cfg["budgets"], cfg["constants"]
    src = source_from_spec(spec, pt["n"])
    st = estimate_stats(src, b["n_samples"], b["n_pairs"], stream.child(90))
    n, k, t, eps = pt["n"], pt["k"], pt["t"], pt["epsilon"]
    row = {"source": name, **pt, "gamma": st.gamma, "alpha": st.alpha, "alpha_se": st.alpha_se,
           "beta1": st.beta1, "beta1_se": st.beta1_se, "beta2": st.beta2, "beta2_se": st.beta2_se,
           "mean_sq_norm_over_n": st.mean_sq_norm_over_n}
    reports = [B.thm1_w2_bound(st.alpha, st.beta1, st.beta2, st.gamma, k, c["thm1"]),
               B.thm2_kl_bound(st.alpha, st.beta1, st.beta2, st.gamma, t, eps, k, c["thm2"]),
               B.cor1_w2_bound(n, k, c["cor1"])]
    if k == 1:
        reports.append(B.thm3_kl_k1_bound(st.alpha, st.beta1, t))
    if src.constant_norm:
        reports.append(B.thm4_kl_sphere_bound(st.mean_sq_norm_over_n, st.beta2, st.gamma, t, k))
        reports.append(B.thm5_w2_sphere_bound(st.mean_sq_norm_over_n, st.beta2, st.gamma, k, c["thm5"])[0])
    for rep in reports:
        row[rep.bound_name] = rep.value
        row[rep.bound_name + "_log"] = rep.log_value
    wanted = cfg.get("sweep", {}).get("estimates", [])
    if "expected_w2" in wanted:
        e = T.expected_w2(src, k, b["reps"], b["m_samples"], stream.child(1))
        row.update(expected_w2=e.value, expected_w2_se=e.se, expected_w2_corrected=e.extras["corrected"],
                   expected_w2_corrected_se=e.extras["corrected_se"])
    if "expected_kl" in wanted:
        e = D.expected_kl(src, t, k, b["reps"], b["n_outer"], b["m_inner"], stream.child(2))
        row.update(expected_kl=e.value, expected_kl_se=e.se)
    return row


def run_sweep(cfg: dict, jobs: Optional[int] = None) -> list[dict]:
    """Long-format table: one row per (source, grid point) with functionals, bounds and estimates."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    work = [(i, name, spec, pt, cfg) for i, ((name, spec), pt) in
            enumerate(itertools.product(cfg["sources"].items(), list(_grid_points(cfg["grid"]))))]
    if jobs <= 1 or len(work) <= 1:
        return [_sweep_point(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_point, work, chunksize=1))


def write_table(path, rows: Sequence[dict]) -> Path:
    cols: list[str] = []
    for r in rows:
        for key in r:
            if key not in cols:
                cols.append(key)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])
    return path


def read_table(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- plot data

class PlotSpecError(KeyError):
    def __str__(self):
        return str(self.args[0])


def emit_plotdata(table: Sequence[dict], x: str, y: str, out_path, y_err: Optional[str] = None,
                  log_scale: bool = False, where: Optional[dict] = None) -> Path:
    """Write an (x, y, y_err) CSV series from sweep rows.

    With ``log_scale`` and a ``<y>_log`` column present, the log column is
    emitted whenever the linear values overflow.
    """
    rows = [r for r in table if all(str(r.get(k)) == str(v) for k, v in (where or {}).items())]
    available = list(table[0].keys()) if table else []
    for col in (x, y) + ((y_err,) if y_err else ()):
        if col not in available:
            raise PlotSpecError(f"unknown column {col!r}; available columns: {', '.join(available)}")
    y_col = y
    if log_scale and f"{y}_log" in available:
        vals = [float(r[y]) for r in rows if r[y] != ""]
        if any(not math.isfinite(v) or v > 1e300 for v in vals):
            y_col = f"{y}_log"
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x, y_col, y_err or "y_err"])
        for r in rows:
            w.writerow([r[x], r[y_col], r[y_err] if y_err else 0.0])
    return out
