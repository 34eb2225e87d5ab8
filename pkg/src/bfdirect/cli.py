"""Command-line scenario runner: ``solve``, ``sweep`` and ``verify``."""

import argparse
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
import csv
from dataclasses import dataclass, replace
import json
import logging
import math
import resource
import sys
import time

import numpy as np

from .efie import Excitation, ImpedanceKernel, assemble_rhs, rcs
from .factorization import factorize
from .geometry import CurveSpec, build_mesh, discretize, generate_curve
from .oracle import DENSE_CAP, dense_solve, mie_rcs_circle
from .partition import auto_levels, build_tree
from .randomized import SketchConfig
from .zoperator import compress_impedance

# used when a corrugated kind is requested without explicit parameters
DEFAULT_PERIOD = 1.5
DEFAULT_DEPTH = 0.4
logger = logging.getLogger(__name__)

MASK_DB = 40.0
PEAK_GROWTH = 1.5  # observed exponent of peak memory vs N during factorization


@dataclass
class RunConfig:
    geometry: str = "circle"
    radius: float = 5.0
    period: float = None
    depth: float = None
    seg_len: float = 0.05
    levels: object = "auto"
    tol: float = 1e-4
    mode: str = "bistatic"
    incidence_deg: float = 0.0
    angles: tuple = (0.0, 360.0, 361)
    seed: int = 0
    rank_init: int = 8
    out: str = None
    stats: str = None

    def __post_init__(self):
        if not 0 < self.tol < 0.1:
            raise ValueError("tol must lie in (0, 0.1)")
        if self.mode not in ("bistatic", "monostatic"):
            raise ValueError("mode must be bistatic or monostatic")
        if int(self.angles[2]) < 0:
            raise ValueError("angle count must be non-negative")
        if self.rank_init < 1:
            raise ValueError("rank_init must be >= 1")

    def curve_spec(self):
        corrugated = self.geometry.startswith("corrugated")
        period = self.period if self.period is not None else (DEFAULT_PERIOD if corrugated else 0.0)
        depth = self.depth if self.depth is not None else (DEFAULT_DEPTH if corrugated else 0.0)
        return CurveSpec(self.geometry, self.radius, period, depth)

    def angle_grid(self):
        start, stop, count = self.angles
        return np.linspace(float(start), float(stop), int(count))


def parse_angles(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("angles must be start:stop:count")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if count < 0:
        raise argparse.ArgumentTypeError("count must be non-negative")
    return start, stop, count


def parse_levels(text):
    if text == "auto":
        return text
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("levels must be >= 1 or 'auto'")
    return value


# ----------------------------------------------------------------------
# pipeline
# ----------------------------------------------------------------------
@dataclass
class Problem:
    config: RunConfig
    mesh: object
    tree: object
    kernel: object
    zc: object = None
    factored: object = None
    t_assemble: float = 0.0
    t_factor: float = 0.0


def setup(config):
    mesh, corners = build_mesh(config.curve_spec(), config.seg_len)
    n = len(mesh)
    levels = auto_levels(n) if config.levels == "auto" else int(config.levels)
    tree = build_tree(mesh, corners, levels, min_leaf=1)
    return Problem(config, mesh, tree, ImpedanceKernel(mesh))


def assemble_and_factor(prob):
    cfg = prob.config
    t0 = time.perf_counter()
    prob.zc = compress_impedance(prob.kernel, prob.tree, cfg.tol, seed=cfg.seed)
    t1 = time.perf_counter()
    prob.factored = factorize(prob.zc, cfg.tol, SketchConfig(r=cfg.rank_init, seed=cfg.seed))
    t2 = time.perf_counter()
    prob.t_assemble, prob.t_factor = t1 - t0, t2 - t1
    return prob


def base_stats(prob):
    fwd_rank, fwd_storage = prob.zc.rank_stats()
    inv_rank, inv_storage = prob.factored.rank_stats()
    return {
        "geometry": prob.config.geometry,
        "n": int(prob.tree.n),
        "levels": int(prob.tree.levels),
        "tol": prob.config.tol,
        "seed": prob.config.seed,
        "max_rank_fwd": int(fwd_rank),
        "max_rank_inv": int(inv_rank),
        "storage_entries_fwd": int(fwd_storage),
        "storage_entries": int(inv_storage),
        "storage_bytes": int(16 * inv_storage),
        "smw_residual_max": prob.factored.max_smw_residual(),
        "t_assemble_s": prob.t_assemble,
        "t_factor_s": prob.t_factor,
    }


def run_solve(config):
    """Factor once, solve, and return ``(angles_deg, rcs_db, stats)``."""
    prob = assemble_and_factor(setup(config))
    angles = config.angle_grid()
    rad = np.radians(angles)
    t0 = time.perf_counter()
    if config.mode == "bistatic":
        v = assemble_rhs(Excitation(math.radians(config.incidence_deg)), prob.mesh)
        currents = prob.factored.apply_inverse(v)
        n_rhs = 1
    else:
        v = np.stack([assemble_rhs(Excitation(a), prob.mesh) for a in rad], axis=1) \
            if len(rad) else np.zeros((prob.tree.n, 0), complex)
        currents = prob.factored.apply_inverse(v)
        n_rhs = len(rad)
    t_solve = time.perf_counter() - t0
    values = rcs(currents, prob.mesh, rad) if len(rad) else np.zeros(0)
    stats = base_stats(prob)
    stats.update({"mode": config.mode, "n_angles": int(len(angles)), "n_rhs": int(n_rhs),
                  "t_solve_s": t_solve})
    return angles, values, stats


def scaled_size(config, n_target):
    """Geometry size giving roughly ``n_target`` unknowns at the configured mesh density."""
    probe = replace(config, radius=20.0)
    spec = probe.curve_spec()
    length = generate_curve(spec).true_length
    if spec.corrugation_depth > 0:
        length = discretize(generate_curve(spec), config.seg_len)[0].lengths.sum()
    return probe.radius * n_target * config.seg_len / length


def fit_slope(xs, ys):
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    ok = np.isfinite(xs) & np.isfinite(ys) & (xs > 0) & (ys > 0)
    if np.count_nonzero(ok) < 2:
        return float("nan")
    return float(np.polyfit(np.log(xs[ok]), np.log(ys[ok]), 1)[0])


SWEEP_FIELDS = ["n", "t_factor_s", "storage_entries", "max_rank_fwd", "max_rank_inv",
                "peak_rss_mb", "status"]


def _sweep_row(cfg):
    st = base_stats(assemble_and_factor(setup(cfg)))
    st["peak_rss_mb"] = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    return st


def available_memory_mb():
    """``MemAvailable`` from ``/proc/meminfo``, or None where unsupported."""
    try:
        with open("/proc/meminfo", encoding="ascii") as fh:
            for line in fh:
                if line.startswith("MemAvailable:"):
                    return int(line.split()[1]) / 1024.0
    except OSError:
        pass
    return None


def _failed_row(n, status):
    row = dict.fromkeys(SWEEP_FIELDS, float("nan"))
    row.update(n=n, status=status)
    return row


def run_sweep(config, n_list, memory_budget_mb=None):
    """Factor the scaled geometry for each target size; returns ``(rows, summary)``.

    Each size runs in a fresh worker process, so a worker killed for
    running out of memory costs only its own row. A size whose projected
    peak memory (previous peak scaled by ``N**PEAK_GROWTH``) exceeds the
    budget is skipped with status ``MemoryBudget``.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be ascending")
    rows = []
    last = None
    for target in n_list:
        budget = available_memory_mb() if memory_budget_mb is None else memory_budget_mb
        if last is not None and budget is not None:
            projected = last["peak_rss_mb"] * (target / last["n"]) ** PEAK_GROWTH
            if projected > 0.9 * budget:
                logger.warning("skipping N=%d: projected %.0f MB > budget %.0f MB",
                               target, projected, budget)
                rows.append(_failed_row(target, "MemoryBudget"))
                continue
        cfg = replace(config, radius=scaled_size(config, target))
        try:
            with ProcessPoolExecutor(max_workers=1) as pool:
                st = pool.submit(_sweep_row, cfg).result()
        except BrokenProcessPool:
            rows.append(_failed_row(target, "WorkerKilled"))
            continue
        except (MemoryError, RuntimeError, np.linalg.LinAlgError) as exc:
            rows.append(_failed_row(target, type(exc).__name__))
            continue
        row = {k: st[k] for k in SWEEP_FIELDS[:-1]}
        row["status"] = "ok"
        rows.append(row)
        last = row
    ok = [r for r in rows if r["status"] == "ok"]
    ns = [r["n"] for r in ok]
    summary = {
        "geometry": config.geometry,
        "tol": config.tol,
        "seed": config.seed,
        "time_slope": fit_slope(ns, [r["t_factor_s"] for r in ok]),
        "storage_slope": fit_slope(ns, [r["storage_entries"] for r in ok]),
        "rows": len(rows),
        "rows_ok": len(ok),
    }
    return rows, summary


def _mask_delta(a, b, reference):
    if len(reference) == 0:
        return None
    mask = reference >= np.max(reference) - MASK_DB
    return float(np.max(np.abs(a[mask] - b[mask])))


def run_verify(config):
    """Compare the fast solver against the dense solve (and the series for circles)."""
    prob = setup(config)
    if prob.tree.n > DENSE_CAP:
        raise ValueError(f"verify needs N <= {DENSE_CAP} for the dense oracle, got {prob.tree.n}")
    prob = assemble_and_factor(prob)
    phi = math.radians(config.incidence_deg)
    v = assemble_rhs(Excitation(phi), prob.mesh)
    dense = dense_solve(prob.kernel, v)
    fast = prob.factored.apply_inverse(v)
    angles = config.angle_grid()
    rad = np.radians(angles)
    current_err = float(np.linalg.norm(fast - dense.currents) / np.linalg.norm(dense.currents))
    report = base_stats(prob)
    report.update({
        "current_rel_error": current_err,
        "dense_residual": dense.residual,
        "condition_estimate": dense.condition_estimate,
        "n_angles": int(len(angles)),
        "rcs_max_delta_db": None,
        "mie_max_delta_db_dense": None,
        "mie_max_delta_db_fast": None,
    })
    if len(rad):
        r_dense = rcs(dense.currents, prob.mesh, rad)
        r_fast = rcs(fast, prob.mesh, rad)
        report["rcs_max_delta_db"] = _mask_delta(r_fast, r_dense, r_dense)
        if config.geometry == "circle":
            mie = mie_rcs_circle(config.radius, rad, incidence_angle=phi)
            report["mie_max_delta_db_dense"] = _mask_delta(r_dense, mie, mie)
            report["mie_max_delta_db_fast"] = _mask_delta(r_fast, mie, mie)
    return report


# ----------------------------------------------------------------------
# output
# ----------------------------------------------------------------------
def write_rcs_csv(path, angles, values):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "rcs_db"])
        for a, v in zip(angles, values):
            w.writerow([f"{a:.12g}", f"{v:.12g}"])


def write_json(path, obj):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_json_default)
    if path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def build_parser():
    p = argparse.ArgumentParser(prog="bfdirect", description="Butterfly direct solver for 2D TM scattering.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--geometry", default="circle",
                        choices=["circle", "smooth_semicircle", "corrugated_semicircle",
                                 "corrugated_corner_reflector", "open_cavity"])
        sp.add_argument("--radius", type=float, default=5.0, help="radius, arm length or aperture width")
        sp.add_argument("--period", type=float, default=None)
        sp.add_argument("--depth", type=float, default=None)
        sp.add_argument("--seg-len", type=float, default=0.05)
        sp.add_argument("--levels", type=parse_levels, default="auto")
        sp.add_argument("--tol", type=float, default=1e-4)
        sp.add_argument("--mode", choices=["bistatic", "monostatic"], default="bistatic")
        sp.add_argument("--incidence-deg", type=float, default=0.0)
        sp.add_argument("--angles", type=parse_angles, default=(0.0, 360.0, 361))
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--rank-init", type=int, default=8)
        sp.add_argument("--out", default=None)
        sp.add_argument("--stats", default=None)
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("solve", help="factor once and compute RCS"))
    sw = sub.add_parser("sweep", help="factorization time and storage versus N")
    common(sw)
    sw.add_argument("--n-list", required=True, help="comma-separated target sizes")
    common(sub.add_parser("verify", help="compare against dense and series references"))
    return p


def config_from_args(args):
    return RunConfig(geometry=args.geometry, radius=args.radius, period=args.period,
                     depth=args.depth, seg_len=args.seg_len, levels=args.levels, tol=args.tol,
                     mode=args.mode, incidence_deg=args.incidence_deg, angles=args.angles,
                     seed=args.seed, rank_init=args.rank_init, out=args.out, stats=args.stats)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG)
    try:
        config = config_from_args(args)
        if args.command == "solve":
            if config.angles[2] < 1:
                raise ValueError("solve needs at least one angle")
            angles, values, stats = run_solve(config)
            if config.out:
                write_rcs_csv(config.out, angles, values)
            else:
                w = csv.writer(sys.stdout)
                w.writerow(["angle_deg", "rcs_db"])
                w.writerows([[f"{a:.12g}", f"{v:.12g}"] for a, v in zip(angles, values)])
            if config.stats:
                write_json(config.stats, stats)
        elif args.command == "sweep":
            rows, summary = run_sweep(config, [int(s) for s in args.n_list.split(",") if s])
            fh = open(config.out, "w", newline="", encoding="utf-8") if config.out else sys.stdout
            w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
            w.writeheader()
            w.writerows(rows)
            if fh is not sys.stdout:
                fh.close()
            write_json(config.stats, summary)
        else:
            write_json(config.out or config.stats, run_verify(config))
    except Exception as exc:  # reported as machine-readable JSON
        print(json.dumps({"error": {"kind": type(exc).__name__, "detail": str(exc)}}))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
