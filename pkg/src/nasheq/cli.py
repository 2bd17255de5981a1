"""Command-line interface.

    nasheq solve --game builtin:cycle2 --alg exact_cd,alg2 --x0 1,1
    nasheq solve --game mygame.json --alg alg4 --multistart 8 --seed 3 \
        --trace-dir traces/ --report report.json

Exit codes: 0 every run converged, 1 at least one run did not, 2 bad
configuration or flags, 3 invalid game description.

Trace CSVs have the columns ``k,x1..xm,res_norm,lambda,diameter,event`` with
floats written via repr, so identical flags and seed reproduce identical
bytes.  The JSON report lists every run plus converged points clustered up
to a tolerance, each cluster carrying an equilibrium certificate checked on
the original game.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import certify_equilibrium
from .games import (
    BUILTIN_NAMES,
    ConvexityError,
    Game,
    GameSpecError,
    builtin_game,
    distance_to_known_equilibrium,
    equilibrium_gap,
    parse_game_spec,
)
from .solvers import ALGORITHMS, SolverConfig, Trace, solve

__all__ = ["RunConfig", "build_parser", "compare", "main", "run"]


@dataclass
class RunConfig:
    """Everything one `nasheq solve` invocation does."""

    game_source: str
    algorithms: list
    x0: list | None = None
    multistart: int = 0
    seed: int = 0
    eps: float = 1e-6
    max_iters: int = 5000
    lambda0: float = 1.0
    radius: float = 0.5
    level: int = 8
    order: int = 1
    set_kind: str = "cube"
    polish: bool = True
    m: int = 5
    coupling: float = 0.25
    cluster_tol: float = 1e-4
    trace_dir: str | None = None
    report_path: str | None = None

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        return cls(
            game_source=ns.game,
            algorithms=[a.strip() for a in ns.alg.split(",") if a.strip()],
            x0=ns.x0,
            multistart=ns.multistart,
            seed=ns.seed,
            eps=ns.eps,
            max_iters=ns.max_iters,
            lambda0=ns.lambda0,
            radius=ns.radius,
            level=ns.level,
            order=ns.order,
            set_kind=ns.set_kind,
            polish=not ns.no_polish,
            m=ns.m,
            coupling=ns.coupling,
            cluster_tol=ns.cluster_tol,
            trace_dir=ns.trace_dir,
            report_path=ns.report,
        )

    def solver_config(self, algorithm: str) -> SolverConfig:
        return SolverConfig(
            algorithm=algorithm,
            eps=self.eps,
            max_iters=self.max_iters,
            lambda0=self.lambda0,
            radius=self.radius,
            quadrature_level=self.level,
            order=self.order,
            set_kind=self.set_kind,
            seed=self.seed,
            polish=self.polish,
        )


def _parse_vector(text: str):
    try:
        return [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nasheq",
        description="Equilibrium solvers for convex m-player games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run one or more solvers on a game")
    p.add_argument("--game", required=True,
                   help=f"builtin:NAME (one of {', '.join(BUILTIN_NAMES)}) or a JSON file path")
    p.add_argument("--alg", default="alg2",
                   help=f"comma-separated solver names from {', '.join(ALGORITHMS)}")
    p.add_argument("--x0", type=_parse_vector, default=None,
                   help="start point as comma-separated numbers (default: all ones)")
    p.add_argument("--multistart", type=int, default=0, metavar="N",
                   help="run from N seeded uniform starts in the box instead of --x0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=1e-6, help="target residual (max-norm)")
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--lambda0", type=float, default=1.0, help="initial walk step")
    p.add_argument("--radius", type=float, default=0.5, help="initial averaging-set radius")
    p.add_argument("--level", type=int, default=8, help="quadrature level per axis")
    p.add_argument("--order", type=int, choices=(1, 2), default=1,
                   help="step/diameter shrink rule order for alg4")
    p.add_argument("--set-kind", choices=("cube", "ball"), default="cube")
    p.add_argument("--no-polish", action="store_true",
                   help="skip exact refinement on the true game after smoothed solvers")
    p.add_argument("--m", type=int, default=5, help="players for builtin:quad-m")
    p.add_argument("--coupling", type=float, default=0.25, help="coupling for builtin:quad-m")
    p.add_argument("--cluster-tol", type=float, default=1e-4,
                   help="distance merging converged points into one reported equilibrium")
    p.add_argument("--trace-dir", default=None, help="write one CSV per run into this directory")
    p.add_argument("--report", default=None, help="write a JSON report to this path")
    return parser


def _load_game(rc: RunConfig) -> Game:
    src = rc.game_source
    if src.startswith("builtin:"):
        return builtin_game(src[len("builtin:"):], m=rc.m, coupling=rc.coupling, seed=rc.seed)
    with open(src) as fh:
        return parse_game_spec(fh.read())


def _starts(rc: RunConfig, game: Game):
    if rc.multistart > 0:
        rng = np.random.default_rng(rc.seed)
        lo, hi = game.box[:, 0], game.box[:, 1]
        return [rng.uniform(lo, hi) for _ in range(rc.multistart)]
    if rc.x0 is not None:
        if len(rc.x0) != game.m:
            raise ValueError(f"--x0 has {len(rc.x0)} entries, game has m={game.m}")
        return [np.asarray(rc.x0, dtype=float)]
    return [np.ones(game.m)]


def compare(game: Game, starts, algorithms, make_cfg) -> list:
    """Run each algorithm from each start; one summary row per run."""
    rows = []
    for alg in algorithms:
        cfg = make_cfg(alg)
        for s_idx, x0 in enumerate(starts):
            trace = solve(game, x0, cfg)
            rows.append({
                "algorithm": alg,
                "start_index": s_idx,
                "x0": [float(v) for v in x0],
                "status": trace.terminal_status,
                "iterations": trace.records[-1].k,
                "final_point": [float(v) for v in trace.final_point],
                "final_gap": float(equilibrium_gap(game, trace.final_point).max()),
                "residual_norm": float(trace.records[-1].residual_norm),
                "trace": trace,
            })
    return rows


def _cluster(points, tol: float):
    """Greedy clustering: a point joins the first center within tol."""
    clusters = []
    for idx, pt in points:
        for cl in clusters:
            if np.linalg.norm(pt - cl["center"]) <= tol:
                cl["members"].append(idx)
                n = len(cl["members"])
                cl["center"] = cl["center"] + (pt - cl["center"]) / n
                break
        else:
            clusters.append({"center": pt.copy(), "members": [idx]})
    return clusters


def run(rc: RunConfig) -> int:
    """Execute a RunConfig; returns the process exit code."""
    for alg in rc.algorithms:
        if alg not in ALGORITHMS:
            print(f"error: unknown algorithm {alg!r}; choose from {', '.join(ALGORITHMS)}",
                  file=sys.stderr)
            return 2
    if not rc.algorithms:
        print("error: no algorithm given", file=sys.stderr)
        return 2
    try:
        game = _load_game(rc)
    except (GameSpecError, ConvexityError, OSError) as exc:
        print(f"error: invalid game: {exc}", file=sys.stderr)
        return 3
    try:
        starts = _starts(rc, game)
        rows = compare(game, starts, rc.algorithms, rc.solver_config)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    name = game.name or rc.game_source
    print(f"game {name} (m={game.m}), {len(starts)} start(s)")
    for row in rows:
        dist = None
        if game.name:
            dist = distance_to_known_equilibrium(game.name, row["final_point"],
                                                 m=rc.m, coupling=rc.coupling, seed=rc.seed)
        dist_txt = f"  dist_to_known={dist:.3e}" if dist is not None else ""
        point_txt = ", ".join(f"{v:.6g}" for v in row["final_point"])
        print(f"  {row['algorithm']:>10s} start {row['start_index']}: "
              f"{row['status']:<14s} iters={row['iterations']:<5d} "
              f"gap={row['final_gap']:.3e}  x=({point_txt}){dist_txt}")

    if rc.trace_dir:
        os.makedirs(rc.trace_dir, exist_ok=True)
        for row in rows:
            fname = f"{row['algorithm']}_start{row['start_index']}.csv"
            row["trace"].to_csv(os.path.join(rc.trace_dir, fname))

    if rc.report_path:
        converged_pts = [(i, np.asarray(row["final_point"]))
                         for i, row in enumerate(rows) if row["status"] == "converged"]
        clusters = []
        for cl in _cluster(converged_pts, rc.cluster_tol):
            report = certify_equilibrium(game, cl["center"], tol=max(rc.eps, 1e-9))
            clusters.append({
                "center": [float(v) for v in cl["center"]],
                "members": cl["members"],
                "count": len(cl["members"]),
                "certificate": report.to_dict(),
            })
        payload = {
            "game": {"source": rc.game_source, "name": game.name, "m": game.m},
            "config": {
                "algorithms": rc.algorithms, "eps": rc.eps, "seed": rc.seed,
                "lambda0": rc.lambda0, "radius": rc.radius, "level": rc.level,
                "order": rc.order, "set_kind": rc.set_kind, "polish": rc.polish,
                "max_iters": rc.max_iters, "multistart": rc.multistart,
            },
            "runs": [{k: v for k, v in row.items() if k != "trace"} for row in rows],
            "equilibria": clusters,
        }
        with open(rc.report_path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    return 0 if all(row["status"] == "converged" for row in rows) else 1


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        rc = RunConfig.from_args(ns)
        return run(rc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
