"""Solver ladder for convex m-player games.

Ordered by increasing machinery: plain Newton on the residual map and exact
per-coordinate minimization are fast but only trustworthy on smooth strongly
monotone problems (elsewhere they cycle, diverge, or stall at kinks);
constant-step coordinate descent with cycle-averaging and coordinate-swap
safeguards trades speed for robustness on the raw game; the smoothed
variants run the same descent on averaged losses and shrink the averaging
set on a schedule tied to the step size; the smoothed Newton solvers drive
the twice-averaged residual map, optionally through a regularized map whose
Jacobian is clipped to the smoothing Lipschitz bound so its quadratic form
is pinched between L_s and 3 L_s.

Every solver returns a Trace whose records live in the original coordinates
even when a solver permutes coordinates internally after divergence.  Record
fields: ``residual_norm`` is the max-norm of the solver's working residual
(true-game subgradient gap for the raw descent solvers, smoothed residuals
for the smoothed ones, the residual map itself for Newton); ``lam`` is the
walk step for descent solvers and the accepted step length for Newton
solvers; ``diameter`` is the current averaging-set diameter (0.0 when
nothing is smoothed).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (
    average_points,
    detect_cycle,
    detect_divergence,
    permute_game,
    permute_point,
    refine_equilibrium,
)
from .games import (
    ConvexityError,
    Game,
    _golden_section,
    best_response_oracle,
    equilibrium_gap,
    residual_vector,
)
from .smoothing import (
    AveragingSet,
    SmoothedGame,
    grad_lipschitz,
    make_quadrature,
    smoothed_residual,
    smoothed_value,
    twice_smoothed_jacobian,
    twice_smoothed_residual,
)

__all__ = [
    "ALGORITHMS",
    "IterationRecord",
    "SingularJacobianError",
    "SolverConfig",
    "Trace",
    "check_step_diameter",
    "coordinated_descent",
    "exact_coordinate_descent",
    "line_search_residual",
    "merit",
    "newton_direction",
    "newton_solve",
    "regularized_map",
    "regularized_newton",
    "safeguarded_descent",
    "smoothed_descent_outer",
    "smoothed_newton",
    "solve",
]


@dataclass
class SolverConfig:
    """Knobs shared by all solvers; each solver reads the subset it needs.

    eps is the target residual (max-norm).  lambda0 seeds the walk step of
    the descent solvers, halved whenever a full sweep accepts no move.
    shrink_rho scales the averaging set down at each shrink event, eps0 and
    gamma define the inner tolerance schedule eps_j = max(eps, eps0 *
    gamma^j) advanced per shrink event, and order selects the step/diameter
    shrink rule (1: step/d <= eps_j, 2: step/d^2 < eps_j; the smoothed
    Newton solvers always use order 2).  d_min is the diameter floor, None
    meaning max(eps, 1e-9).  polish runs exact coordinate-wise refinement on
    the original game after a smoothed solver finishes.
    """

    algorithm: str = "alg2"
    eps: float = 1e-6
    max_iters: int = 5000
    lambda0: float = 1.0
    lambda_floor: float = 1e-12
    shrink_rho: float = 0.5
    eps0: float = 0.1
    gamma: float = 0.9
    order: int = 1
    set_kind: str = "cube"
    radius: float = 0.5
    initial_set: AveragingSet | None = None
    quadrature_level: int = 8
    seed: int = 0
    fd_step_factor: float = 1e-2
    d_min: float | None = None
    polish: bool = True
    divergence_window: int = 6
    max_swaps: int | None = None
    br_grid_n: int = 4001
    allow_nonsmooth_newton: bool = False

    def __post_init__(self):
        if self.eps <= 0 or self.lambda0 <= 0 or self.eps0 <= 0:
            raise ValueError("eps, lambda0, and eps0 must be positive")
        if not 0.0 < self.shrink_rho < 1.0:
            raise ValueError("shrink_rho must be in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.set_kind not in ("cube", "ball"):
            raise ValueError("set_kind must be 'cube' or 'ball'")

    def resolved_d_min(self) -> float:
        return self.d_min if self.d_min is not None else max(self.eps, 1e-9)

    def averaging_set(self, m: int) -> AveragingSet:
        if self.initial_set is not None:
            if self.initial_set.m != m:
                raise ValueError("initial_set dimension does not match the game")
            return self.initial_set
        return AveragingSet(self.set_kind, self.radius, m)


@dataclass
class IterationRecord:
    """One trace row; x is always in original coordinates."""

    k: int
    x: np.ndarray
    residual: np.ndarray
    residual_norm: float
    lam: float
    diameter: float
    event: str = "none"


@dataclass
class Trace:
    """Iteration history plus outcome.

    terminal_status is one of converged / max_iters / diverged /
    cycle_detected / stalled.  meta carries solver bookkeeping such as
    oracle_evals, the final coordinate permutation, and for Newton solvers
    newton_ratio_range = [min, max] over iterations of ||J d|| / ||d||.
    """

    records: list
    terminal_status: str
    final_point: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.terminal_status == "converged"

    def points(self) -> np.ndarray:
        return np.array([rec.x for rec in self.records])

    def csv_text(self) -> str:
        m = self.final_point.size
        header = "k," + ",".join(f"x{i + 1}" for i in range(m)) + ",res_norm,lambda,diameter,event"
        lines = [header]
        for rec in self.records:
            cells = [str(rec.k)]
            cells += [repr(float(v)) for v in rec.x]
            cells += [repr(float(rec.residual_norm)), repr(float(rec.lam)),
                      repr(float(rec.diameter)), rec.event]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.csv_text())


class SingularJacobianError(RuntimeError):
    """Residual Jacobian is singular or too ill-conditioned to invert."""

    def __init__(self, message: str, jacobian: np.ndarray | None = None):
        super().__init__(message)
        self.jacobian = jacobian


def merit(game: Game, x) -> float:
    """Sum of squared residual entries; zero exactly at interior equilibria."""
    r = residual_vector(game, x)
    return float(np.dot(r, r))


def check_step_diameter(step: float, diameter: float, eps_k: float, order: int) -> bool:
    """Shrink rule coupling step size to averaging-set diameter.

    Order 1 compares step/diameter <= eps_k (inclusive); order 2 compares
    step/diameter^2 < eps_k (strict).
    """
    if order == 1:
        return step / diameter <= eps_k
    if order == 2:
        return step / diameter**2 < eps_k
    raise ValueError("order must be 1 or 2")


def regularized_map(residual_fn, center, reg_constant: float):
    """Map y -> residual(y) + 2 reg_constant (y - center).

    Adding the anchored linear term makes the map strongly monotone around
    center regardless of how flat the underlying residual is.
    """
    center = np.asarray(center, dtype=float)

    def mapped(y):
        y = np.asarray(y, dtype=float)
        return residual_fn(y) + 2.0 * reg_constant * (y - center)

    return mapped


def newton_direction(residual, jacobian, cond_limit: float = 1e12) -> np.ndarray:
    """Solve J d = -residual, refusing singular or near-singular Jacobians."""
    jacobian = np.asarray(jacobian, dtype=float)
    if not np.all(np.isfinite(jacobian)):
        raise SingularJacobianError("Jacobian has non-finite entries", jacobian)
    cond = np.linalg.cond(jacobian)
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularJacobianError(
            f"Jacobian condition number {cond:.3g} exceeds {cond_limit:.3g}", jacobian
        )
    return np.linalg.solve(jacobian, -np.asarray(residual, dtype=float))


def line_search_residual(map_fn, x, direction, accept_threshold: float | None = None,
                         t_max: float = 2.0, tol: float = 1e-10) -> float:
    """Step length minimizing ||map(x + t direction)||_2 over [0, t_max].

    The full step t = 1 is accepted without searching when it already meets
    accept_threshold, which keeps Newton quadratic near the solution.
    """
    x = np.asarray(x, dtype=float)
    direction = np.asarray(direction, dtype=float)

    def g(t: float) -> float:
        return float(np.linalg.norm(map_fn(x + t * direction)))

    if accept_threshold is not None and g(1.0) <= accept_threshold:
        return 1.0
    return _golden_section(g, 0.0, t_max, tol=tol)


def _fd_jacobian(fn, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector map."""
    x = np.asarray(x, dtype=float)
    m = x.size
    J = np.empty((m, m))
    for j in range(m):
        h = rel_step * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (fn(xp) - fn(xm)) / (2.0 * h)
    return J


def _norm_inf(v: np.ndarray) -> float:
    return float(np.linalg.norm(v, np.inf))


# ---------------------------------------------------------------------------
# Safeguarded constant-step descent engine (shared by alg2 / alg3 / alg4)
# ---------------------------------------------------------------------------


class _DescentOracle:
    """Per-player values plus a stationarity gap for the walk engine.

    Raw oracle: true loss values and the subgradient-interval gap.  Smoothed
    oracle: averaged values and |smoothed residual|.
    """

    __slots__ = ("game", "smoothed", "evals", "_value", "_gap")

    def __init__(self, game: Game, value_fn, gap_fn, smoothed: SmoothedGame | None = None):
        self.game = game
        self.smoothed = smoothed
        self.evals = 0
        self._value = value_fn
        self._gap = gap_fn

    @property
    def diameter(self) -> float:
        return self.smoothed.diameter if self.smoothed is not None else 0.0

    def value(self, i: int, x: np.ndarray) -> float:
        self.evals += 1
        return self._value(i, x)

    def gap(self, x: np.ndarray) -> np.ndarray:
        self.evals += 1
        return self._gap(x)


def _raw_oracle(game: Game) -> _DescentOracle:
    return _DescentOracle(
        game,
        lambda i, x: game.losses[i].value(x),
        lambda x: equilibrium_gap(game, x),
    )


def _smoothed_oracle(game: Game, avg_set: AveragingSet, cfg: SolverConfig) -> _DescentOracle:
    sg = SmoothedGame(game, avg_set, make_quadrature(avg_set, cfg.quadrature_level, cfg.seed),
                      fd_step_factor=cfg.fd_step_factor)
    return _DescentOracle(
        game,
        lambda i, x: smoothed_value(sg, i, x),
        lambda x: np.abs(smoothed_residual(sg, x)),
        smoothed=sg,
    )


class _SweepRestart(Exception):
    """Internal control flow: state changed mid-sweep, start a fresh sweep."""


class _WalkEngine:
    """Constant-step coordinate walks with halving, averaging, and swaps.

    Modes: "flat" descends one fixed oracle until the gap meets eps (the raw
    safeguarded solver); "rounds" solves a smoothed oracle to a scheduled
    tolerance, then shrinks the averaging set and continues (outer-loop
    smoothing); "interleaved" shrinks whenever the step/diameter rule fires
    inside a single loop.  Walks run in possibly-permuted coordinates; all
    recorded points and detector histories use original coordinates.
    """

    def __init__(self, game: Game, x0, cfg: SolverConfig, mode: str,
                 records: list, use_smoothing: bool):
        self.base = game
        self.cfg = cfg
        self.mode = mode
        self.m = game.m
        self.perm = np.arange(self.m)
        self.cur_game = game
        self.x = game.clip_to_box(game.as_point(x0)).copy()
        self.lam = cfg.lambda0
        self.avg_set = cfg.averaging_set(self.m) if use_smoothing else None
        self.oracle = (_smoothed_oracle(game, self.avg_set, cfg) if use_smoothing
                       else _raw_oracle(game))
        self.records = records
        self.k = records[-1].k if records else 0
        self.round_idx = 0  # shrink events so far; indexes the eps_j schedule
        self.swaps_left = cfg.max_swaps if cfg.max_swaps is not None else self.m * (self.m - 1) // 2
        self.d_min = cfg.resolved_d_min()
        self.u_hist: list[np.ndarray] = []
        self.sweep_pts: list[np.ndarray] = [self.orig_x().copy()]
        self.sweeps = 0
        self.sweep_log: list[np.ndarray] = []  # every sweep-end point, never reset
        self.swap_sweeps: list[int] = []  # value of self.sweeps at each swap
        self.status: str | None = None
        self.evals_accum = 0
        self._last_gap: np.ndarray | None = None

    # -- coordinate bookkeeping ------------------------------------------

    def orig_x(self) -> np.ndarray:
        return self.x[self.perm]

    def total_evals(self) -> int:
        return self.evals_accum + self.oracle.evals

    def _record(self, event: str, gapv: np.ndarray | None = None) -> None:
        if gapv is None:
            gapv = self.oracle.gap(self.x)
            self._last_gap = gapv
        self.k += 1
        self.records.append(IterationRecord(
            self.k, self.orig_x().copy(), gapv.copy(), _norm_inf(gapv),
            self.lam, self.oracle.diameter, event,
        ))

    # -- schedule helpers --------------------------------------------------

    def _eps_j(self) -> float:
        return max(self.cfg.eps, self.cfg.eps0 * self.cfg.gamma**self.round_idx)

    def _gap_tol(self) -> float:
        if self.mode == "rounds":
            return self._eps_j()
        return self.cfg.eps

    def _lam_floor(self) -> float:
        if self.mode == "rounds":
            return max(1e-4 * self.oracle.diameter, 1e-15)
        return self.cfg.lambda_floor

    def _rebuild_oracle(self) -> None:
        self.evals_accum += self.oracle.evals
        if self.avg_set is not None:
            self.oracle = _smoothed_oracle(self.cur_game, self.avg_set, self.cfg)
        else:
            self.oracle = _raw_oracle(self.cur_game)

    # -- main loop ---------------------------------------------------------

    def run(self) -> None:
        while self.status is None:
            self._transition(self.oracle.gap(self.x))
            if self.status is not None:
                break
            try:
                any_move = self._sweep()
            except _SweepRestart:
                continue
            if self.status is not None:
                break
            self.sweeps += 1
            self.sweep_pts.append(self.orig_x().copy())
            self.sweep_log.append(self.orig_x().copy())
            try:
                if detect_divergence(self.sweep_pts, window=self.cfg.divergence_window):
                    self._handle_divergence()
                    if self.status is not None:
                        break
            except _SweepRestart:
                continue
            self._scale_step(any_move)

    def _transition(self, gapv: np.ndarray) -> None:
        """Gap-driven progression: converge, advance a round, or finish."""
        g = _norm_inf(gapv)
        if self.mode == "flat":
            if g <= self.cfg.eps:
                self.status = "converged"
        elif self.mode == "rounds":
            if g <= self._gap_tol():
                self._advance_round()
        else:  # interleaved
            if g <= self.cfg.eps and self.oracle.diameter <= self.d_min:
                self.status = "scale_floor"

    def _advance_round(self) -> None:
        if self.oracle.diameter <= self.d_min:
            self.status = "scale_floor"
            return
        self._record("shrink")  # records the pre-shrink diameter and lam
        self.avg_set = self.avg_set.scaled(self.cfg.shrink_rho)
        self._rebuild_oracle()
        self.round_idx += 1
        self.lam = max(self.oracle.diameter / 2.0, 8.0 * self._lam_floor())

    def _sweep(self) -> bool:
        any_move = False
        for i in range(self.m):
            moved = self._walk(i)
            if self.status is not None:
                return any_move
            if moved:
                any_move = True
                self._after_move()
                if self.status is not None:
                    return any_move
                self._transition(self._last_gap)
                if self.status is not None:
                    return any_move
        return any_move

    def _walk(self, i: int) -> bool:
        """Walk coordinate i in steps of lam while the value strictly drops."""
        oracle = self.oracle
        cur = oracle.value(i, self.x)
        direction = 0.0
        for sign in (1.0, -1.0):
            cand = self.x.copy()
            cand[i] += sign * self.lam
            if oracle.value(i, cand) < cur:
                direction = sign
                break
        if direction == 0.0:
            return False
        while True:
            cand = self.x.copy()
            cand[i] += direction * self.lam
            v = oracle.value(i, cand)
            if not v < cur:
                break
            self.x = cand
            cur = v
            self._record("none")
            if self.k >= self.cfg.max_iters:
                self.status = "max_iters"
                return True
            if not self.cur_game.in_box(self.x):
                # One step past the box is allowed so the exit is witnessed.
                self._handle_divergence()
                return True
        return True

    def _after_move(self) -> None:
        """Append the stall point and react to a detected cycle."""
        self.u_hist.append(self.orig_x().copy())
        p = detect_cycle(self.u_hist, max_period=2 * self.m + 2)
        if p is None:
            return
        # Averaging the last two detected periods gives the cycle centroid
        # with equal weights regardless of where the detector fired.
        avg = average_points(self.u_hist[-2 * p:])
        here = self.orig_x()
        if np.linalg.norm(avg - here) <= 1e-12 * (1.0 + np.linalg.norm(here)):
            self.status = "cycle_detected"
            return
        self.x = permute_point(avg, self.perm)
        self.u_hist.clear()
        self.sweep_pts = [self.orig_x().copy()]
        self._record("average")
        raise _SweepRestart

    def _handle_divergence(self) -> None:
        """Swap the two fastest-growing coordinates, or give up."""
        here = self.orig_x()
        if self.swaps_left > 0 and self.m >= 2:
            ref_idx = max(0, len(self.sweep_pts) - 1 - self.cfg.divergence_window)
            growth = np.abs(here - self.sweep_pts[ref_idx])
            if growth.max() <= 0.0:
                growth = np.abs(here)
            ranked = sorted(itertools.combinations(range(self.m), 2),
                            key=lambda ab: -(growth[ab[0]] + growth[ab[1]]))
            for a, b in ranked:
                swap = np.arange(self.m)
                ca, cb = self.perm[a], self.perm[b]
                swap[ca], swap[cb] = cb, ca
                new_perm = swap[self.perm]
                try:
                    new_game, _ = permute_game(self.base, new_perm)
                except ConvexityError:
                    continue
                self.perm = new_perm
                self.cur_game = new_game
                self.x = new_game.clip_to_box(permute_point(here, new_perm))
                self._rebuild_oracle()
                self.swaps_left -= 1
                self.u_hist.clear()
                self.sweep_pts = [self.orig_x().copy()]
                self.swap_sweeps.append(self.sweeps)
                self._record("swap")
                raise _SweepRestart
        self.status = "diverged"

    def _scale_step(self, any_move: bool) -> None:
        if self.mode == "interleaved":
            d = self.oracle.diameter
            if d > self.d_min and check_step_diameter(self.lam, d, self._eps_j(), self.cfg.order):
                self._record("shrink")
                self.avg_set = self.avg_set.scaled(self.cfg.shrink_rho)
                self._rebuild_oracle()
                self.round_idx += 1
                if self.oracle.diameter <= self.d_min:
                    self.status = "scale_floor"
                return
        if any_move:
            return
        if self.mode == "rounds" and self.lam / 2.0 < self._lam_floor():
            self._advance_round()
            return
        self.lam /= 2.0
        self._record("halve")
        if self.lam < self._lam_floor():
            self.status = "lam_floor" if self.mode != "interleaved" else "scale_floor"


def _initial_records(gapv: np.ndarray, x: np.ndarray, lam: float, diameter: float) -> list:
    return [IterationRecord(0, x.copy(), gapv.copy(), _norm_inf(gapv), lam, diameter, "none")]


def _close_with_polish(game: Game, cfg: SolverConfig, records: list, x,
                       status_hint: str, meta: dict) -> Trace:
    """Refine on the original game, append the polish row, settle the status."""
    x = np.asarray(x, dtype=float)
    final = x
    if cfg.polish:
        final = refine_equilibrium(game, game.clip_to_box(x), tol=cfg.eps)
    gapv = equilibrium_gap(game, final)
    if cfg.polish:
        last = records[-1]
        records.append(IterationRecord(
            last.k + 1, final.copy(), gapv.copy(), _norm_inf(gapv),
            0.0, last.diameter, "polish",
        ))
    status = "converged" if gapv.max() <= cfg.eps else status_hint
    meta["final_gap"] = float(gapv.max())
    return Trace(records, status, final, meta)


# ---------------------------------------------------------------------------
# Raw-game solvers
# ---------------------------------------------------------------------------


def exact_coordinate_descent(game: Game, x0, cfg: SolverConfig) -> Trace:
    """Best-response sweeps with exact per-coordinate minimization.

    The textbook baseline: converges on well-coupled smooth games, and
    faithfully reproduces the failure modes (orbits between best responses,
    geometric blow-up, stalls at points no coordinate move can improve)
    instead of papering over them.  No safeguards; cycling and divergence
    terminate the run with the matching status.
    """
    x = game.clip_to_box(game.as_point(x0)).copy()
    gapv = equilibrium_gap(game, x)
    records = _initial_records(gapv, x, 0.0, 0.0)
    meta = {"oracle_evals": 0}
    status = None
    k = 0
    if gapv.max() <= cfg.eps:
        status = "converged"
    sweep_pts = [x.copy()]
    while status is None:
        for i in range(game.m):
            x[i] = best_response_oracle(game, i, x, grid_n=cfg.br_grid_n)
            meta["oracle_evals"] += cfg.br_grid_n
            gapv = equilibrium_gap(game, x)
            k += 1
            records.append(IterationRecord(k, x.copy(), gapv.copy(), _norm_inf(gapv),
                                           0.0, 0.0, "none"))
            if gapv.max() <= cfg.eps:
                status = "converged"
                break
            if k >= cfg.max_iters:
                status = "max_iters"
                break
            if detect_divergence([r.x for r in records], window=cfg.divergence_window,
                                 box=game.box):
                status = "diverged"
                break
        if status is not None:
            break
        sweep_pts.append(x.copy())
        p = detect_cycle(sweep_pts, max_period=2 * game.m + 2)
        if p is not None:
            status = "cycle_detected"
            meta["cycle_period"] = detect_cycle([r.x for r in records],
                                                max_period=4 * game.m + 4)
    return Trace(records, status, x.copy(), meta)


def safeguarded_descent(game: Game, x0, cfg: SolverConfig) -> Trace:
    """Constant-step descent with halving, cycle averaging, and swaps.

    Walks each coordinate in steps of lam while the owner's loss strictly
    drops, halving lam when a sweep accepts nothing.  A detected cycle of
    stall points is replaced by its centroid; a divergent trajectory keeps
    its point but swaps the two fastest-growing coordinates (the game is
    relabeled internally, the trace stays in original coordinates).
    """
    x0 = game.as_point(x0)
    records = _initial_records(equilibrium_gap(game, x0), game.clip_to_box(x0),
                               cfg.lambda0, 0.0)
    engine = _WalkEngine(game, x0, cfg, "flat", records, use_smoothing=False)
    engine.run()
    status = {"lam_floor": "stalled"}.get(engine.status, engine.status)
    total_swaps = cfg.max_swaps if cfg.max_swaps is not None else game.m * (game.m - 1) // 2
    meta = {
        "oracle_evals": engine.total_evals(),
        "permutation": engine.perm.tolist(),
        "swaps": total_swaps - engine.swaps_left,
        "sweep_points": [p.tolist() for p in engine.sweep_log],
        "swap_sweeps": list(engine.swap_sweeps),
        "final_gap": float(equilibrium_gap(game, engine.orig_x()).max()),
    }
    return Trace(records, status, engine.orig_x().copy(), meta)


# ---------------------------------------------------------------------------
# Smoothed descent solvers
# ---------------------------------------------------------------------------


def _engine_meta(engine: _WalkEngine) -> dict:
    return {
        "oracle_evals": engine.total_evals(),
        "permutation": engine.perm.tolist(),
        "shrink_events": engine.round_idx,
        "sweeps": engine.sweeps,
        "sweep_points": [p.tolist() for p in engine.sweep_log],
        "swap_sweeps": list(engine.swap_sweeps),
    }


def smoothed_descent_outer(game: Game, x0, cfg: SolverConfig) -> Trace:
    """Outer smoothing loop: descend averaged losses, shrink, repeat.

    Each round runs the safeguarded walk engine on losses averaged over the
    current set until the smoothed residual meets the scheduled tolerance
    (or the step bottoms out), then shrinks the set.  Rounds end when the
    diameter reaches d_min; the final point is polished on the true game.
    """
    x0 = game.as_point(x0)
    avg = cfg.averaging_set(game.m)
    records = _initial_records(equilibrium_gap(game, x0), game.clip_to_box(x0),
                               cfg.lambda0, avg.diameter)
    engine = _WalkEngine(game, x0, cfg, "rounds", records, use_smoothing=True)
    engine.run()
    hint = {"scale_floor": "stalled", "lam_floor": "stalled"}.get(engine.status, engine.status)
    return _close_with_polish(game, cfg, records, engine.orig_x(), hint, _engine_meta(engine))


def coordinated_descent(game: Game, x0, cfg: SolverConfig) -> Trace:
    """Interleaved smoothing: one loop couples step halving to set shrinking.

    The averaging set shrinks whenever step/diameter falls to the scheduled
    eps_j (order 1 by default, order 2 on request), so both scales go to
    zero together instead of in nested loops.  Ends at the diameter floor
    and polishes on the true game.
    """
    x0 = game.as_point(x0)
    avg = cfg.averaging_set(game.m)
    records = _initial_records(equilibrium_gap(game, x0), game.clip_to_box(x0),
                               cfg.lambda0, avg.diameter)
    engine = _WalkEngine(game, x0, cfg, "interleaved", records, use_smoothing=True)
    engine.run()
    hint = {"scale_floor": "stalled", "lam_floor": "stalled"}.get(engine.status, engine.status)
    return _close_with_polish(game, cfg, records, engine.orig_x(), hint, _engine_meta(engine))


# ---------------------------------------------------------------------------
# Newton solvers
# ---------------------------------------------------------------------------


def newton_solve(game: Game, x0, cfg: SolverConfig) -> Trace:
    """Newton's method on the residual map with a damped line search.

    For smooth games only: at kinks the residual uses interval midpoints,
    which finite differences cannot linearize reliably, so games with
    max-affine pieces are rejected unless allow_nonsmooth_newton is set
    (the smoothed Newton solvers handle those).  Full steps are taken
    whenever they meet the scheduled residual decrease; otherwise the step
    length minimizes the residual norm on [0, 2].
    """
    if any(loss.n_pieces for loss in game.losses) and not cfg.allow_nonsmooth_newton:
        raise ValueError(
            "game has max-affine pieces; Newton on the raw residual is unreliable at "
            "kinks (set allow_nonsmooth_newton=True to override, or use alg5/reg_newton)"
        )
    x = game.clip_to_box(game.as_point(x0)).copy()
    res = residual_vector(game, x)
    records = _initial_records(res, x, 0.0, 0.0)
    meta = {"oracle_evals": 1}
    ratios = []
    status = None
    for k in range(1, cfg.max_iters + 1):
        if _norm_inf(res) <= cfg.eps:
            status = "converged"
            break
        J = _fd_jacobian(lambda y: residual_vector(game, y), x)
        meta["oracle_evals"] += 2 * game.m
        direction = newton_direction(res, J)
        ratios.append(float(np.linalg.norm(J @ direction) / np.linalg.norm(direction)))
        eps_k = max(cfg.eps, cfg.eps0 * cfg.gamma ** (k - 1))
        t = line_search_residual(lambda y: residual_vector(game, y), x, direction,
                                 accept_threshold=eps_k)
        x = x + t * direction
        res = residual_vector(game, x)
        records.append(IterationRecord(k, x.copy(), res.copy(), _norm_inf(res),
                                       float(t * np.linalg.norm(direction)), 0.0, "none"))
        if not game.in_box(x):
            status = "diverged"
            break
    else:
        status = "max_iters"
    if ratios:
        meta["newton_ratio_range"] = [min(ratios), max(ratios)]
    return Trace(records, status, x.copy(), meta)


def _smoothed_newton_loop(game: Game, x0, cfg: SolverConfig, regularized: bool) -> Trace:
    """Shared driver for Newton on the twice-averaged residual map.

    Plain variant: Newton direction from the finite-difference Jacobian of
    the twice-smoothed residual, falling back to a regularized step when the
    Jacobian is singular.  Regularized variant: the Jacobian is clipped to
    spectral norm L_s = L / diameter and shifted by 2 L_s I, and the line
    search follows the anchored regularized map.  Both shrink the averaging
    set when ||step|| / diameter^2 < eps_j (strict, order 2) and polish the
    final point on the true game.
    """
    x = game.clip_to_box(game.as_point(x0)).copy()
    avg = cfg.averaging_set(game.m)
    sg = SmoothedGame(game, avg, make_quadrature(avg, cfg.quadrature_level, cfg.seed),
                      fd_step_factor=cfg.fd_step_factor)
    L = float(game.lipschitz.max())
    d_min = cfg.resolved_d_min()
    res = twice_smoothed_residual(sg, x)
    records = _initial_records(res, x, 0.0, sg.diameter)
    meta = {"oracle_evals": 1, "shrink_events": 0}
    ratios = []
    status_hint = "max_iters"
    j = 0
    k = 0
    while k < cfg.max_iters:
        res = twice_smoothed_residual(sg, x)
        if sg.diameter <= d_min and _norm_inf(res) <= cfg.eps:
            status_hint = "stalled"
            break
        eps_j = max(cfg.eps, cfg.eps0 * cfg.gamma**j)
        J = twice_smoothed_jacobian(sg, x)
        meta["oracle_evals"] += 2 * game.m + 1
        L_s = grad_lipschitz(L, sg.avg_set)
        if regularized:
            sigma = float(np.linalg.norm(J, 2))
            J_clip = J * min(1.0, L_s / sigma) if sigma > 0 else J
            J_tilde = J_clip + 2.0 * L_s * np.eye(game.m)
            direction = np.linalg.solve(J_tilde, -res)
            search_map = regularized_map(lambda y: twice_smoothed_residual(sg, y), x, L_s)
            J_used = J_tilde
        else:
            try:
                direction = newton_direction(res, J)
                J_used = J
            except SingularJacobianError:
                J_tilde = J * min(1.0, L_s / max(float(np.linalg.norm(J, 2)), 1e-300))
                J_tilde = J_tilde + 2.0 * L_s * np.eye(game.m)
                direction = np.linalg.solve(J_tilde, -res)
                J_used = J_tilde
            search_map = lambda y: twice_smoothed_residual(sg, y)  # noqa: E731
        dir_norm = float(np.linalg.norm(direction))
        if dir_norm > 0.0:
            ratios.append(float(np.linalg.norm(J_used @ direction)) / dir_norm)
        # Full steps pass on sufficient decrease of the searched map (whose
        # value at t=0 is the current residual for both variants); the golden
        # fallback only needs a coarse step length.
        threshold = max(eps_j, 0.9 * float(np.linalg.norm(res)))
        t = line_search_residual(search_map, x, direction, accept_threshold=threshold,
                                 tol=1e-3)
        step = t * direction
        x = game.clip_to_box(x + step)
        res = twice_smoothed_residual(sg, x)
        k += 1
        records.append(IterationRecord(k, x.copy(), res.copy(), _norm_inf(res),
                                       float(np.linalg.norm(step)), sg.diameter, "none"))
        step_norm = float(np.linalg.norm(step))
        if sg.diameter > d_min and check_step_diameter(step_norm, sg.diameter, eps_j, 2):
            k += 1
            records.append(IterationRecord(k, x.copy(), res.copy(), _norm_inf(res),
                                           step_norm, sg.diameter, "shrink"))
            sg = sg.rescaled(cfg.shrink_rho)
            j += 1
            meta["shrink_events"] = j
        elif sg.diameter <= d_min and step_norm <= 1e-15 * (1.0 + float(np.linalg.norm(x))):
            status_hint = "stalled"
            break
    if ratios:
        meta["newton_ratio_range"] = [min(ratios), max(ratios)]
    meta["final_diameter"] = sg.diameter
    return _close_with_polish(game, cfg, records, x, status_hint, meta)


def smoothed_newton(game: Game, x0, cfg: SolverConfig) -> Trace:
    """Newton on the twice-averaged residual with order-2 set shrinking."""
    return _smoothed_newton_loop(game, x0, cfg, regularized=False)


def regularized_newton(game: Game, x0, cfg: SolverConfig) -> Trace:
    """Regularized Newton: clipped Jacobian plus a strongly monotone anchor.

    Clipping bounds the Jacobian's spectral norm by L_s = L / diameter, so
    after adding 2 L_s I the quadratic form of the working matrix lies
    between L_s ||z||^2 and 3 L_s ||z||^2 for every z: steps exist and are
    bounded no matter how degenerate the smoothed residual is.
    """
    return _smoothed_newton_loop(game, x0, cfg, regularized=True)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

ALGORITHMS = {
    "alg1": newton_solve,
    "exact_cd": exact_coordinate_descent,
    "alg2": safeguarded_descent,
    "alg3": smoothed_descent_outer,
    "alg4": coordinated_descent,
    "alg5": smoothed_newton,
    "reg_newton": regularized_newton,
}


def solve(game: Game, x0, cfg: SolverConfig | None = None) -> Trace:
    """Run the solver named by cfg.algorithm (default alg2)."""
    if cfg is None:
        cfg = SolverConfig()
    try:
        fn = ALGORITHMS[cfg.algorithm]
    except KeyError:
        raise ValueError(
            f"unknown algorithm {cfg.algorithm!r}; choose from {sorted(ALGORITHMS)}"
        ) from None
    return fn(game, x0, cfg)
