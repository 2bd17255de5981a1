"""Run diagnostics and equilibrium certificates.

Cycle and divergence detectors classify coordinate-descent trajectories;
coordinate permutation is the remedy the safeguarded solver applies when a
trajectory diverges.  Certificates check candidate points directly on the
original (possibly nonsmooth) game: a point is accepted exactly when zero
lies in every player's own-coordinate subgradient interval, and a
neighborhood certificate locates such a witness inside a translated
averaging set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .games import (
    ConvexityError,
    Game,
    PlayerLoss,
    best_response_oracle,
    equilibrium_gap,
    evaluate,
)
from .smoothing import AveragingSet, QuadratureRule, make_quadrature

__all__ = [
    "EquilibriumReport",
    "NeighborhoodCertificate",
    "average_points",
    "certify_equilibrium",
    "certify_neighborhood",
    "detect_cycle",
    "detect_divergence",
    "permute_game",
    "permute_point",
    "refine_equilibrium",
]


def _as_history(history) -> np.ndarray:
    arr = np.asarray(history, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"history must be a sequence of points, got shape {arr.shape}")
    return arr


def detect_cycle(history, tol: float | None = None, max_period: int | None = None):
    """Smallest period p such that the trailing 2p points repeat with period p.

    Returns the period, or None.  The tolerance defaults to
    1e-9 * (1 + ||last point||); max_period defaults to 2m + 2.
    """
    arr = _as_history(history)
    n, m = arr.shape
    if tol is None:
        tol = 1e-9 * (1.0 + float(np.linalg.norm(arr[-1])))
    if max_period is None:
        max_period = 2 * m + 2
    for p in range(1, max_period + 1):
        if n < 2 * p:
            break
        tail = arr[n - p:]
        prev = arr[n - 2 * p: n - p]
        if float(np.linalg.norm(tail - prev, axis=1).max()) <= tol:
            return p
    return None


def detect_divergence(history, window: int = 6, box: np.ndarray | None = None) -> bool:
    """Whether the trajectory is running away.

    True when the last point left the box, or when each of the trailing
    `window` step distances strictly exceeds the step distance one window
    earlier (this sees through the alternation that coordinate steps produce:
    a bounded cycle repeats distances exactly and stays undetected, while a
    geometric staircase grows at every lag).  Needs 2*window+1 points for the
    distance test.
    """
    arr = _as_history(history)
    if box is not None:
        box = np.asarray(box, dtype=float)
        last = arr[-1]
        if np.any(last < box[:, 0]) or np.any(last > box[:, 1]):
            return True
    steps = np.linalg.norm(np.diff(arr, axis=0), axis=1)
    if steps.size < 2 * window:
        return False
    recent = steps[-window:]
    earlier = steps[-2 * window: -window]
    return bool(np.all(recent > earlier))


def average_points(points, weights=None) -> np.ndarray:
    """Weighted average of points; equal weights by default."""
    arr = _as_history(points)
    if weights is None:
        return arr.mean(axis=0)
    w = np.asarray(weights, dtype=float)
    if w.shape != (arr.shape[0],) or not np.isclose(w.sum(), 1.0):
        raise ValueError("weights must match the point count and sum to one")
    return w @ arr


def permute_point(x, perm) -> np.ndarray:
    """Relabel the coordinates of x: new coordinate perm[j] holds old x_j."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[np.asarray(perm)] = x
    return out


def _check_perm(perm, m: int) -> np.ndarray:
    p = np.asarray(perm, dtype=int)
    if p.shape != (m,) or sorted(p.tolist()) != list(range(m)):
        raise ValueError(f"perm must be a permutation of 0..{m - 1}, got {perm}")
    return p


def permute_game(game: Game, perm):
    """Relabel coordinates inside every loss.

    The new loss i evaluates f_i at the relabeled point: new coordinate
    perm[j] plays the role of old coordinate j, while player i keeps its own
    loss and optimizes (new) coordinate i.  Returns the relabeled game and
    the inverse point map taking new-label points back to original labels.
    Raises ConvexityError when a loss stops being convex in its owner's
    coordinate under the relabeling.
    """
    p = _check_perm(perm, game.m)
    losses = []
    for loss in game.losses:
        pieces = []
        if loss.n_pieces:
            a_new = np.empty_like(loss.pieces_a)
            a_new[:, p] = loss.pieces_a
            pieces = [(a_new[j], loss.pieces_b[j]) for j in range(loss.n_pieces)]
        quad = None
        if loss.quad is not None:
            quad = np.empty_like(loss.quad)
            quad[np.ix_(p, p)] = loss.quad
        linear = None
        if loss.linear is not None:
            linear = np.empty_like(loss.linear)
            linear[p] = loss.linear
        losses.append(PlayerLoss(game.m, pieces, quad=quad, linear=linear, constant=loss.constant))
    box = np.empty_like(game.box)
    box[p] = game.box
    permuted = Game(losses, box=box, name=game.name)

    def inverse(y) -> np.ndarray:
        return np.asarray(y, dtype=float)[p]

    return permuted, inverse


@dataclass(frozen=True)
class NeighborhoodCertificate:
    """Witness of an equilibrium inside x + D."""

    witness: np.ndarray
    offset: np.ndarray
    residuals: np.ndarray
    tol: float
    set_kind: str
    set_radius: float

    def to_dict(self) -> dict:
        return {
            "witness": self.witness.tolist(),
            "offset": self.offset.tolist(),
            "residuals": self.residuals.tolist(),
            "tol": self.tol,
            "set_kind": self.set_kind,
            "set_radius": self.set_radius,
        }


@dataclass(frozen=True)
class EquilibriumReport:
    """Certificate for a candidate point."""

    point: np.ndarray
    per_player_residual: np.ndarray
    is_equilibrium: bool
    neighborhood_certificate: NeighborhoodCertificate | None = None

    def to_dict(self) -> dict:
        cert = self.neighborhood_certificate
        return {
            "point": self.point.tolist(),
            "per_player_residual": self.per_player_residual.tolist(),
            "is_equilibrium": self.is_equilibrium,
            "neighborhood_certificate": cert.to_dict() if cert else None,
        }


def certify_equilibrium(game: Game, x, tol: float = 1e-9, cross_check: bool = True,
                        oracle_grid: int = 2001) -> EquilibriumReport:
    """Check a candidate point on the original game.

    The residual of player i is the distance from 0 to its own-coordinate
    subgradient interval; all residuals within tol certify the point.  With
    cross_check, each player's loss is also compared against the
    best-response oracle, which guards the interval arithmetic against
    construction bugs.
    """
    x = game.as_point(x)
    gaps = equilibrium_gap(game, x)
    ok = bool(gaps.max() <= tol)
    if ok and cross_check:
        for i in range(game.m):
            t_star = best_response_oracle(game, i, x, grid_n=oracle_grid)
            x_alt = x.copy()
            x_alt[i] = t_star
            improvement = evaluate(game, i, x) - evaluate(game, i, x_alt)
            if improvement > 1e-7 * (1.0 + abs(evaluate(game, i, x))):
                ok = False
                break
    return EquilibriumReport(point=x, per_player_residual=gaps, is_equilibrium=ok)


def _gap_batch(game: Game, X: np.ndarray) -> np.ndarray:
    """Max over players of the subgradient-interval distance, per row of X."""
    worst = np.zeros(X.shape[0])
    for i, loss in enumerate(game.losses):
        lo, hi = loss.own_interval_batch(i, X)
        gap = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
        worst = np.maximum(worst, gap)
    return worst


def _bisect_coordinate(game: Game, i: int, x: np.ndarray, lo: float, hi: float,
                       max_iter: int = 200) -> float:
    """Point in [lo, hi] where player i's interval contains 0, if one exists.

    Convexity makes both interval endpoints nondecreasing in the coordinate,
    so the sign pattern (interval below 0 / containing 0 / above 0) is
    monotone and plain bisection applies.  Returns the best coordinate value
    found; at a bound when the minimum sits outside [lo, hi].
    """
    loss = game.losses[i]

    def state(t: float) -> int:
        xt = x.copy()
        xt[i] = t
        glo, ghi = loss.own_interval(i, xt)
        if ghi < 0.0:
            return -1  # still descending: minimizer to the right
        if glo > 0.0:
            return +1
        return 0

    s_cur = state(x[i])
    if s_cur == 0:
        return float(x[i])
    a, b = (x[i], hi) if s_cur < 0 else (lo, x[i])
    s_a = state(a)
    s_b = state(b)
    if s_a == 0:
        return float(a)
    if s_b == 0:
        return float(b)
    if s_a > 0 or s_b < 0:
        # No sign change inside the slice: the minimum sits at a bound.
        return float(b if s_b < 0 else a)
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:  # interval exhausted at float resolution
            break
        s_mid = state(mid)
        if s_mid == 0:
            return float(mid)
        if s_mid < 0:
            a = mid
        else:
            b = mid
    # Pick the endpoint with the smaller gap.
    xa, xb = x.copy(), x.copy()
    xa[i], xb[i] = a, b
    ga = equilibrium_gap(game, xa)[i]
    gb = equilibrium_gap(game, xb)[i]
    return float(a if ga <= gb else b)


def refine_equilibrium(game: Game, x0, tol: float = 0.0, max_rounds: int = 100,
                       bounds: np.ndarray | None = None) -> np.ndarray:
    """Polish a candidate by alternating exact coordinate stationarity.

    Each pass moves every coordinate to a point where the player's own
    subgradient interval contains zero (found by bisection; exact up to the
    interval tie tolerance).  Stops once the worst residual is at most tol or
    a pass no longer moves.  bounds restricts each coordinate to [lo, hi]
    (defaults to the game box).
    """
    x = game.as_point(x0).copy()
    if bounds is None:
        bounds = game.box
    bounds = np.asarray(bounds, dtype=float)
    for _ in range(max_rounds):
        moved = False
        for i in range(game.m):
            t = _bisect_coordinate(game, i, x, bounds[i, 0], bounds[i, 1])
            if t != x[i]:
                x[i] = t
                moved = True
        if equilibrium_gap(game, x).max() <= tol or not moved:
            break
    return x


def certify_neighborhood(game: Game, x, avg_set: AveragingSet,
                         rule: QuadratureRule | None = None, tol: float = 1e-9,
                         level: int = 8, seed: int = 0) -> EquilibriumReport:
    """Search x + D for an equilibrium witness.

    Evaluates the per-player residuals at x shifted by every quadrature node,
    then refines around the best node with coordinate-wise bisection confined
    to x + D (and the game box).  A witness with all residuals within tol
    yields a certificate; the report's own residuals always describe x
    itself.
    """
    x = game.as_point(x)
    if avg_set.m != game.m:
        raise ValueError("averaging set dimension mismatch")
    if rule is None:
        rule = make_quadrature(avg_set, level, seed)
    candidates = x[None, :] + rule.nodes
    inside = np.all((candidates >= game.box[:, 0]) & (candidates <= game.box[:, 1]), axis=1)
    worst = _gap_batch(game, candidates)
    worst[~inside] = np.inf
    best = int(np.argmin(worst))

    # Refinement stays inside x + D: for a cube that is exact; for a ball the
    # bounding box is used and membership is checked afterwards.
    r = avg_set.radius
    lo = np.maximum(x - r, game.box[:, 0])
    hi = np.minimum(x + r, game.box[:, 1])
    witness = refine_equilibrium(game, candidates[best], tol=tol,
                                 bounds=np.stack([lo, hi], axis=1))
    if avg_set.kind == "ball" and np.linalg.norm(witness - x) > r * (1.0 + 1e-12):
        witness = candidates[best]

    residuals = equilibrium_gap(game, witness)
    certificate = None
    if residuals.max() <= tol:
        certificate = NeighborhoodCertificate(
            witness=witness,
            offset=witness - x,
            residuals=residuals,
            tol=tol,
            set_kind=avg_set.kind,
            set_radius=avg_set.radius,
        )
    return EquilibriumReport(
        point=x,
        per_player_residual=equilibrium_gap(game, x),
        is_equilibrium=bool(equilibrium_gap(game, x).max() <= tol),
        neighborhood_certificate=certificate,
    )
