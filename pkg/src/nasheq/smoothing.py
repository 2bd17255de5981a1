"""Averaging game losses over a compact symmetric neighborhood.

Replacing a loss f_i by its mean over a translated ball or cube (Steklov
averaging) produces a loss that is still convex in the owner's coordinate but
whose own-coordinate derivative is Lipschitz, with constant L_i / d(D) for a
set D of diameter d(D).  Averaging twice gives a second derivative Lipschitz
with constant 2 L_i / d(D)^2, which is what the Newton-type solvers need.
Both averages are computed with one equal-weight quadrature rule; the nested
average reuses the rule with an independent node set.

All rules here are symmetric about the origin (node sets closed under
negation), so averages of odd integrands vanish exactly and affine gradients
are preserved bitwise up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .games import Game

__all__ = [
    "NODE_BUDGET",
    "AveragingSet",
    "QuadratureRule",
    "SmoothedGame",
    "grad_lipschitz",
    "hessian_lipschitz",
    "make_quadrature",
    "smooth_game",
    "smoothed_grad_own",
    "smoothed_residual",
    "smoothed_value",
    "twice_smoothed_grad_own",
    "twice_smoothed_jacobian",
    "twice_smoothed_residual",
    "twice_smoothed_value",
]

NODE_BUDGET = 1_000_000


@dataclass(frozen=True)
class AveragingSet:
    """Ball or cube of given radius centered at the origin in R^m.

    For the cube the radius is the half-edge, so the diameter is the long
    diagonal 2 r sqrt(m); for the Euclidean ball it is 2 r.
    """

    kind: str
    radius: float
    m: int

    def __post_init__(self):
        if self.kind not in ("ball", "cube"):
            raise ValueError(f"kind must be 'ball' or 'cube', got {self.kind!r}")
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @property
    def diameter(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        return 2.0 * self.radius * math.sqrt(self.m)

    @property
    def measure(self) -> float:
        if self.kind == "ball":
            return _ball_volume(self.m, self.radius)
        return (2.0 * self.radius) ** self.m

    def scaled(self, factor: float) -> "AveragingSet":
        if not factor > 0.0:
            raise ValueError("scale factor must be positive")
        return AveragingSet(self.kind, self.radius * factor, self.m)


def _ball_volume(m: int, r: float) -> float:
    return math.pi ** (m / 2.0) / math.gamma(m / 2.0 + 1.0) * r**m


@dataclass(frozen=True)
class QuadratureRule:
    """Equal-weight nodes for averaging over an AveragingSet.

    Weights always sum to one.  The node set is symmetric about the origin.
    """

    nodes: np.ndarray
    weights: np.ndarray
    level: int
    seed: int

    def __post_init__(self):
        self.nodes.flags.writeable = False
        self.weights.flags.writeable = False

    @property
    def count(self) -> int:
        return self.nodes.shape[0]


def make_quadrature(avg_set: AveragingSet, level: int, seed: int = 0) -> QuadratureRule:
    """Build an equal-weight rule for averaging over avg_set.

    Cube: tensor-product midpoint grid with level points per dimension
    (level^m nodes, symmetric for any level).  Ball: scrambled Halton
    candidates in the bounding cube, rejected to the ball, mirrored so the
    node set is exactly symmetric; the count is at least level^m times the
    ball-to-cube volume ratio.  Rules are deterministic given (level, seed).
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    m, r = avg_set.m, avg_set.radius
    total = level**m
    if total > NODE_BUDGET:
        raise ValueError(
            f"level {level} needs {total} nodes in dimension {m}, over the budget "
            f"of {NODE_BUDGET}; reduce the level"
        )
    if avg_set.kind == "cube":
        centers = -r + (np.arange(level) + 0.5) * (2.0 * r / level)
        grids = np.meshgrid(*([centers] * m), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.full(total, 1.0 / total)
        return QuadratureRule(nodes, weights, level, seed)

    ratio = _ball_volume(m, 1.0) / 2.0**m
    target = max(2, math.ceil(total * ratio))
    target += target % 2  # mirrored pairs need an even count
    half = target // 2
    sampler = qmc.Halton(d=m, scramble=True, seed=seed)
    accepted: list[np.ndarray] = []
    have = 0
    while have < half:
        chunk = sampler.random(max(128, half))
        pts = (2.0 * chunk - 1.0) * r
        keep = pts[np.linalg.norm(pts, axis=1) <= r]
        accepted.append(keep)
        have += keep.shape[0]
    pos = np.concatenate(accepted)[:half]
    nodes = np.concatenate([pos, -pos])
    weights = np.full(target, 1.0 / target)
    return QuadratureRule(nodes, weights, level, seed)


class SmoothedGame:
    """A game with every loss replaced by its average over x + D.

    Parameters
    ----------
    base : Game
        The game being smoothed.
    avg_set : AveragingSet
        Neighborhood D (must match the game dimension).
    rule : QuadratureRule
        Rule used for single averages.
    fd_step_factor : float
        Finite-difference step for the twice-smoothed Jacobian, as a fraction
        of the set diameter.  Must lie in (0, 0.5).
    inner_rule : QuadratureRule, optional
        Rule for the inner layer of the nested average; defaults to the same
        construction with the seed offset by one, so the two layers use
        independent node sets.

    Instances are immutable and safe to share between threads; the nested
    node set is materialized lazily on first use.
    """

    def __init__(self, base: Game, avg_set: AveragingSet, rule: QuadratureRule,
                 fd_step_factor: float = 1e-2, inner_rule: QuadratureRule | None = None):
        if avg_set.m != base.m:
            raise ValueError(f"averaging set dimension {avg_set.m} != game dimension {base.m}")
        if not 0.0 < fd_step_factor < 0.5:
            raise ValueError("fd_step_factor must lie in (0, 0.5)")
        if rule.nodes.shape[1] != base.m:
            raise ValueError("quadrature rule dimension mismatch")
        self.base = base
        self.avg_set = avg_set
        self.rule = rule
        self.fd_step_factor = fd_step_factor
        if inner_rule is None:
            inner_rule = make_quadrature(avg_set, rule.level, rule.seed + 1)
        self.inner_rule = inner_rule
        self._pairs: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def diameter(self) -> float:
        return self.avg_set.diameter

    def rescaled(self, factor: float) -> "SmoothedGame":
        """Same game and rule layout over a scaled neighborhood."""
        shrunk = self.avg_set.scaled(factor)
        rule = make_quadrature(shrunk, self.rule.level, self.rule.seed)
        inner = make_quadrature(shrunk, self.inner_rule.level, self.inner_rule.seed)
        return SmoothedGame(self.base, shrunk, rule, self.fd_step_factor, inner)

    def _pair_offsets(self) -> tuple[np.ndarray, np.ndarray]:
        """Offsets and weights of the nested two-layer average."""
        if self._pairs is None:
            n_out = self.rule.count
            n_in = self.inner_rule.count
            if n_out * n_in > NODE_BUDGET:
                raise ValueError(
                    f"nested rule needs {n_out * n_in} node pairs, over the budget of "
                    f"{NODE_BUDGET}; reduce the level"
                )
            offsets = (self.rule.nodes[:, None, :] + self.inner_rule.nodes[None, :, :])
            offsets = offsets.reshape(n_out * n_in, self.m)
            weights = np.outer(self.rule.weights, self.inner_rule.weights).ravel()
            offsets.flags.writeable = False
            weights.flags.writeable = False
            self._pairs = (offsets, weights)
        return self._pairs


def smooth_game(game: Game, kind: str = "cube", radius: float = 0.5, level: int = 8,
                seed: int = 0, fd_step_factor: float = 1e-2) -> SmoothedGame:
    """Convenience builder: averaging set, rule, and SmoothedGame in one call."""
    avg_set = AveragingSet(kind, radius, game.m)
    rule = make_quadrature(avg_set, level, seed)
    return SmoothedGame(game, avg_set, rule, fd_step_factor)


def _check_player(sg: SmoothedGame, i: int) -> None:
    if not 0 <= i < sg.m:
        raise IndexError(f"player index {i} out of range [0, {sg.m})")


def smoothed_value(sg: SmoothedGame, i: int, x) -> float:
    """Average of f_i over x + D."""
    _check_player(sg, i)
    x = sg.base.as_point(x)
    vals = sg.base.losses[i].value_batch(x[None, :] + sg.rule.nodes)
    return float(sg.rule.weights @ vals)


def smoothed_grad_own(sg: SmoothedGame, i: int, x) -> float:
    """Own-coordinate derivative of the averaged loss.

    Equals the average of the pointwise own-coordinate subgradient (interval
    midpoints at kinks; the kink set has measure zero, so midpoints do not
    bias the integral).
    """
    _check_player(sg, i)
    x = sg.base.as_point(x)
    lo, hi = sg.base.losses[i].own_interval_batch(i, x[None, :] + sg.rule.nodes)
    return float(sg.rule.weights @ (0.5 * (lo + hi)))


def smoothed_residual(sg: SmoothedGame, x) -> np.ndarray:
    """Vector of smoothed own-coordinate derivatives, one entry per player."""
    x = sg.base.as_point(x)
    X = x[None, :] + sg.rule.nodes
    out = np.empty(sg.m)
    for i, loss in enumerate(sg.base.losses):
        lo, hi = loss.own_interval_batch(i, X)
        out[i] = sg.rule.weights @ (0.5 * (lo + hi))
    return out


def twice_smoothed_value(sg: SmoothedGame, i: int, x) -> float:
    """Nested average of f_i: the single average smoothed once more."""
    _check_player(sg, i)
    x = sg.base.as_point(x)
    offsets, weights = sg._pair_offsets()
    vals = sg.base.losses[i].value_batch(x[None, :] + offsets)
    return float(weights @ vals)


def twice_smoothed_grad_own(sg: SmoothedGame, i: int, x) -> float:
    """Own-coordinate derivative of the twice-averaged loss."""
    _check_player(sg, i)
    x = sg.base.as_point(x)
    offsets, weights = sg._pair_offsets()
    lo, hi = sg.base.losses[i].own_interval_batch(i, x[None, :] + offsets)
    return float(weights @ (0.5 * (lo + hi)))


def twice_smoothed_residual(sg: SmoothedGame, x) -> np.ndarray:
    """Residual map of the twice-averaged game (one entry per player)."""
    x = sg.base.as_point(x)
    offsets, weights = sg._pair_offsets()
    X = x[None, :] + offsets
    out = np.empty(sg.m)
    for i, loss in enumerate(sg.base.losses):
        lo, hi = loss.own_interval_batch(i, X)
        out[i] = weights @ (0.5 * (lo + hi))
    return out


def twice_smoothed_jacobian(sg: SmoothedGame, x) -> np.ndarray:
    """Jacobian of the twice-averaged residual map by central differences.

    Entry (i, j) is the second partial of the twice-averaged f_i, first in
    the owner's coordinate, then in coordinate j.  The matrix is not
    symmetric in general: row i differentiates player i's own loss.  The
    step is fd_step_factor times the set diameter.
    """
    x = sg.base.as_point(x)
    h = sg.fd_step_factor * sg.avg_set.diameter
    m = sg.m
    jac = np.empty((m, m))
    for j in range(m):
        step = np.zeros(m)
        step[j] = h
        plus = twice_smoothed_residual(sg, x + step)
        minus = twice_smoothed_residual(sg, x - step)
        jac[:, j] = (plus - minus) / (2.0 * h)
    if not np.all(np.isfinite(jac)):
        raise RuntimeError(
            f"non-finite entries in the smoothed Jacobian at x={x.tolist()} "
            f"(radius {sg.avg_set.radius}, step {h})"
        )
    return jac


def grad_lipschitz(lipschitz: float, avg_set: AveragingSet) -> float:
    """Lipschitz bound of the averaged own-gradient: L / d(D)."""
    if lipschitz < 0.0:
        raise ValueError("Lipschitz constant must be nonnegative")
    return lipschitz / avg_set.diameter


def hessian_lipschitz(lipschitz: float, avg_set: AveragingSet) -> float:
    """Lipschitz bound of the twice-averaged second derivative: 2 L / d(D)^2."""
    if lipschitz < 0.0:
        raise ValueError("Lipschitz constant must be nonnegative")
    return 2.0 * lipschitz / avg_set.diameter**2
