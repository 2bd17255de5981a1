"""Convex m-player games with piecewise-smooth losses.

A game couples m players; player ``i`` controls coordinate ``i`` of a shared
multistrategy vector ``x`` in R^m and wants to minimize its own loss

    f_i(x) = max_j (a_j . x + b_j) + 0.5 x^T Q x + c . x + const,

where the max term is omitted when the piece list is empty.  Each loss must be
convex in the owner's own coordinate (``Q[i, i] >= 0``); the max-of-affine term
is convex in every coordinate.  A point is a Nash equilibrium exactly when, for
every player, zero lies in the subdifferential of its loss along its own
coordinate.

Player indices are 0-based throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DEFAULT_BOX_HALF_WIDTH",
    "ConvexityError",
    "Game",
    "GameSpecError",
    "PlayerLoss",
    "SubgradientInterval",
    "best_response_oracle",
    "builtin_game",
    "distance_to_known_equilibrium",
    "equilibrium_gap",
    "evaluate",
    "parse_game_spec",
    "residual_vector",
    "subgradient_interval",
]

DEFAULT_BOX_HALF_WIDTH = 100.0

# Relative tolerance deciding which affine pieces are tied with the max.
TIE_TOL = 1e-12

BUILTIN_NAMES = ("cycle2", "diverge2", "dm-maxfun", "stall2", "abs-contract", "quad-m")


class GameSpecError(ValueError):
    """Malformed game description (syntax or schema)."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {col})"
        super().__init__(message)
        self.line = line
        self.col = col


class ConvexityError(ValueError):
    """A loss is not convex in its owner's coordinate."""


@dataclass(frozen=True)
class SubgradientInterval:
    """Closed interval [lo, hi] of own-coordinate subgradients."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"interval endpoints out of order: [{self.lo}, {self.hi}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def is_degenerate(self) -> bool:
        scale = 1.0 + max(abs(self.lo), abs(self.hi))
        return (self.hi - self.lo) <= TIE_TOL * scale

    def distance_to_zero(self) -> float:
        """Distance from 0 to the interval; 0 when 0 is contained."""
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))


class PlayerLoss:
    """One player's loss: max of affine pieces plus a quadratic part.

    Parameters
    ----------
    m : int
        Dimension of the multistrategy vector.
    affine_pieces : sequence of (a, b) pairs, optional
        Each pair contributes the affine function a . x + b under the max.
    quad : (m, m) array, optional
        Symmetric matrix Q of the term 0.5 x^T Q x.
    linear : (m,) array, optional
        Coefficients c of the term c . x.
    constant : float
        Additive constant.

    Instances are immutable; all evaluation methods are pure and safe to call
    concurrently.
    """

    __slots__ = ("m", "pieces_a", "pieces_b", "quad", "linear", "constant")

    def __init__(self, m, affine_pieces=(), quad=None, linear=None, constant=0.0):
        self.m = int(m)
        if self.m < 1:
            raise ValueError("m must be >= 1")
        a_rows = []
        b_vals = []
        for pair in affine_pieces:
            a, b = pair
            a = np.asarray(a, dtype=float)
            if a.shape != (self.m,):
                raise ValueError(f"affine piece 'a' must have shape ({self.m},), got {a.shape}")
            a_rows.append(a)
            b_vals.append(float(b))
        self.pieces_a = np.array(a_rows, dtype=float) if a_rows else np.zeros((0, self.m))
        self.pieces_b = np.array(b_vals, dtype=float)
        if quad is not None:
            quad = np.array(quad, dtype=float)
            if quad.shape != (self.m, self.m):
                raise ValueError(f"quad must have shape ({self.m}, {self.m}), got {quad.shape}")
            if not np.allclose(quad, quad.T, rtol=0.0, atol=1e-10 * (1.0 + np.abs(quad).max())):
                raise ValueError("quad matrix must be symmetric")
            quad = 0.5 * (quad + quad.T)
        self.quad = quad
        if linear is not None:
            linear = np.array(linear, dtype=float)
            if linear.shape != (self.m,):
                raise ValueError(f"linear must have shape ({self.m},), got {linear.shape}")
        self.linear = linear
        self.constant = float(constant)
        for arr in (self.pieces_a, self.pieces_b, self.quad, self.linear):
            if arr is not None:
                arr.flags.writeable = False

    @property
    def n_pieces(self) -> int:
        return self.pieces_a.shape[0]

    def value(self, x: np.ndarray) -> float:
        return float(self.value_batch(np.asarray(x, dtype=float)[None, :])[0])

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        """Loss values at each row of the (n, m) array X."""
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.constant)
        if self.n_pieces:
            out += (X @ self.pieces_a.T + self.pieces_b).max(axis=1)
        if self.quad is not None:
            out += 0.5 * np.einsum("ij,ij->i", X @ self.quad, X)
        if self.linear is not None:
            out += X @ self.linear
        return out

    def own_interval_batch(self, i: int, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of the coordinate-i subgradient interval at each row of X.

        The interval of the max term is [min, max] of the i-th coefficients of
        the pieces tied with the maximum (relative tie tolerance); the smooth
        part shifts both endpoints.
        """
        X = np.asarray(X, dtype=float)
        smooth = np.zeros(X.shape[0])
        if self.quad is not None:
            smooth += X @ self.quad[i]
        if self.linear is not None:
            smooth += self.linear[i]
        if not self.n_pieces:
            return smooth.copy(), smooth.copy()
        vals = X @ self.pieces_a.T + self.pieces_b
        vmax = vals.max(axis=1, keepdims=True)
        active = vals >= vmax - TIE_TOL * (1.0 + np.abs(vmax))
        coeffs = np.broadcast_to(self.pieces_a[:, i], vals.shape)
        lo = np.where(active, coeffs, np.inf).min(axis=1)
        hi = np.where(active, coeffs, -np.inf).max(axis=1)
        return smooth + lo, smooth + hi

    def own_interval(self, i: int, x: np.ndarray) -> tuple[float, float]:
        lo, hi = self.own_interval_batch(i, np.asarray(x, dtype=float)[None, :])
        return float(lo[0]), float(hi[0])


class Game:
    """An m-player game over a box domain.

    Parameters
    ----------
    losses : sequence of PlayerLoss
        Loss of player i at position i.  Player i must be convex in
        coordinate i: ``quad[i, i] >= 0`` (the max-affine part always is).
    box : (m, 2) array, optional
        Per-coordinate [lo, hi] bounds; defaults to [-100, 100]^m.
    name : str, optional
        Label used in reports (set for builtin games).

    Attributes
    ----------
    lipschitz : (m,) array
        Per-player Lipschitz bound over the box:
        max_j ||a_j|| + ||Q||_2 * ||box radius|| + ||c||.
    """

    __slots__ = ("losses", "box", "name", "lipschitz")

    def __init__(self, losses, box=None, name: str = ""):
        self.losses = tuple(losses)
        if not self.losses:
            raise ValueError("a game needs at least one player")
        m = self.losses[0].m
        for i, loss in enumerate(self.losses):
            if loss.m != m:
                raise ValueError(f"loss {i} has dimension {loss.m}, expected {m}")
        if len(self.losses) != m:
            raise ValueError(f"{len(self.losses)} losses for an {m}-dimensional multistrategy")
        for i, loss in enumerate(self.losses):
            if loss.quad is not None and loss.quad[i, i] < 0.0:
                raise ConvexityError(
                    f"player {i}: quad[{i},{i}] = {loss.quad[i, i]} < 0, "
                    "loss is not convex in the player's own coordinate"
                )
        if box is None:
            box = [[-DEFAULT_BOX_HALF_WIDTH, DEFAULT_BOX_HALF_WIDTH]] * m
        box = np.array(box, dtype=float)
        if box.shape != (m, 2):
            raise ValueError(f"box must have shape ({m}, 2), got {box.shape}")
        if not np.all(box[:, 0] < box[:, 1]):
            raise ValueError("box must satisfy lo < hi in every coordinate")
        box.flags.writeable = False
        self.box = box
        self.name = name
        radius = np.abs(box).max(axis=1)
        lips = np.empty(m)
        for i, loss in enumerate(self.losses):
            bound = 0.0
            if loss.n_pieces:
                bound += float(np.linalg.norm(loss.pieces_a, axis=1).max())
            if loss.quad is not None:
                bound += float(np.linalg.norm(loss.quad, 2) * np.linalg.norm(radius))
            if loss.linear is not None:
                bound += float(np.linalg.norm(loss.linear))
            lips[i] = bound
        lips.flags.writeable = False
        self.lipschitz = lips

    @property
    def m(self) -> int:
        return len(self.losses)

    def as_point(self, x) -> np.ndarray:
        """Validate and return x as a finite (m,) float vector."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.m,):
            raise ValueError(f"point must have shape ({self.m},), got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("point has non-finite entries")
        return x

    def in_box(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.box[:, 0] - atol) and np.all(x <= self.box[:, 1] + atol))

    def clip_to_box(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.box[:, 0], self.box[:, 1])


def _check_player(game: Game, i: int) -> None:
    if not 0 <= i < game.m:
        raise IndexError(f"player index {i} out of range [0, {game.m})")


def evaluate(game: Game, i: int, x) -> float:
    """Loss of player i at multistrategy x."""
    _check_player(game, i)
    return game.losses[i].value(game.as_point(x))


def subgradient_interval(game: Game, i: int, x) -> SubgradientInterval:
    """Subdifferential of t -> f_i(x with x_i = t) at t = x_i.

    For the max-affine term this is the convex hull of the i-th coefficients
    of the active pieces; the smooth part shifts it.  Degenerate interval
    means f_i is differentiable in its own coordinate at x.
    """
    _check_player(game, i)
    lo, hi = game.losses[i].own_interval(i, game.as_point(x))
    return SubgradientInterval(lo, hi)


def residual_vector(game: Game, x, return_flags: bool = False):
    """Vector of own-coordinate derivatives, one entry per player.

    Entry i is f_i's derivative along coordinate i; at a kink the interval
    midpoint is used instead and the corresponding flag is set.  The root set
    of this map (with all flags clear or intervals containing zero) is the
    equilibrium set.
    """
    x = game.as_point(x)
    theta = np.empty(game.m)
    flags = np.zeros(game.m, dtype=bool)
    for i, loss in enumerate(game.losses):
        lo, hi = loss.own_interval(i, x)
        theta[i] = 0.5 * (lo + hi)
        scale = 1.0 + max(abs(lo), abs(hi))
        flags[i] = (hi - lo) > TIE_TOL * scale
    if return_flags:
        return theta, flags
    return theta


def equilibrium_gap(game: Game, x) -> np.ndarray:
    """Per-player distance from 0 to the own-coordinate subgradient interval.

    All entries are zero exactly when x is a Nash equilibrium.
    """
    x = game.as_point(x)
    gap = np.empty(game.m)
    for i, loss in enumerate(game.losses):
        lo, hi = loss.own_interval(i, x)
        gap[i] = 0.0 if lo <= 0.0 <= hi else min(abs(lo), abs(hi))
    return gap


def best_response_oracle(game: Game, i: int, x, grid_n: int = 2001) -> float:
    """Approximate minimizer of f_i over coordinate i with the others fixed.

    Scans grid_n equally spaced points across the box slice, then refines the
    best bracket by golden-section search.  Accuracy is no worse than the grid
    spacing and in practice far better.
    """
    _check_player(game, i)
    if grid_n < 3:
        raise ValueError("grid_n must be >= 3")
    x = game.as_point(x)
    lo, hi = game.box[i]
    ts = np.linspace(lo, hi, grid_n)
    X = np.tile(x, (grid_n, 1))
    X[:, i] = ts
    vals = game.losses[i].value_batch(X)
    j = int(np.argmin(vals))
    a = ts[max(j - 1, 0)]
    b = ts[min(j + 1, grid_n - 1)]

    def slice_val(t: float) -> float:
        xt = x.copy()
        xt[i] = t
        return game.losses[i].value(xt)

    return _golden_section(slice_val, a, b, tol=1e-11 * (1.0 + abs(a) + abs(b)))


def _golden_section(fun, a: float, b: float, tol: float, max_iter: int = 200) -> float:
    """Golden-section minimizer of a unimodal function on [a, b]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Builtin games
# ---------------------------------------------------------------------------


def _quad_game_parts(m: int, coupling: float, seed: int):
    """Row vectors g_i and targets for the strongly convex quadratic game.

    Player i's loss is (g_i . x - a_i)^2 with g_i = e_i - beta * (ones - e_i),
    beta = coupling / (m - 1).  The equilibrium solves G x = a and is chosen
    up front, so it is known exactly.
    """
    rng = np.random.default_rng(seed)
    target = rng.uniform(-2.0, 2.0, size=m)
    beta = coupling / (m - 1) if m > 1 else 0.0
    G = -beta * np.ones((m, m)) + (1.0 + beta) * np.eye(m)
    a = G @ target
    return G, a, target


def builtin_game(name: str, m: int = 5, coupling: float = 0.25, seed: int = 0) -> Game:
    """Construct a named builtin game.

    Names: ``cycle2`` (exact coordinate descent cycles), ``diverge2`` (it
    diverges), ``dm-maxfun`` (max-of-affine with hand-checked values),
    ``stall2`` (coordinate-stationary origin, joint descent exists),
    ``abs-contract`` (piecewise-linear contraction to the origin), ``quad-m``
    (m-player strongly convex quadratic with known equilibrium; accepts
    m/coupling/seed).
    """
    if name == "cycle2":
        # f1 = (x1 - x2)^2, f2 = (x1 + x2)^2
        return Game(
            [
                PlayerLoss(2, quad=[[2.0, -2.0], [-2.0, 2.0]]),
                PlayerLoss(2, quad=[[2.0, 2.0], [2.0, 2.0]]),
            ],
            name=name,
        )
    if name == "diverge2":
        # f1 = (x1 - 3 x2)^2, f2 = (x2 - x1/2)^2
        return Game(
            [
                PlayerLoss(2, quad=[[2.0, -6.0], [-6.0, 18.0]]),
                PlayerLoss(2, quad=[[0.5, -1.0], [-1.0, 2.0]]),
            ],
            name=name,
        )
    if name == "dm-maxfun":
        # Both players share max(2 x1 + x2, -x1 + x2 - 3).
        shared = [((2.0, 1.0), 0.0), ((-1.0, 1.0), -3.0)]
        return Game([PlayerLoss(2, shared), PlayerLoss(2, shared)], name=name)
    if name == "stall2":
        # Both players share max(2 x1 + x2, -x1 - x2); every point of the
        # line 3 x1 + 2 x2 = 0 is an equilibrium.
        shared = [((2.0, 1.0), 0.0), ((-1.0, -1.0), 0.0)]
        return Game([PlayerLoss(2, shared), PlayerLoss(2, shared)], name=name)
    if name == "abs-contract":
        # f1 = |x1 - 0.5 x2|, f2 = |x2 + 0.5 x1|; unique equilibrium (0, 0).
        return Game(
            [
                PlayerLoss(2, [((1.0, -0.5), 0.0), ((-1.0, 0.5), 0.0)]),
                PlayerLoss(2, [((0.5, 1.0), 0.0), ((-0.5, -1.0), 0.0)]),
            ],
            name=name,
        )
    if name == "quad-m":
        if m < 2:
            raise ValueError("quad-m needs m >= 2")
        G, a, _ = _quad_game_parts(m, coupling, seed)
        losses = []
        for i in range(m):
            g = G[i]
            # (g . x - a_i)^2 expanded: quad = 2 g g^T, linear = -2 a_i g.
            losses.append(
                PlayerLoss(m, quad=2.0 * np.outer(g, g), linear=-2.0 * a[i] * g, constant=a[i] ** 2)
            )
        return Game(losses, name=name)
    raise ValueError(f"unknown builtin game {name!r}; choose from {BUILTIN_NAMES}")


def distance_to_known_equilibrium(name: str, x, m: int = 5, coupling: float = 0.25, seed: int = 0):
    """Distance from x to the known equilibrium set of a builtin game.

    Returns None when no reference is available (dm-maxfun has no
    equilibrium: player 2's loss decreases without bound in x2).
    """
    x = np.asarray(x, dtype=float)
    if name in ("cycle2", "diverge2", "abs-contract"):
        return float(np.linalg.norm(x))
    if name == "stall2":
        # Equilibria fill the line 3 x1 + 2 x2 = 0.
        return float(abs(3.0 * x[0] + 2.0 * x[1]) / math.sqrt(13.0))
    if name == "quad-m":
        _, _, target = _quad_game_parts(m, coupling, seed)
        return float(np.linalg.norm(x - target))
    return None


# ---------------------------------------------------------------------------
# JSON game descriptions
# ---------------------------------------------------------------------------


def _require_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise GameSpecError(f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}")


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GameSpecError(f"{where} must be a number, got {type(value).__name__}")
    return float(value)


def _as_vector(value, m: int, where: str) -> list[float]:
    if not isinstance(value, list) or len(value) != m:
        raise GameSpecError(f"{where} must be a list of {m} numbers")
    return [_as_number(v, f"{where}[{k}]") for k, v in enumerate(value)]


def parse_game_spec(text: str) -> Game:
    """Parse a JSON game description.

    Schema::

        {"m": int, "box": [[lo, hi], ...], "players": [
            {"affine_pieces": [{"a": [...], "b": num}, ...],
             "quad": [[...], ...], "linear": [...], "constant": num}, ...]}

    "box" and all per-player keys are optional; unknown keys are rejected.
    Syntax errors report line and column; a non-convex quad reports the
    offending player.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameSpecError(f"invalid JSON: {exc.msg}", line=exc.lineno, col=exc.colno) from None
    if not isinstance(data, dict):
        raise GameSpecError("top level must be a JSON object")
    _require_keys(data, {"m", "box", "players"}, "top-level object")
    if "m" not in data or "players" not in data:
        raise GameSpecError('top-level object needs keys "m" and "players"')
    m = data["m"]
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise GameSpecError('"m" must be a positive integer')
    players = data["players"]
    if not isinstance(players, list) or len(players) != m:
        raise GameSpecError(f'"players" must be a list of {m} objects')

    box = None
    if "box" in data:
        raw = data["box"]
        if not isinstance(raw, list) or len(raw) != m:
            raise GameSpecError(f'"box" must be a list of {m} [lo, hi] pairs')
        box = [
            _as_vector(pair, 2, f"box[{k}]")
            for k, pair in enumerate(raw)
        ]
        for k, (lo, hi) in enumerate(box):
            if not lo < hi:
                raise GameSpecError(f"box[{k}] must satisfy lo < hi")

    losses = []
    for idx, spec in enumerate(players):
        where = f"players[{idx}]"
        if not isinstance(spec, dict):
            raise GameSpecError(f"{where} must be an object")
        _require_keys(spec, {"affine_pieces", "quad", "linear", "constant"}, where)
        pieces = []
        for j, piece in enumerate(spec.get("affine_pieces", [])):
            pw = f"{where}.affine_pieces[{j}]"
            if not isinstance(piece, dict):
                raise GameSpecError(f"{pw} must be an object")
            _require_keys(piece, {"a", "b"}, pw)
            if "a" not in piece:
                raise GameSpecError(f'{pw} needs key "a"')
            a = _as_vector(piece["a"], m, f"{pw}.a")
            b = _as_number(piece.get("b", 0.0), f"{pw}.b")
            pieces.append((a, b))
        quad = None
        if "quad" in spec:
            raw_q = spec["quad"]
            if not isinstance(raw_q, list) or len(raw_q) != m:
                raise GameSpecError(f"{where}.quad must be an {m}x{m} matrix")
            quad = [_as_vector(row, m, f"{where}.quad[{k}]") for k, row in enumerate(raw_q)]
        linear = _as_vector(spec["linear"], m, f"{where}.linear") if "linear" in spec else None
        constant = _as_number(spec.get("constant", 0.0), f"{where}.constant")
        try:
            losses.append(PlayerLoss(m, pieces, quad=quad, linear=linear, constant=constant))
        except ValueError as exc:
            raise GameSpecError(f"{where}: {exc}") from None
    try:
        return Game(losses, box=box)
    except ConvexityError:
        raise
    except ValueError as exc:
        raise GameSpecError(str(exc)) from None
