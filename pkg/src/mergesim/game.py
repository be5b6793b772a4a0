"""Game-theoretic merge decisions: bimatrix payoffs, equilibria and quantal response.

The negotiation between a cruising-lane ego and the passing-lane follower is
a 2x2 bimatrix game.  Ego payoffs weigh projected acceleration against
crash-avoidance decelerations (entered as penalties) plus a lane bias that
rewards staying in the cruising lane; follower payoffs weigh its own
acceleration against its crash risks.  Equilibria come from Lemke-Howson
complementary pivoting with a support-enumeration fallback for degenerate
games; action probabilities follow a quantal response with a rationality
temperature that relaxes over negotiation time toward a density-dependent
asymptote.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .longitudinal import (
    DEFAULT_IDM,
    AccelProjection,
    IdmParams,
    drac,
    project_accelerations,
)
from .scene import ActorState, RoleAssignment

__all__ = [
    "Action", "Decision", "MbrgtParams", "PayoffPair", "Equilibrium",
    "build_payoffs", "lemke_howson", "support_enumeration",
    "qre_probabilities", "alpha_from_density", "beta_schedule",
    "mbrgt_decide", "drac",
]

_PIVOT_LIMIT = 512  # complementary pivot steps before declaring degeneracy


class Action(enum.IntEnum):
    """Ego action; integer value doubles as the payoff-matrix row index."""

    KEEP_STRAIGHT = 0
    CHANGE_LANES = 1


class FollowerAction(enum.IntEnum):
    """Passing-lane follower action; value is the payoff-matrix column index."""

    NO_YIELD = 0
    YIELD = 1


@dataclass(frozen=True)
class Decision:
    """Outcome of one decision evaluation."""

    action: Action
    probability_change: float  # quantal-response probability of changing lanes

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability_change <= 1.0:
            raise ValueError("probability_change must be in [0, 1]")


@dataclass(frozen=True)
class MbrgtParams:
    """Payoff weights and quantal-response schedule of the game model.

    w1..w5 weigh the ego's acceleration, its three crash-avoidance terms and
    the lane bias; u1..u3 weigh the follower's acceleration and crash terms.
    beta(t) = beta_min + (alpha - beta_min) * exp(-delta_r * (t - 1)) with
    alpha a polynomial in traffic density, coefficients ``m_coeffs``.
    """

    w1: float
    w2: float
    w3: float
    w4: float
    w5: float
    u1: float
    u2: float
    u3: float
    beta_min: float = 1.0
    delta_r: float = 0.0  # 1/s, relaxation rate of the temperature schedule
    m_coeffs: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0, 0.0)
    mode: str = "deterministic"  # or "stochastic"

    def __post_init__(self) -> None:
        if self.beta_min <= 0.0:
            raise ValueError("beta_min must be > 0")
        if self.delta_r < 0.0:
            raise ValueError("delta_r must be >= 0")
        if self.mode not in ("deterministic", "stochastic"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def ego_weights(self) -> tuple[float, float, float, float, float]:
        return (self.w1, self.w2, self.w3, self.w4, self.w5)

    def follower_weights(self) -> tuple[float, float, float]:
        return (self.u1, self.u2, self.u3)


@dataclass(frozen=True)
class PayoffPair:
    """Row-player (ego) and column-player (follower) payoff matrices."""

    ego: np.ndarray
    follower: np.ndarray


def build_payoffs(proj: AccelProjection, params: MbrgtParams,
                  lag0_in_cruising: bool = True) -> PayoffPair:
    """Assemble the 2x2 bimatrix payoffs from an acceleration projection.

    Crash-avoidance decelerations enter as penalties.  The lane-bias term is
    w5 * lambda1 * lambda2: lambda1 is +1 on the keep row and -1 on the
    change row, lambda2 is +1 when the ego's target would be the passing
    lane (it currently cruises) and -1 otherwise, so the bias always pushes
    toward keeping the cruising lane.
    """
    lam1 = np.array([[1.0], [-1.0]])  # per ego action, broadcast over columns
    lam2 = 1.0 if lag0_in_cruising else -1.0
    ego = (params.w1 * proj.a_lag0
           - params.w2 * proj.drac_lag0_lead1
           - params.w3 * proj.drac_lag1_lag0
           - params.w4 * proj.drac_lag0_lead0
           + params.w5 * lam1 * lam2)
    follower = (params.u1 * proj.a_lag1
                - params.u2 * proj.drac_lag1_lead1
                - params.u3 * proj.drac_lag1_lag0)
    return PayoffPair(ego=ego, follower=follower)


class Equilibrium(NamedTuple):
    """Mixed-strategy profile plus the solver path that produced it."""

    row: np.ndarray
    col: np.ndarray
    method: str  # "lemke-howson" or "support-enumeration"


class DegenerateGameError(RuntimeError):
    """Raised internally when complementary pivoting cycles or stalls."""


def _best_response_gap(A: np.ndarray, B: np.ndarray,
                       x: np.ndarray, y: np.ndarray) -> float:
    """Largest payoff either player forgoes by not deviating to a pure strategy."""
    row_gain = float(np.max(A @ y) - x @ A @ y)
    col_gain = float(np.max(x @ B) - x @ B @ y)
    return max(row_gain, col_gain)


def _pivot(tableau: np.ndarray, basis: list[int], entering: int) -> int:
    """One min-ratio pivot; returns the leaving label.

    Ties in the ratio test break on the lowest row index, which keeps the
    walk deterministic on degenerate games.
    """
    column = tableau[:, entering]
    rhs = tableau[:, -1]
    candidates = np.flatnonzero(column > 1e-12)
    if candidates.size == 0:
        raise DegenerateGameError("unbounded pivot column")
    ratios = rhs[candidates] / column[candidates]
    row = int(candidates[int(np.argmin(ratios))])
    tableau[row] /= tableau[row, entering]
    for r in range(tableau.shape[0]):
        if r != row and tableau[r, entering] != 0.0:
            tableau[r] -= tableau[r, entering] * tableau[row]
    leaving = basis[row]
    basis[row] = entering
    return leaving


def _lemke_howson_pivoting(A: np.ndarray, B: np.ndarray,
                           initial_label: int) -> tuple[np.ndarray, np.ndarray]:
    """Complementary pivoting on the pair of best-response polytopes.

    Labels 0..m-1 are row strategies, m..m+n-1 column strategies.  In the
    row tableau label k < m indexes the structural variable x_k and label
    m+j the slack of column constraint j; the column tableau mirrors this
    with slacks r_i for i < m and structural y_j for labels m+j.
    """
    m, n = A.shape
    shift = min(A.min(), B.min())
    A = A - shift + 1.0  # strictly positive payoffs keep the polytopes bounded
    B = B - shift + 1.0

    row_tab = np.hstack([B.T, np.eye(n), np.ones((n, 1))])
    col_tab = np.hstack([np.eye(m), A, np.ones((m, 1))])
    row_basis = [m + j for j in range(n)]
    col_basis = list(range(m))

    entering = initial_label
    in_row_tableau = initial_label < m
    for _ in range(_PIVOT_LIMIT):
        if in_row_tableau:
            leaving = _pivot(row_tab, row_basis, entering)
        else:
            leaving = _pivot(col_tab, col_basis, entering)
        if leaving == initial_label:
            break
        entering = leaving
        in_row_tableau = not in_row_tableau
    else:
        raise DegenerateGameError("pivot limit exceeded")

    x = np.zeros(m)
    for r, label in enumerate(row_basis):
        if label < m:
            x[label] = row_tab[r, -1]
    y = np.zeros(n)
    for r, label in enumerate(col_basis):
        if label >= m:
            y[label - m] = col_tab[r, -1]
    if x.sum() <= 0.0 or y.sum() <= 0.0:
        raise DegenerateGameError("empty strategy support")
    return x / x.sum(), y / y.sum()


def support_enumeration(A: np.ndarray, B: np.ndarray,
                        tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """First Nash equilibrium found by enumerating equal-size supports.

    Supports are scanned in lexicographic order, smallest first, so the
    result is deterministic.  Intended as the fallback for games where
    pivoting degenerates; exhaustive, so only sensible for small matrices.
    """
    m, n = A.shape
    scale = max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))
    eps = tol * scale

    def supports(size: int, count: int):
        def rec(start: int, chosen: list[int]):
            if len(chosen) == size:
                yield tuple(chosen)
                return
            for k in range(start, count):
                chosen.append(k)
                yield from rec(k + 1, chosen)
                chosen.pop()
        yield from rec(0, [])

    for size in range(1, min(m, n) + 1):
        for rows in supports(size, m):
            for cols in supports(size, n):
                x = _support_solve(B.T, cols, rows, m, eps)
                if x is None:
                    continue
                y = _support_solve(A, rows, cols, n, eps)
                if y is None:
                    continue
                if _best_response_gap(A, B, x, y) <= eps:
                    return x, y
    raise DegenerateGameError("support enumeration found no equilibrium")


def _support_solve(M: np.ndarray, indiff_rows: Sequence[int],
                   support_cols: Sequence[int], dim: int,
                   eps: float) -> Optional[np.ndarray]:
    """Mixed strategy over ``support_cols`` equalizing M's rows in ``indiff_rows``."""
    k = len(support_cols)
    lhs = np.zeros((k + 1, k + 1))
    rhs = np.zeros(k + 1)
    sub = M[np.ix_(indiff_rows, support_cols)]
    lhs[:k, :k] = sub
    lhs[:k, k] = -1.0  # common payoff value
    lhs[k, :k] = 1.0
    rhs[k] = 1.0
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError:
        return None
    weights = sol[:k]
    if np.any(weights < -eps):
        return None
    weights = np.clip(weights, 0.0, None)
    total = weights.sum()
    if total <= 0.0:
        return None
    full = np.zeros(dim)
    full[list(support_cols)] = weights / total
    return full


def lemke_howson(A: np.ndarray, B: np.ndarray,
                 initial_label: int = 0) -> Equilibrium:
    """Nash equilibrium of a bimatrix game.

    Runs Lemke-Howson complementary pivoting from ``initial_label`` (default
    the first row strategy) and verifies the result is an epsilon-Nash
    profile at scale-aware tolerance; on degeneracy or failed verification
    it falls back to support enumeration.  The returned ``method`` reports
    which path produced the profile.

    Args:
        A: row-player payoffs, shape (m, n), finite.
        B: column-player payoffs, same shape.
        initial_label: label whose duplication starts the pivot walk;
            0..m-1 are row strategies, m..m+n-1 column strategies.

    Returns:
        Equilibrium(row, col, method) with probability vectors summing to 1.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape != B.shape:
        raise ValueError("payoff matrices must share a 2-d shape")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("payoff matrices must be finite")
    m, n = A.shape
    if not 0 <= initial_label < m + n:
        raise ValueError(f"initial_label must be in [0, {m + n})")

    eps = 1e-9 * max(1.0, float(np.max(np.abs(A))), float(np.max(np.abs(B))))
    try:
        x, y = _lemke_howson_pivoting(A, B, initial_label)
        if _best_response_gap(A, B, x, y) <= eps:
            return Equilibrium(row=x, col=y, method="lemke-howson")
    except DegenerateGameError:
        pass
    x, y = support_enumeration(A, B)
    return Equilibrium(row=x, col=y, method="support-enumeration")


def qre_probabilities(expected_payoffs: Sequence[float], beta: float) -> np.ndarray:
    """Quantal-response action probabilities, softmax of payoffs over ``beta``.

    Computed with max-subtraction so large payoff scales cannot overflow.
    """
    if beta <= 0.0:
        raise ValueError("beta must be > 0")
    z = np.asarray(expected_payoffs, dtype=float) / beta
    z = z - z.max()
    weights = np.exp(z)
    return weights / weights.sum()


def alpha_from_density(k: float, m_coeffs: Sequence[float]) -> float:
    """Temperature asymptote as a polynomial in traffic density k [veh/km]."""
    if k < 0.0:
        raise ValueError("density must be >= 0")
    return float(sum(c * k ** i for i, c in enumerate(m_coeffs)))


def beta_schedule(t: float, beta_min: float, delta_r: float, alpha: float) -> float:
    """Rationality temperature after t >= 1 seconds of negotiation."""
    if t < 1.0:
        raise ValueError("negotiation time starts at 1")
    if beta_min <= 0.0:
        raise ValueError("beta_min must be > 0")
    if delta_r < 0.0:
        raise ValueError("delta_r must be >= 0")
    return beta_min + (alpha - beta_min) * math.exp(-delta_r * (t - 1.0))


def mbrgt_decide(scene: Sequence[ActorState], roles: RoleAssignment,
                 idm: IdmParams = DEFAULT_IDM,
                 params: Optional[MbrgtParams] = None,
                 t: float = 1.0, density_veh_km: float = 0.0,
                 rng: Optional[np.random.Generator] = None) -> Decision:
    """One game-theoretic lane-change decision for the ego in ``roles``.

    Projects the 2x2 accelerations, builds payoffs, solves for an
    equilibrium and evaluates the ego's expected payoffs against the
    follower's equilibrium mixture.  Deterministic mode returns the argmax
    action (ties keep straight); stochastic mode samples from the
    quantal-response probabilities and requires ``rng``.

    Args:
        scene: all actor states at the decision instant.
        roles: negotiation roles; lag0 must be in the cruising lane.
        idm: car-following parameters for the projection.
        params: payoff weights and schedule; required.
        t: negotiation time in seconds, >= 1.
        density_veh_km: passing-lane density feeding the temperature asymptote.
        rng: random generator, only used in stochastic mode.

    Returns:
        Decision with the chosen action and the change probability at beta(t).
    """
    if params is None:
        raise ValueError("params is required")
    proj = project_accelerations(scene, roles, idm)
    by_id = {actor.id: actor for actor in scene}
    lag0_in_cruising = by_id[roles.lag0].lane == 0
    payoffs = build_payoffs(proj, params, lag0_in_cruising)
    eq = lemke_howson(payoffs.ego, payoffs.follower)
    expected = payoffs.ego @ eq.col

    alpha = alpha_from_density(density_veh_km, params.m_coeffs)
    beta = beta_schedule(t, params.beta_min, params.delta_r, alpha)
    probs = qre_probabilities(expected, beta)
    if params.mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic mode requires an rng")
        action = Action(int(rng.choice(2, p=probs)))
    else:
        action = Action(int(np.argmax(expected)))
    return Decision(action=action, probability_change=float(probs[Action.CHANGE_LANES]))
