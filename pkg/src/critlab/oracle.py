"""Exact finite-MDP tools: value iteration, reward shaping, invariance checks.

These give ground truth for the claims the guidance module relies on: shaping
by a potential difference, or a positive affine map of the reward, leaves the
set of optimal actions in every state unchanged.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .config import EnvConfig, SenseParams
from .guidance import HelperCoefficients, PotentialFit, helper_reward, is_potential_based
from .senses import EyesightStatus
from .world import Action, Pose, relative_bearing

STOCHASTIC_ATOL = 1e-12
# smallest Q gap treated as a strict preference
TIE_ATOL = 1e-9
EPS = np.finfo(float).eps
GRID_MOVES = ((0, 1), (0, -1), (1, 0), (-1, 0), (0, 0))    # N, S, E, W, no-op
MAX_ENUMERATED_POLICIES = 200_000


@dataclass(frozen=True)
class TabularMDP:
    transitions: np.ndarray     # (S, A, S), rows sum to 1
    rewards: np.ndarray         # (S, A)
    gamma: float

    def __post_init__(self):
        T = np.asarray(self.transitions, dtype=float)
        R = np.asarray(self.rewards, dtype=float)
        object.__setattr__(self, "transitions", T)
        object.__setattr__(self, "rewards", R)
        if T.ndim != 3 or T.shape[0] != T.shape[2] or T.shape[0] == 0 or T.shape[1] == 0:
            raise ValueError(f"transitions must have shape (S, A, S), got {T.shape}")
        if R.shape != T.shape[:2]:
            raise ValueError(f"rewards shape {R.shape} does not match transitions {T.shape[:2]}")
        if (T < 0).any() or not np.allclose(T.sum(axis=2), 1.0, rtol=0, atol=STOCHASTIC_ATOL):
            raise ValueError("transition rows must be non-negative and sum to 1")
        if not np.isfinite(R).all():
            raise ValueError("rewards must be finite")
        if not 0.0 <= self.gamma:
            raise ValueError("gamma must be non-negative")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def with_rewards(self, rewards: np.ndarray) -> TabularMDP:
        return TabularMDP(self.transitions, rewards, self.gamma)


@dataclass
class Solution:
    V: np.ndarray
    Q: np.ndarray
    greedy: list[frozenset[int]]
    residuals: list[float] = field(default_factory=list)
    tie_tol: np.ndarray | None = None    # per-state bound on the error of Q


def greedy_sets(Q: np.ndarray, tie_tol=TIE_ATOL) -> list[frozenset[int]]:
    """Per-state set of actions whose Q is within ``tie_tol`` of the best."""
    best = Q.max(axis=1)
    tol = np.broadcast_to(tie_tol, best.shape)
    return [frozenset(np.flatnonzero(Q[s] >= best[s] - tol[s]).tolist()) for s in range(len(Q))]


def bellman_q(mdp: TabularMDP, V: np.ndarray) -> np.ndarray:
    return mdp.rewards + mdp.gamma * mdp.transitions @ V


def value_iteration(mdp: TabularMDP, tol: float = 1e-11, max_iter: int = 1_000_000) -> Solution:
    """Iterate V <- max_a Q until the sup-norm residual drops below ``tol``.

    With very large rewards or potentials the residual bottoms out at the
    float64 resolution of V; iteration then stops once it stops shrinking.
    """
    if not mdp.gamma < 1.0:
        raise ValueError("value iteration needs gamma < 1")
    V = np.zeros(mdp.n_states)
    residuals: list[float] = []
    for _ in range(max_iter):
        Q = bellman_q(mdp, V)
        V_new = Q.max(axis=1)
        res = float(np.abs(V_new - V).max())
        V = V_new
        floor = 64 * EPS * max(1.0, float(np.abs(V).max()))
        stalled = bool(residuals) and res >= residuals[-1] and res < 1e3 * floor
        residuals.append(res)
        if res < tol or stalled:
            break
    else:
        raise RuntimeError(f"value iteration did not converge in {max_iter} sweeps")
    Q = bellman_q(mdp, V)
    # |Q - Q*| <= gamma/(1-gamma) * residual, plus rounding in each row
    bound = mdp.gamma / (1.0 - mdp.gamma) * residuals[-1]
    tie_tol = np.maximum(TIE_ATOL, 4 * bound + 64 * EPS * np.abs(Q).max(axis=1))
    return Solution(V, Q, greedy_sets(Q, tie_tol), residuals, tie_tol)


def policy_values(mdp: TabularMDP, policy) -> np.ndarray:
    """Exact V of a deterministic policy by a linear solve."""
    idx = np.arange(mdp.n_states)
    policy = np.asarray(policy)
    P = mdp.transitions[idx, policy]
    r = mdp.rewards[idx, policy]
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P, r)


def enumerate_policies(mdp: TabularMDP, atol: float = 1e-9) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    """Brute force: V* as the elementwise max over every deterministic policy.

    Returns V* and the list of policies attaining it in every state.
    """
    n = mdp.n_actions ** mdp.n_states
    if n > MAX_ENUMERATED_POLICIES:
        raise ValueError(f"{n} policies is too many to enumerate")
    policies = list(itertools.product(range(mdp.n_actions), repeat=mdp.n_states))
    values = np.array([policy_values(mdp, p) for p in policies])
    v_star = values.max(axis=0)
    optimal = [p for p, v in zip(policies, values) if np.all(v >= v_star - atol)]
    return v_star, optimal


# -- shaping -------------------------------------------------------------------

def potential_shaping(phi: np.ndarray, gamma: float, n_actions: int) -> np.ndarray:
    """F(s, a, s') = gamma * phi(s') - phi(s), broadcast to (S, A, S)."""
    phi = np.asarray(phi, dtype=float)
    F = gamma * phi[None, None, :] - phi[:, None, None]
    return np.broadcast_to(F, (len(phi), n_actions, len(phi)))


def apply_shaping(mdp: TabularMDP, phi: np.ndarray | None = None, F: np.ndarray | None = None) -> TabularMDP:
    """R'(s, a) = R(s, a) + E_{s'}[F(s, a, s')]; pass exactly one of phi or F."""
    if (phi is None) == (F is None):
        raise ValueError("pass exactly one of phi or F")
    if phi is not None:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (mdp.n_states,):
            raise ValueError(f"phi must have shape ({mdp.n_states},)")
        F = potential_shaping(phi, mdp.gamma, mdp.n_actions)
    F = np.asarray(F, dtype=float)
    if F.shape != mdp.transitions.shape:
        raise ValueError(f"F must have shape {mdp.transitions.shape}")
    return mdp.with_rewards(mdp.rewards + (mdp.transitions * F).sum(axis=2))


@dataclass
class InvarianceReport:
    policies_equal: bool
    max_identity_error: float
    differing_states: list[int]

    def to_dict(self) -> dict:
        return {"policies_equal": self.policies_equal, "max_identity_error": self.max_identity_error,
                "differing_states": self.differing_states}


def _compare(a: Solution, b: Solution, expected_q: np.ndarray) -> InvarianceReport:
    # both tables use the looser of the two tolerances, so a tie is a tie in both
    tol = np.maximum(a.tie_tol, b.tie_tol)
    ga, gb = greedy_sets(a.Q, tol), greedy_sets(b.Q, tol)
    differ = [s for s, (x, y) in enumerate(zip(ga, gb)) if x != y]
    return InvarianceReport(not differ, float(np.abs(b.Q - expected_q).max()), differ)


def policy_invariance_check(mdp: TabularMDP, phi=None, F=None, tol: float = 1e-11) -> InvarianceReport:
    """Solve the MDP with and without shaping; compare greedy sets and Q' = Q - phi.

    For an arbitrary F the identity error is measured against Q itself.
    """
    base = value_iteration(mdp, tol)
    shaped = value_iteration(apply_shaping(mdp, phi=phi, F=F), tol)
    shift = np.asarray(phi, dtype=float)[:, None] if phi is not None else 0.0
    return _compare(base, shaped, base.Q - shift)


def linear_transform_check(mdp: TabularMDP, scale: float, shift: float, tol: float = 1e-11) -> InvarianceReport:
    """R' = scale * R + shift must give Q' = scale * Q + shift / (1 - gamma)."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    base = value_iteration(mdp, tol)
    moved = value_iteration(mdp.with_rewards(scale * mdp.rewards + shift), tol)
    return _compare(base, moved, scale * base.Q + shift / (1.0 - mdp.gamma))


# -- generators ------------------------------------------------------------------

def random_gridworld(rng, size: int = 5, slip: float = 0.1, gamma: float = 0.9) -> TabularMDP:
    """size x size grid; N/S/E/W/no-op, walls block; rewards drawn from {-1, 0, 1}.

    With probability ``slip`` the executed move is drawn uniformly from all
    five actions instead of the chosen one.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    n, k = size * size, len(GRID_MOVES)
    dest = np.empty((n, k), dtype=int)
    for s in range(n):
        x, y = divmod(s, size)
        for a, (dx, dy) in enumerate(GRID_MOVES):
            nx, ny = min(max(x + dx, 0), size - 1), min(max(y + dy, 0), size - 1)
            dest[s, a] = nx * size + ny
    T = np.zeros((n, k, n))
    for s in range(n):
        for a in range(k):
            T[s, a, dest[s, a]] += 1.0 - slip
            for b in range(k):
                T[s, a, dest[s, b]] += slip / k
    R = rng.integers(-1, 2, size=(n, k)).astype(float)
    return TabularMDP(T, R, gamma)


def chain_mdp(gamma: float = 0.5) -> TabularMDP:
    """Two states; action 0 stays, action 1 moves to the absorbing goal.

    Reward 1 per step spent in the goal, 0 elsewhere.
    """
    T = np.zeros((2, 2, 2))
    T[0, 0, 0] = T[0, 1, 1] = 1.0
    T[1, :, 1] = 1.0
    R = np.array([[0.0, 0.0], [1.0, 1.0]])
    return TabularMDP(T, R, gamma)


# -- helper reward on a discretized task --------------------------------------------

HELPER_ACTIONS = tuple((a_f, a_r) for a_f in (0.0, 1.0) for a_r in (-1.0, 0.0, 1.0))


@dataclass
class HelperProbe:
    n_states: int
    n_actions: int
    fit: PotentialFit
    max_violation: float

    def to_dict(self) -> dict:
        return {"n_states": self.n_states, "n_actions": self.n_actions,
                "representable": self.fit.representable, "residual": self.fit.residual,
                "max_violation": self.max_violation}


def helper_shaping_probe(cells: int = 6, headings: int = 8, gamma: float = 0.99,
                         env: EnvConfig | None = None, params: SenseParams | None = None,
                         coeffs: HelperCoefficients = HelperCoefficients()) -> HelperProbe:
    """Is the helper reward a potential difference on a coarse grid version of the task?

    States are (cell, heading) with the target fixed at the room center; a_r
    rotates by one heading step and a_f moves one cell along the heading.
    """
    env = env or EnvConfig()
    params = params or SenseParams()
    side = env.room_side
    target = (side / 2, side / 2)
    half = math.radians(params.fov_half_angle_deg)
    n = cells * cells * headings
    index = lambda i, j, h: (i * cells + j) * headings + h  # noqa: E731
    F = np.zeros((n, len(HELPER_ACTIONS), n))
    mask = np.zeros(F.shape, dtype=bool)
    for i, j, h in itertools.product(range(cells), range(cells), range(headings)):
        heading = 2 * math.pi * h / headings
        pose = Pose((i + 0.5) * side / cells, (j + 0.5) * side / cells, heading)
        b = relative_bearing(pose, target)
        status = EyesightStatus.OUT if abs(b) > half else (EyesightStatus.LEFT if b >= 0 else EyesightStatus.RIGHT)
        s = index(i, j, h)
        for a, (a_f, a_r) in enumerate(HELPER_ACTIONS):
            h2 = (h + int(a_r)) % headings
            theta = 2 * math.pi * h2 / headings
            di, dj = (round(math.cos(theta)), round(math.sin(theta))) if a_f else (0, 0)
            i2, j2 = min(max(i + di, 0), cells - 1), min(max(j + dj, 0), cells - 1)
            s2 = index(i2, j2, h2)
            F[s, a, s2] = helper_reward(status, Action(a_f, a_r), coeffs)
            mask[s, a, s2] = True
    fit = is_potential_based(F, gamma, mask)
    phi = fit.phi
    pred = gamma * phi[None, None, :] - phi[:, None, None]
    violation = float(np.abs(np.where(mask, F - pred, 0.0)).max())
    return HelperProbe(n, len(HELPER_ACTIONS), fit, violation)


# -- full report -------------------------------------------------------------------

def oracle_report(seed: int = 0, n_worlds: int = 20, phi_scale: float = 1.0) -> dict:
    """Machine-readable summary of every oracle check, as printed by the CLI."""
    rng = np.random.default_rng(seed)
    worlds = []
    for w in range(n_worlds):
        mdp = random_gridworld(rng)
        phi = rng.normal(size=mdp.n_states) * phi_scale
        inv = policy_invariance_check(mdp, phi=phi)
        big = policy_invariance_check(mdp, phi=phi * 1e6)
        a, b = float(rng.uniform(0.1, 5.0)), float(rng.uniform(-5.0, 5.0))
        aff = linear_transform_check(mdp, a, b)
        worlds.append({"world": w, "potential": inv.to_dict(), "potential_x1e6": big.to_dict(),
                       "affine": {"scale": a, "shift": b, **aff.to_dict()}})
    ctrl = random_gridworld(rng)
    F = np.zeros(ctrl.transitions.shape)
    F[0, 0, :] = 1.0
    negative = policy_invariance_check(ctrl, F=F).to_dict()
    tiny = chain_mdp()
    v_star, _ = enumerate_policies(tiny)
    enum_err = float(np.abs(v_star - value_iteration(tiny).V).max())
    return {
        "seed": seed,
        "worlds": worlds,
        "all_policies_equal": all(w["potential"]["policies_equal"] and w["potential_x1e6"]["policies_equal"]
                                  and w["affine"]["policies_equal"] for w in worlds),
        "max_potential_identity_error": max(w["potential"]["max_identity_error"] for w in worlds),
        "max_affine_identity_error": max(w["affine"]["max_identity_error"] for w in worlds),
        "negative_control": negative,
        "enumeration_vs_value_iteration": enum_err,
        "helper_probe": helper_shaping_probe().to_dict(),
    }


__all__ = [
    "HelperProbe", "InvarianceReport", "Solution", "TabularMDP", "apply_shaping", "bellman_q",
    "chain_mdp", "enumerate_policies", "greedy_sets", "helper_shaping_probe", "linear_transform_check",
    "oracle_report", "policy_invariance_check", "policy_values", "potential_shaping", "random_gridworld",
    "value_iteration",
]
