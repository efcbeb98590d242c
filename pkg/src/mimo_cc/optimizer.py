"""Max-min symmetric-rate beamformer design for single-group slots.

The problem: given one serving set with everyone's interference either
cache-removed (unicast) or riding on shared codeword beams (multicast),
choose transmit beams under a sum power budget to maximize the minimum
per-stream rate log(1 + SINR).

The algorithm alternates two monotone steps until the objective stalls:

1. receive update: per-stream MMSE combiners with the transmit side fixed.
   MMSE combining maximizes each stream's SINR individually, so no rate
   drops.
2. transmit update: successive convex approximation.  The signal power
   |h^H w|^2 is replaced by its first-order lower bound around the current
   iterate, 2 Re(cbar* h^H w) - |cbar|^2, which is tight at the iterate;
   interference stays exact.  The resulting surrogate min-rate is smoothed
   with a soft-min and climbed by projected gradient ascent with
   backtracking.  A candidate that does not improve the true objective is
   rejected, which enforces the nondecreasing trace by construction.

Beam layout: unicast problems carry one beam per (user, stream) pair, in
user-major order over the sorted serving set; multicast problems carry one
beam per stream index.  This matches the term order the plan builders emit
for single-group transmissions, so results can be zipped with plan terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateNullspace,
    InfeasibleInit,
    RankDeficient,
    ZeroMatrix,
)
from .channel import (
    BeamformerSet,
    equivalent_channel,
    multicast_zf_directions,
    receive_combiners,
    zf_beamformer,
    _fix_phase,
)
from .model import StreamId

__all__ = [
    "OptSchedule",
    "OptProblem",
    "OptResult",
    "optimize_beamformers",
    "evaluate_objective",
    "zf_initializer",
    "update_receivers",
]


@dataclass(frozen=True)
class OptSchedule:
    """Iteration control knobs, echoed into every result for reproducibility."""

    tol: float = 1e-4
    max_outer: int = 100
    max_inner: int = 8
    softmin_temperature_factor: float = 0.01


@dataclass(eq=False)
class OptProblem:
    """One serving set's max-min design problem."""

    mode: str                      # "unicast" or "multicast"
    users: tuple[int, ...]         # sorted serving set
    channels: tuple[np.ndarray, ...]  # per serving user, rx_antennas x tx_antennas
    streams: int                   # G
    noise_power: float
    power_budget: float

    def __post_init__(self):
        if self.mode not in ("unicast", "multicast"):
            raise ValueError(f"unsupported optimization mode {self.mode!r}")
        if len(self.channels) != len(self.users):
            raise ValueError("one channel matrix per serving user required")
        self.users = tuple(self.users)
        if list(self.users) != sorted(self.users):
            raise ValueError("serving set must be sorted")
        self._serving_cache = None
        self._mask_cache = None

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_streams(self) -> int:
        return self.num_users * self.streams

    @property
    def num_beams(self) -> int:
        if self.mode == "multicast":
            return self.streams
        return self.num_users * self.streams

    def stream_ids(self) -> list[StreamId]:
        return [
            StreamId(u, g)
            for u in self.users
            for g in range(1, self.streams + 1)
        ]

    def serving_beam_indices(self) -> np.ndarray:
        """For each stream (user-major order), the beam index carrying it."""
        if self._serving_cache is None:
            if self.mode == "multicast":
                idx = np.array(
                    [g for _ in self.users for g in range(self.streams)], dtype=int
                )
            else:
                idx = np.arange(self.num_streams, dtype=int)
            self._serving_cache = idx
        return self._serving_cache

    def interference_mask(self) -> np.ndarray:
        """mask[r, b] = True where beam b contributes interference to stream r."""
        if self._mask_cache is None:
            n_s, n_b = self.num_streams, self.num_beams
            mask = np.zeros((n_s, n_b), dtype=bool)
            serving = self.serving_beam_indices()
            if self.mode == "multicast":
                mask[:] = True
            else:
                for i in range(self.num_users):
                    mask[
                        i * self.streams : (i + 1) * self.streams,
                        i * self.streams : (i + 1) * self.streams,
                    ] = True
            mask[np.arange(n_s), serving] = False
            self._mask_cache = mask
        return self._mask_cache


@dataclass(eq=False)
class OptResult:
    beamformers: BeamformerSet
    sinrs: dict
    rates: dict
    objective: float
    trace: tuple[float, ...]
    iterations: int
    converged: bool
    schedule: OptSchedule


# ---------------------------------------------------------------------------
# rate evaluation on raw arrays
# ---------------------------------------------------------------------------


def _stream_rates(problem: OptProblem, W: np.ndarray, eq: np.ndarray) -> np.ndarray:
    """Per-stream ln(1 + SINR) for beams W (rows) and equivalent channels eq
    (rows, user-major stream order)."""
    cross = eq.conj() @ W.T
    powers = np.abs(cross) ** 2
    serving = problem.serving_beam_indices()
    signal = powers[np.arange(problem.num_streams), serving]
    interference = np.where(problem.interference_mask(), powers, 0.0).sum(axis=1)
    return np.log1p(signal / (interference + problem.noise_power))


def evaluate_objective(beamformers: BeamformerSet, problem: OptProblem):
    """Min-rate objective and the per-stream rate map for a beamformer set."""
    W = np.array([np.asarray(w) for w in beamformers.tx])
    ids = problem.stream_ids()
    eq = np.array([np.asarray(beamformers.eq[s]) for s in ids])
    rates = _stream_rates(problem, W, eq)
    rate_map = {s: float(r) for s, r in zip(ids, rates)}
    return float(rates.min()), rate_map


# ---------------------------------------------------------------------------
# initialization and receive update
# ---------------------------------------------------------------------------


def zf_initializer(problem: OptProblem):
    """Zero-forcing start: SVD combiners (unicast) or the joint codeword
    construction (multicast), uniform power split.  Degenerate geometry is
    reported as :class:`InfeasibleInit`."""
    g_tot = problem.streams
    try:
        if problem.mode == "unicast":
            eq_rows = []
            rx_rows = []
            for H in problem.channels:
                bank = receive_combiners(H, g_tot)
                for g in range(g_tot):
                    rx_rows.append(bank[:, g])
                    eq_rows.append(equivalent_channel(H, bank[:, g]))
            eq = np.array(eq_rows)
            share = problem.power_budget / problem.num_beams
            W = np.zeros((problem.num_beams, eq.shape[1]), dtype=complex)
            for i in range(problem.num_users):
                block = range(i * g_tot, (i + 1) * g_tot)
                for g in block:
                    others = [eq[b] for b in block if b != g]
                    W[g] = zf_beamformer(others, eq[g], share)
        else:
            directions = multicast_zf_directions(problem.channels, g_tot)
            share = problem.power_budget / problem.num_beams
            W = directions * math.sqrt(share)
            rx_rows = []
            eq_rows = []
            for H in problem.channels:
                effective = [H @ directions[g] for g in range(g_tot)]
                for g in range(g_tot):
                    others = [effective[gg] for gg in range(g_tot) if gg != g]
                    comb = zf_beamformer(others, effective[g], 1.0)
                    rx_rows.append(comb)
                    eq_rows.append(equivalent_channel(H, comb))
            eq = np.array(eq_rows)
    except (ZeroMatrix, DegenerateNullspace, RankDeficient) as exc:
        raise InfeasibleInit(f"zero-forcing start failed: {exc}") from exc
    return W, np.array(rx_rows), eq


def update_receivers(problem: OptProblem, W: np.ndarray):
    """MMSE combiners for all streams with the transmit side fixed; returns
    (rx, eq) arrays in user-major stream order."""
    g_tot = problem.streams
    rx_rows = []
    eq_rows = []
    for i, H in enumerate(problem.channels):
        if problem.mode == "multicast":
            bundle = W
        else:
            bundle = W[i * g_tot : (i + 1) * g_tot]
        received = H @ bundle.T
        cov = received @ received.conj().T + problem.noise_power * np.eye(H.shape[0])
        combiners = np.linalg.solve(cov, received)  # one column per stream
        for g in range(g_tot):
            u = combiners[:, g]
            norm = np.linalg.norm(u)
            if norm <= 1e-300:
                u = received[:, g] / max(np.linalg.norm(received[:, g]), 1e-300)
            else:
                u = u / norm
            u = _fix_phase(u)
            rx_rows.append(u)
            eq_rows.append(equivalent_channel(H, u))
    return np.array(rx_rows), np.array(eq_rows)


# ---------------------------------------------------------------------------
# transmit update: SCA surrogate climbed by projected gradient ascent
# ---------------------------------------------------------------------------


def _project_power(W: np.ndarray, budget: float) -> np.ndarray:
    total = float(np.sum(np.abs(W) ** 2))
    if total > budget:
        return W * math.sqrt(budget / total)
    return W


def _softmin(rates: np.ndarray, tau: float, axis=None):
    scaled = -rates / tau
    m = scaled.max(axis=axis, keepdims=axis is not None)
    out = -tau * (np.log(np.exp(scaled - m).sum(axis=axis)) + np.squeeze(m))
    return out


#: Relative step multipliers tried in each line-search round.
_STEP_GRID = np.array([4.0, 2.0, 1.0, 0.5, 0.25, 0.0625, 0.015625, 0.001953125])


def _transmit_update(problem, W, eq, tau, schedule, step_state):
    """One SCA round: climb the soft-min of the surrogate rates.

    Each inner round takes the surrogate gradient and scans a geometric grid
    of step sizes along it.  Points leaving the power ball are radially
    projected, which keeps every candidate's signal and interference terms
    closed-form in the step size, so the whole grid is evaluated in a few
    vector operations.
    """
    rows = np.arange(problem.num_streams)
    serving = problem.serving_beam_indices()
    mask = problem.interference_mask().astype(float)
    cbar = (eq.conj() @ W.T)[rows, serving]
    cbar_abs2 = np.abs(cbar) ** 2
    n0 = problem.noise_power
    budget = problem.power_budget

    W_cur = W
    current = None
    base = step_state["step"]
    for _ in range(schedule.max_inner):
        C0 = eq.conj() @ W_cur.T
        c0s = C0[rows, serving]
        num0 = 2.0 * (np.conj(cbar) * c0s).real - cbar_abs2
        A = (np.abs(C0) ** 2 * mask).sum(axis=1)
        den0 = A + n0
        rates0 = np.log1p(np.maximum(num0 / den0, -0.999))
        if current is None:
            current = _softmin(rates0, tau)

        # soft-min weights and the surrogate gradient at the current point
        scaled = -rates0 / tau
        m = scaled.max()
        weights = np.exp(scaled - m)
        weights /= weights.sum()
        total = np.maximum(den0 + num0, 1e-300)
        gamma = np.zeros((problem.num_streams, problem.num_beams), dtype=complex)
        gamma[rows, serving] = weights * cbar / total
        gamma += C0 * mask * (-(weights * num0 / (den0 * total)))[:, None]
        grad = gamma.T @ eq

        wnorm = float(np.linalg.norm(W_cur))
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= 1e-14 * max(1.0, wnorm):
            break
        if base <= 0.0:
            base = 0.3 * wnorm / gnorm

        # closed-form pieces along W_cur + s * grad, then radial projection
        steps = base * _STEP_GRID
        C1 = eq.conj() @ grad.T
        c1s = C1[rows, serving]
        a_lin = 2.0 * (np.conj(cbar) * c0s).real
        b_lin = 2.0 * (np.conj(cbar) * c1s).real
        B = 2.0 * ((C0.conj() * C1).real * mask).sum(axis=1)
        D = (np.abs(C1) ** 2 * mask).sum(axis=1)
        p0 = wnorm**2
        p1 = 2.0 * float(np.vdot(W_cur, grad).real)
        p2 = gnorm**2
        phi = p0 + p1 * steps + p2 * steps**2
        scale = np.minimum(1.0, np.sqrt(budget / np.maximum(phi, 1e-300)))
        num_grid = scale * (a_lin[:, None] + np.outer(b_lin, steps)) - cbar_abs2[:, None]
        den_grid = scale**2 * (
            A[:, None] + np.outer(B, steps) + np.outer(D, steps**2)
        ) + n0
        rate_grid = np.log1p(np.maximum(num_grid / den_grid, -0.999))
        values = _softmin(rate_grid, tau, axis=0)
        pick = int(np.argmax(values))
        if values[pick] <= current + 1e-15:
            base *= 0.25
            break
        s_best = steps[pick]
        W_cur = _project_power(W_cur + s_best * grad, budget)
        current = float(values[pick])
        base = s_best * 1.5
    step_state["step"] = base
    return W_cur


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def optimize_beamformers(
    problem: OptProblem,
    init=None,
    schedule: OptSchedule | None = None,
) -> OptResult:
    """Alternating max-min design; see the module docstring.

    ``init`` may supply (W, rx, eq) arrays; the default is the zero-forcing
    start.  Hitting the iteration cap returns converged=False rather than
    raising.
    """
    schedule = schedule or OptSchedule()
    if init is None:
        W, rx, eq = zf_initializer(problem)
    else:
        W, rx, eq = init
        W = np.array(W, dtype=complex)
        rx = np.array(rx)
        eq = np.array(eq)

    best = (float(_stream_rates(problem, W, eq).min()), W, rx, eq)
    trace = [best[0]]
    step_state = {"step": 0.0}
    converged = False
    iterations = 0

    for iterations in range(1, schedule.max_outer + 1):
        rx, eq = update_receivers(problem, W)
        obj_receive = float(_stream_rates(problem, W, eq).min())
        if obj_receive > best[0]:
            best = (obj_receive, W, rx, eq)
        tau = schedule.softmin_temperature_factor * max(obj_receive, 1e-3)
        W_cand = _transmit_update(problem, W, eq, tau, schedule, step_state)
        obj_cand = float(_stream_rates(problem, W_cand, eq).min())
        if obj_cand >= obj_receive:
            W = W_cand
            if obj_cand > best[0]:
                best = (obj_cand, W_cand, rx, eq)
        else:
            # Reject the transmit step and force shorter moves next round;
            # the receive-side gain is kept either way.
            step_state["step"] *= 0.25
        previous = trace[-1]
        trace.append(best[0])
        if abs(best[0] - previous) <= schedule.tol * max(abs(previous), 1e-12):
            converged = True
            break

    objective, W, rx, eq = best
    rates = _stream_rates(problem, W, eq)
    ids = problem.stream_ids()
    signal_map = {}
    cross = eq.conj() @ W.T
    powers = np.abs(cross) ** 2
    serving = problem.serving_beam_indices()
    interference = np.where(problem.interference_mask(), powers, 0.0).sum(axis=1)
    for r, s in enumerate(ids):
        signal_map[s] = float(
            powers[r, serving[r]] / (interference[r] + problem.noise_power)
        )
    bundle = BeamformerSet(
        tx=tuple(W[b] for b in range(problem.num_beams)),
        rx={s: rx[r] for r, s in enumerate(ids)},
        eq={s: eq[r] for r, s in enumerate(ids)},
        noise_power=problem.noise_power,
        power_budget=problem.power_budget,
    )
    bundle.validate()
    return OptResult(
        beamformers=bundle,
        sinrs=signal_map,
        rates={s: float(r) for s, r in zip(ids, rates)},
        objective=objective,
        trace=tuple(trace),
        iterations=iterations,
        converged=converged,
        schedule=schedule,
    )
