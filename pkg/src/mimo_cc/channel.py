"""Random MIMO channels and the beamforming linear algebra.

Conventions used throughout:

* channel matrices are ``rx_antennas x tx_antennas`` complex arrays, one per
  user, with i.i.d. circularly-symmetric unit-variance Gaussian entries;
* beamformers are 1-D complex vectors; collections of beams are stacked as
  rows;
* every unit vector returned here has its first significant entry rotated to
  be real positive, so repeated runs and serialized results are stable;
* equivalent (post-combining) channels are h = H^H u, and a transmit beam w
  is received at that stream with amplitude h^H w.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateNullspace,
    ModeMismatch,
    RankDeficient,
    SingularCovariance,
    ZeroMatrix,
)
from .model import CodewordId, NetworkConfig, StreamId, SubpacketId
from .schemes import TransmissionVector

__all__ = [
    "ChannelRealization",
    "BeamformerSet",
    "generate_channel",
    "check_ranks",
    "strongest_eigenmode_receiver",
    "receive_combiners",
    "equivalent_channel",
    "zf_beamformer",
    "mmse_receiver",
    "compute_sinrs",
    "zf_beamformer_set",
    "multicast_zf_directions",
    "save_channel",
    "load_channel",
]

_PHASE_TOL = 1e-12


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate so the first entry of significant magnitude is real positive."""
    scale = np.max(np.abs(v))
    if scale == 0.0:
        return v
    for x in v:
        if abs(x) > _PHASE_TOL * scale:
            return v * (x.conjugate() / abs(x))
    return v


def _unit(v: np.ndarray, err: str) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm <= 1e-300:
        raise ZeroMatrix(err)
    return _fix_phase(v / norm)


# ---------------------------------------------------------------------------
# channel generation
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ChannelRealization:
    """One fading draw: a matrix per user plus the noise level."""

    matrices: tuple[np.ndarray, ...]
    noise_power: float
    master_seed: int
    trial: int

    def user(self, k: int) -> np.ndarray:
        return self.matrices[k - 1]

    @property
    def num_users(self) -> int:
        return len(self.matrices)


def generate_channel(
    config: NetworkConfig,
    seed: int,
    trial: int,
    *,
    noise_power: float = 1.0,
    max_redraws: int = 8,
) -> ChannelRealization:
    """Draw per-user Rayleigh channels, deterministically in (seed, trial).

    Entries are CN(0, 1).  Draws whose per-user rank falls below G or whose
    vertical concatenation has rank below L are redrawn; after ``max_redraws``
    failures :class:`RankDeficient` is raised (which, for sane antenna counts,
    signals a degenerate configuration rather than bad luck).
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), int(trial))))
    shape = (config.rx_antennas, config.tx_antennas)
    for _ in range(max_redraws + 1):
        mats = tuple(
            (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
            / np.sqrt(2.0)
            for _ in range(config.num_users)
        )
        channel = ChannelRealization(mats, float(noise_power), int(seed), int(trial))
        try:
            check_ranks(channel, config)
        except RankDeficient:
            continue
        return channel
    raise RankDeficient(
        f"channel stayed rank deficient after {max_redraws} redraws "
        f"(shape {shape}, G={config.rx_multiplexing}, L={config.tx_multiplexing})"
    )


def check_ranks(channel: ChannelRealization, config: NetworkConfig) -> None:
    """Verify rank(H_k) >= G per user and rank of the stacked H >= L."""
    for k, mat in enumerate(channel.matrices, start=1):
        if np.linalg.matrix_rank(mat) < config.rx_multiplexing:
            raise RankDeficient(
                f"user {k} channel rank below G={config.rx_multiplexing}"
            )
    stack = np.vstack(channel.matrices)
    if np.linalg.matrix_rank(stack) < config.tx_multiplexing:
        raise RankDeficient(
            f"stacked channel rank below L={config.tx_multiplexing}"
        )


# ---------------------------------------------------------------------------
# receive side
# ---------------------------------------------------------------------------


def strongest_eigenmode_receiver(H: np.ndarray) -> np.ndarray:
    """Dominant left singular vector of H, unit norm, fixed phase."""
    if not np.any(np.abs(H) > 0):
        raise ZeroMatrix("cannot combine an all-zero channel")
    u_mat, _, _ = np.linalg.svd(H)
    return _fix_phase(u_mat[:, 0])


def receive_combiners(H: np.ndarray, streams: int) -> np.ndarray:
    """Top left singular vectors as columns: the combiner bank for a user
    resolving ``streams`` streams."""
    if not np.any(np.abs(H) > 0):
        raise ZeroMatrix("cannot combine an all-zero channel")
    u_mat, svals, _ = np.linalg.svd(H)
    tol = max(H.shape) * np.finfo(float).eps * svals[0]
    rank = int(np.sum(svals > tol))
    if streams > rank:
        raise RankDeficient(f"channel supports at most {rank} streams")
    cols = [_fix_phase(u_mat[:, g]) for g in range(streams)]
    return np.column_stack(cols)


def equivalent_channel(H: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Post-combining channel h = (u^H H)^H seen through combiner u."""
    return H.conj().T @ u


# ---------------------------------------------------------------------------
# transmit side
# ---------------------------------------------------------------------------


def zf_beamformer(
    nulled_channels,
    serving_channel: np.ndarray,
    power: float = 1.0,
) -> np.ndarray:
    """Beam carrying ``power`` toward ``serving_channel`` with exact nulls.

    The beam is the projection of the serving equivalent channel onto the
    orthogonal complement of the nulled equivalent channels, rescaled to
    ``sqrt(power)``.  With no constraints this is the matched filter.
    """
    target = np.asarray(serving_channel)
    tnorm = np.linalg.norm(target)
    if tnorm <= 1e-300:
        raise ZeroMatrix("serving channel is zero")
    nulled = [np.asarray(h) for h in nulled_channels]
    if not nulled:
        direction = target / tnorm
    else:
        A = np.array([h.conj() for h in nulled])  # rows are h^H
        dim = A.shape[1]
        _, svals, vh = np.linalg.svd(A)
        tol = max(A.shape) * np.finfo(float).eps * (svals[0] if len(svals) else 0.0)
        rank = int(np.sum(svals > tol))
        if rank >= dim:
            raise DegenerateNullspace(
                f"{rank} independent nulling constraints leave no direction in C^{dim}"
            )
        basis = vh[rank:].conj().T  # orthonormal nullspace basis, columns
        projected = basis @ (basis.conj().T @ target)
        pnorm = np.linalg.norm(projected)
        if pnorm <= 1e-10 * tnorm:
            raise DegenerateNullspace(
                "serving channel lies in the span of the nulled channels"
            )
        direction = projected / pnorm
    return _fix_phase(direction) * np.sqrt(power)


def mmse_receiver(
    H: np.ndarray,
    serving_beams,
    target_index: int,
    noise_power: float,
) -> np.ndarray:
    """Linear MMSE combiner for stream ``target_index`` (1-based) of a user
    whose data rides on ``serving_beams`` (rows), normalized to unit norm.

    Computes (H W W^H H^H + N0 I)^{-1} H w_target.  With zero noise a
    rank-deficient received bundle makes the covariance singular, which
    raises :class:`SingularCovariance`.
    """
    W = np.atleast_2d(np.asarray(serving_beams))
    received = H @ W.T  # columns: H w_i
    cov = received @ received.conj().T + noise_power * np.eye(H.shape[0])
    rhs = received[:, target_index - 1]
    try:
        u = np.linalg.solve(cov, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    if not np.all(np.isfinite(u)):
        raise SingularCovariance("covariance solve produced non-finite combiner")
    return _unit(u, "MMSE combiner is zero (beam orthogonal to channel)")


def multicast_zf_directions(channels, streams: int) -> np.ndarray:
    """Transmit directions for codeword beams: the top right singular vectors
    of the serving users' stacked channel, as rows.

    Cross-stream interference is then removed on the receive side: each user
    nulls the other codewords' effective downlink vectors with its combiner,
    which is always feasible since G combiner dimensions face G - 1
    constraints.
    """
    stack = np.vstack(channels)
    _, svals, vh = np.linalg.svd(stack)
    if streams > vh.shape[0] or (len(svals) >= streams and svals[streams - 1] <= 1e-12 * svals[0]):
        raise RankDeficient("stacked channel cannot support the requested streams")
    return np.array([_fix_phase(vh[g].conj()) for g in range(streams)])


# ---------------------------------------------------------------------------
# beamformer bundles and SINRs
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BeamformerSet:
    """Transmit beams for one transmission plus the receive side that decodes
    it.  ``tx`` is aligned with the transmission's term order; ``rx`` and
    ``eq`` are keyed by served stream."""

    tx: tuple[np.ndarray, ...]
    rx: dict[StreamId, np.ndarray]
    eq: dict[StreamId, np.ndarray]
    noise_power: float
    power_budget: float

    def total_power(self) -> float:
        return float(sum(float(np.vdot(w, w).real) for w in self.tx))

    def validate(self) -> None:
        if self.total_power() > self.power_budget * (1.0 + 1e-9):
            raise ValueError(
                f"transmit power {self.total_power():.6g} exceeds budget "
                f"{self.power_budget:.6g}"
            )
        for s, u in self.rx.items():
            if abs(np.linalg.norm(u) - 1.0) > 1e-9:
                raise ValueError(f"combiner for stream {s} is not unit norm")


def _single_group_kind(transmission: TransmissionVector) -> str:
    """Classify a slot as 'unicast' or 'multicast' with all interference
    either nulled on the same user or cache-removed; reject slots whose
    nulling sets reach outside the decoding users (those need joint decoding
    and are out of scope for the finite-SNR formulas)."""
    kinds = {isinstance(t.payload, CodewordId) for t in transmission.terms}
    if kinds == {True}:
        kind = "multicast"
    elif kinds == {False}:
        kind = "unicast"
    else:
        raise ModeMismatch("transmission mixes subpacket and codeword payloads")
    served_count: dict[StreamId, int] = {}
    for term in transmission.terms:
        decoders = {s.user for s in term.served}
        if any(s.user not in decoders for s in term.zf_set):
            raise ModeMismatch(
                "nulling set reaches users outside the term's decoders; "
                "finite-SNR formulas cover single-group slots only"
            )
        for s in term.served:
            served_count[s] = served_count.get(s, 0) + 1
    if any(c != 1 for c in served_count.values()):
        raise ModeMismatch("a stream is served by several terms; joint decoding unsupported")
    return kind


def compute_sinrs(
    transmission: TransmissionVector,
    beams: BeamformerSet,
    mode: str | None = None,
) -> dict[StreamId, float]:
    """Per-stream SINRs for a single-group slot.

    Unicast: the denominator sums the same user's other-stream beams only;
    cross-user terms are cache-removed before detection.  Multicast: the
    denominator sums the other G - 1 codeword beams at that stream.  Both add
    the noise power.
    """
    kind = _single_group_kind(transmission)
    if mode is not None:
        wanted = "unicast" if mode in ("unicast", "elevated") else mode
        if wanted != kind:
            raise ModeMismatch(f"transmission is {kind}, caller expected {mode}")

    n0 = beams.noise_power
    out: dict[StreamId, float] = {}
    for i, term in enumerate(transmission.terms):
        for stream in term.served:
            h = beams.eq[stream]
            signal = abs(np.vdot(h, beams.tx[i])) ** 2
            interference = 0.0
            for j, other in enumerate(transmission.terms):
                if j == i:
                    continue
                if kind == "unicast":
                    if other.served[0].user != stream.user:
                        continue  # cache-removed before detection
                elif other.payload.stream == term.payload.stream:
                    continue
                interference += abs(np.vdot(h, beams.tx[j])) ** 2
            out[stream] = float(signal / (interference + n0))
    return out


def _balanced_nullspace_beam(nulled, targets, power: float) -> np.ndarray:
    """A beam with exact nulls that balances gain across several target
    channels: the dominant right singular direction of the targets restricted
    to the nullspace.  With one target this reduces to :func:`zf_beamformer`."""
    if len(targets) == 1:
        return zf_beamformer(nulled, targets[0], power)
    dim = targets[0].shape[0]
    if not nulled:
        basis = np.eye(dim)
    else:
        A = np.array([np.asarray(h).conj() for h in nulled])
        _, svals, vh = np.linalg.svd(A)
        tol = max(A.shape) * np.finfo(float).eps * (svals[0] if len(svals) else 0.0)
        rank = int(np.sum(svals > tol))
        if rank >= dim:
            raise DegenerateNullspace(
                f"{rank} independent nulling constraints leave no direction in C^{dim}"
            )
        basis = vh[rank:].conj().T
    M = np.array([np.asarray(h).conj() for h in targets]) @ basis
    _, svals, vh = np.linalg.svd(M)
    if len(svals) == 0 or svals[0] <= 1e-12:
        raise DegenerateNullspace("all target channels vanish on the nullspace")
    direction = basis @ vh[0].conj()
    return _fix_phase(direction / np.linalg.norm(direction)) * np.sqrt(power)


def zf_beamformer_set(
    transmission: TransmissionVector,
    channel: ChannelRealization,
    power_budget: float,
    streams: int,
) -> BeamformerSet:
    """The zero-forcing design for one transmission: SVD receive combiners,
    exact transmit nulls per term, equal power split across terms.

    Subpacket slots work for any stretch factor (each term's nulling set has
    at most L - 1 streams).  Codeword slots use transmit-side nulls when
    streams = 1 and the joint transmit/receive construction otherwise: shared
    transmit directions from the stacked channel and per-user combiners that
    null the other codeword directions, so cross-stream leakage is exactly
    zero by design.
    """
    kinds = {isinstance(t.payload, CodewordId) for t in transmission.terms}
    if len(kinds) != 1:
        raise ModeMismatch("transmission mixes subpacket and codeword payloads")
    multicast = kinds.pop()
    share = power_budget / len(transmission.terms)
    users = sorted(transmission.serving_set)
    rx: dict[StreamId, np.ndarray] = {}
    eq: dict[StreamId, np.ndarray] = {}

    if not multicast or streams == 1:
        for u in users:
            bank = receive_combiners(channel.user(u), streams)
            for g in range(1, streams + 1):
                s = StreamId(u, g)
                rx[s] = bank[:, g - 1]
                eq[s] = equivalent_channel(channel.user(u), rx[s])
        tx = []
        for term in transmission.terms:
            nulled = [eq[s] for s in sorted(term.zf_set)]
            targets = [eq[s] for s in term.served]
            tx.append(_balanced_nullspace_beam(nulled, targets, share))
        tx = tuple(tx)
    else:
        if _single_group_kind(transmission) != "multicast":
            raise ModeMismatch("joint codeword construction needs single-group slots")
        directions = multicast_zf_directions([channel.user(u) for u in users], streams)
        for u in users:
            H = channel.user(u)
            effective = [H @ directions[g] for g in range(streams)]  # receive space
            for g in range(1, streams + 1):
                others = [effective[gg] for gg in range(streams) if gg != g - 1]
                try:
                    comb = zf_beamformer(others, effective[g - 1], 1.0)
                except DegenerateNullspace as exc:
                    raise RankDeficient(
                        f"user {u} cannot separate the codeword streams: {exc}"
                    ) from exc
                s = StreamId(u, g)
                rx[s] = comb
                eq[s] = equivalent_channel(H, comb)
        tx = tuple(
            directions[term.payload.stream - 1] * np.sqrt(share)
            for term in transmission.terms
        )

    bundle = BeamformerSet(
        tx=tx, rx=rx, eq=eq, noise_power=channel.noise_power, power_budget=power_budget
    )
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# channel dump (text golden format)
# ---------------------------------------------------------------------------


def save_channel(channel: ChannelRealization, path) -> None:
    """Write a realization as text: a header line, then per user one line per
    matrix row with whitespace-separated ``re:im`` entries."""
    with open(path, "w", encoding="utf-8") as f:
        rows, cols = channel.matrices[0].shape
        f.write(
            f"mimo-cc-channel 1 users={channel.num_users} rows={rows} cols={cols} "
            f"noise={channel.noise_power!r} seed={channel.master_seed} trial={channel.trial}\n"
        )
        for mat in channel.matrices:
            for row in mat:
                f.write(
                    " ".join(f"{float(x.real)!r}:{float(x.imag)!r}" for x in row)
                    + "\n"
                )


def load_channel(path) -> ChannelRealization:
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) < 2 or header[0] != "mimo-cc-channel":
            raise ValueError("not a channel dump")
        fields = dict(item.split("=", 1) for item in header[2:])
        users = int(fields["users"])
        rows = int(fields["rows"])
        cols = int(fields["cols"])
        mats = []
        for _ in range(users):
            data = np.empty((rows, cols), dtype=complex)
            for r in range(rows):
                entries = f.readline().split()
                for c, item in enumerate(entries):
                    re_s, im_s = item.split(":")
                    data[r, c] = complex(float(re_s), float(im_s))
            mats.append(data)
    return ChannelRealization(
        tuple(mats),
        float(fields["noise"]),
        int(fields["seed"]),
        int(fields["trial"]),
    )
