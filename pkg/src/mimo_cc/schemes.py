"""Construction of cache placements and delivery plans.

A delivery plan is a schedule of transmission vectors.  Each vector addresses
one serving set of t + eta users and is a sum of beamformed terms.  A term
carries either a single subpacket (unicast modes) or an XOR of aligned
subpackets (multicast mode), together with the set of streams its beamformer
must null.  Plans are purely symbolic: beamformers enter only at simulation
time, which keeps construction, verification and serialization exact.

Single-stream plans for a virtual network with multiplexing eta can be
stretched ("elevated") into G-stream plans for the real network with
L = eta * G transmit and G receive streams.  Elevation multiplies every term
into G per-stream copies and widens each nulling set from users to streams,
preserving the schedule length and the subpacket split of the original plan.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .errors import (
    ConfigMismatch,
    InvalidDemand,
    LowSubpackInapplicable,
    MalformedBaseline,
    ModeMismatch,
    OutOfRange,
)
from .model import (
    CodewordId,
    NetworkConfig,
    StreamId,
    SubfileLabel,
    SubpacketId,
    enumerate_subsets,
    label_sort_key,
    rank_within,
    validate_config,
)

__all__ = [
    "CachePlacement",
    "TransmissionTerm",
    "TransmissionVector",
    "DeliveryPlan",
    "BaselineMisoTerm",
    "BaselineMisoPlan",
    "MODES",
    "build_placement",
    "worst_case_demands",
    "validate_demands",
    "build_unicast_plan",
    "build_multicast_plan",
    "build_baseline_plan",
    "elevate_baseline",
    "validate_baseline",
    "count_dof",
    "count_transmissions",
    "count_split",
    "count_subpacketization",
    "plan_subpacketization",
    "plan_payloads",
]

#: Delivery modes a :class:`DeliveryPlan` can carry.
MODES = ("unicast", "multicast", "elevated")


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CachePlacement:
    """What every user stores, as sets of subfile labels.

    ``subfiles`` lists the labels one file is split into (before any part or
    stream split); ``cached[k-1]`` is the label set user k stores, for every
    file in the library.
    """

    num_users: int
    subfiles: tuple[SubfileLabel, ...]
    cached: tuple[frozenset, ...]

    def __post_init__(self):
        if len(self.cached) != self.num_users:
            raise OutOfRange("placement needs one cache set per user")
        universe = set(self.subfiles)
        for k, labels in enumerate(self.cached, start=1):
            if not labels <= universe:
                raise OutOfRange(f"user {k} caches labels outside the subfile universe")

    @classmethod
    def combinatorial(cls, num_users: int, caching_gain: int) -> "CachePlacement":
        """Subfiles named by t-subsets of users; user k caches those containing k."""
        labels = tuple(frozenset(s) for s in enumerate_subsets(num_users, caching_gain))
        cached = tuple(
            frozenset(lab for lab in labels if k in lab) for k in range(1, num_users + 1)
        )
        return cls(num_users, labels, cached)

    @classmethod
    def from_packets(
        cls, num_users: int, num_packets: int, cached: Mapping[int, Iterable[int]]
    ) -> "CachePlacement":
        """Subfiles named by packet indices 1..num_packets."""
        labels = tuple(range(1, num_packets + 1))
        per_user = tuple(
            frozenset(cached.get(k, ())) for k in range(1, num_users + 1)
        )
        return cls(num_users, labels, per_user)

    def knows(self, user: int, label: SubfileLabel) -> bool:
        return label in self.cached[user - 1]

    def missing(self, user: int) -> tuple[SubfileLabel, ...]:
        """Labels user k still needs, in canonical order."""
        have = self.cached[user - 1]
        return tuple(lab for lab in self.subfiles if lab not in have)


@dataclass(frozen=True)
class TransmissionTerm:
    """One beamformed summand: a payload, the streams its beam nulls, and the
    streams that decode it."""

    payload: SubpacketId | CodewordId
    zf_set: frozenset
    served: tuple[StreamId, ...]


@dataclass(frozen=True)
class TransmissionVector:
    """All terms sent in one slot to one serving set."""

    serving_set: frozenset
    terms: tuple[TransmissionTerm, ...]
    index: int


@dataclass(frozen=True)
class DeliveryPlan:
    """A complete delivery schedule plus the context needed to check it."""

    config: NetworkConfig
    mode: str
    placement: CachePlacement
    demands: tuple[int, ...]
    transmissions: tuple[TransmissionVector, ...]
    split_count: int      # parts per subfile (the q range)
    stream_split: int     # per-stream splits (the g range), equals G

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModeMismatch(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class BaselineMisoTerm:
    """A single-stream term: ``owner`` receives part ``part`` of ``packet``
    under a beam nulling the users in ``zf_users``."""

    owner: int
    packet: SubfileLabel
    part: int
    zf_users: frozenset


@dataclass(frozen=True)
class BaselineMisoPlan:
    """A delivery schedule for a single-stream (virtual) network."""

    num_users: int
    caching_gain: int
    multiplexing: int     # the virtual network's spatial multiplexing
    library_size: int
    placement: CachePlacement
    demands: tuple[int, ...]
    transmissions: tuple[tuple[BaselineMisoTerm, ...], ...]
    split_count: int


# ---------------------------------------------------------------------------
# placement and demands
# ---------------------------------------------------------------------------


def build_placement(config: NetworkConfig) -> CachePlacement:
    """The symmetric placement: every file split into C(K, t) subfiles indexed
    by t-subsets; user k caches exactly those whose index contains k."""
    return CachePlacement.combinatorial(config.num_users, config.caching_gain)


def worst_case_demands(config: NetworkConfig) -> tuple[int, ...]:
    """Demand vector with maximal file diversity: user k requests file
    ((k-1) mod N) + 1."""
    n = config.library_size
    return tuple((k - 1) % n + 1 for k in range(1, config.num_users + 1))


def validate_demands(demands: Sequence[int], config: NetworkConfig) -> tuple[int, ...]:
    demands = tuple(int(d) for d in demands)
    if len(demands) != config.num_users:
        raise InvalidDemand(
            f"expected {config.num_users} demands, got {len(demands)}"
        )
    for k, d in enumerate(demands, start=1):
        if d < 1 or d > config.library_size:
            raise InvalidDemand(
                f"user {k} demands file {d}, library holds 1..{config.library_size}"
            )
    return demands


# ---------------------------------------------------------------------------
# plan builders
# ---------------------------------------------------------------------------


def _part_index(k: int, subfile: frozenset, serving: Sequence[int], num_users: int) -> int:
    """1-based part index: the lexicographic position of the serving set among
    all serving sets that could deliver this (user, subfile) pair.

    Equivalently, the rank of the extra users ``serving - ({k} | subfile)``
    among same-size subsets of the users outside ``{k} | subfile``.
    """
    base = set(subfile) | {k}
    extra = sorted(set(serving) - base)
    universe = [u for u in range(1, num_users + 1) if u not in base]
    return 1 + rank_within(extra, universe)


def _other_streams(user: int, keep: int, streams: int) -> list[StreamId]:
    return [StreamId(user, g) for g in range(1, streams + 1) if g != keep]


def _all_streams(users: Iterable[int], streams: int) -> list[StreamId]:
    return [StreamId(u, g) for u in users for g in range(1, streams + 1)]


def build_unicast_plan(
    config: NetworkConfig, demands: Sequence[int] | None = None
) -> DeliveryPlan:
    """Native multi-stream delivery with per-stream subpackets.

    For each serving set S of t + eta users, each (t+1)-subset T of S, each
    user k in T and each stream g, one term carries part q, stream g of the
    subfile indexed by T - {k} of user k's file.  Its beam nulls every stream
    of the eta - 1 users in S - T and the G - 1 other streams of user k, so
    each nulling set has exactly L - 1 streams.
    """
    k_tot = config.num_users
    t = config.caching_gain
    g_tot = config.rx_multiplexing
    demands = validate_demands(
        demands if demands is not None else worst_case_demands(config), config
    )
    placement = build_placement(config)
    transmissions = []
    for idx, serving in enumerate(enumerate_subsets(k_tot, config.serving_set_size)):
        terms = []
        for target in itertools.combinations(serving, t + 1):
            outside = [u for u in serving if u not in target]
            for k in target:
                subfile = frozenset(target) - {k}
                part = _part_index(k, subfile, serving, k_tot)
                for g in range(1, g_tot + 1):
                    zf = frozenset(
                        _all_streams(outside, g_tot) + _other_streams(k, g, g_tot)
                    )
                    terms.append(
                        TransmissionTerm(
                            SubpacketId(k, subfile, part, g), zf, (StreamId(k, g),)
                        )
                    )
        transmissions.append(TransmissionVector(frozenset(serving), tuple(terms), idx))
    return DeliveryPlan(
        config=config,
        mode="unicast",
        placement=placement,
        demands=demands,
        transmissions=tuple(transmissions),
        split_count=count_split(config),
        stream_split=g_tot,
    )


def build_multicast_plan(
    config: NetworkConfig, demands: Sequence[int] | None = None
) -> DeliveryPlan:
    """Multicast delivery: per (T, g) one XOR codeword instead of t + 1
    separate subpackets, cutting the beamformer count by t + 1.

    All components of a codeword share the same part index because the part
    rank depends only on T and the serving set.  The codeword beam nulls all
    streams of the users in S - T and the other G - 1 streams of every target
    user, G(eta-1) + (G-1)(t+1) streams in total.
    """
    k_tot = config.num_users
    t = config.caching_gain
    g_tot = config.rx_multiplexing
    demands = validate_demands(
        demands if demands is not None else worst_case_demands(config), config
    )
    placement = build_placement(config)
    transmissions = []
    for idx, serving in enumerate(enumerate_subsets(k_tot, config.serving_set_size)):
        terms = []
        for target in itertools.combinations(serving, t + 1):
            outside = [u for u in serving if u not in target]
            part = 1 + rank_within(
                sorted(set(serving) - set(target)),
                [u for u in range(1, k_tot + 1) if u not in target],
            )
            for g in range(1, g_tot + 1):
                comps = tuple(
                    SubpacketId(k, frozenset(target) - {k}, part, g) for k in target
                )
                zf = frozenset(
                    _all_streams(outside, g_tot)
                    + [s for k in target for s in _other_streams(k, g, g_tot)]
                )
                served = tuple(StreamId(k, g) for k in target)
                terms.append(
                    TransmissionTerm(CodewordId(frozenset(target), g, comps), zf, served)
                )
        transmissions.append(TransmissionVector(frozenset(serving), tuple(terms), idx))
    return DeliveryPlan(
        config=config,
        mode="multicast",
        placement=placement,
        demands=demands,
        transmissions=tuple(transmissions),
        split_count=count_split(config),
        stream_split=g_tot,
    )


def build_baseline_plan(
    num_users: int,
    caching_gain: int,
    multiplexing: int,
    demands: Sequence[int] | None = None,
    library_size: int | None = None,
) -> BaselineMisoPlan:
    """Combinatorial delivery for a single-stream network with the given
    spatial multiplexing: the G = 1 special case of the native scheme."""
    cfg = validate_config(
        {
            "users": num_users,
            "caching_gain": caching_gain,
            "tx_multiplexing": multiplexing,
            "rx_multiplexing": 1,
            "library_size": library_size if library_size is not None else num_users,
        }
    )
    plan = build_unicast_plan(cfg, demands)
    transmissions = tuple(
        tuple(
            BaselineMisoTerm(
                owner=term.payload.owner,
                packet=term.payload.subfile,
                part=term.payload.part,
                zf_users=frozenset(s.user for s in term.zf_set),
            )
            for term in tx.terms
        )
        for tx in plan.transmissions
    )
    return BaselineMisoPlan(
        num_users=num_users,
        caching_gain=caching_gain,
        multiplexing=multiplexing,
        library_size=cfg.library_size,
        placement=plan.placement,
        demands=plan.demands,
        transmissions=transmissions,
        split_count=plan.split_count,
    )


def validate_baseline(baseline: BaselineMisoPlan) -> None:
    """Structural checks on a single-stream plan.

    Every term must null exactly ``multiplexing - 1`` users, never the owner,
    and must deliver a subfile its owner does not cache.  Violations raise
    :class:`MalformedBaseline`.
    """
    eta = baseline.multiplexing
    users = range(1, baseline.num_users + 1)
    if baseline.caching_gain + eta > baseline.num_users:
        raise MalformedBaseline("serving sets larger than the user population")
    validate_demands(
        baseline.demands,
        validate_config(
            {
                "users": baseline.num_users,
                "caching_gain": 0,
                "tx_multiplexing": 1,
                "rx_multiplexing": 1,
                "library_size": baseline.library_size,
            }
        ),
    )
    labels = set(baseline.placement.subfiles)
    for i, tx in enumerate(baseline.transmissions):
        for term in tx:
            if term.owner not in users:
                raise MalformedBaseline(f"transmission {i}: unknown owner {term.owner}")
            if len(term.zf_users) != eta - 1:
                raise MalformedBaseline(
                    f"transmission {i}: term for user {term.owner} nulls "
                    f"{len(term.zf_users)} users, expected {eta - 1}"
                )
            if term.owner in term.zf_users:
                raise MalformedBaseline(
                    f"transmission {i}: term for user {term.owner} nulls its own receiver"
                )
            if not term.zf_users <= set(users):
                raise MalformedBaseline(f"transmission {i}: nulled users outside 1..K")
            if term.packet not in labels:
                raise MalformedBaseline(
                    f"transmission {i}: unknown subfile label {term.packet!r}"
                )
            if baseline.placement.knows(term.owner, term.packet):
                raise MalformedBaseline(
                    f"transmission {i}: user {term.owner} already caches {term.packet!r}"
                )
            if term.part < 1 or term.part > baseline.split_count:
                raise MalformedBaseline(
                    f"transmission {i}: part {term.part} outside 1..{baseline.split_count}"
                )


def elevate_baseline(
    baseline: BaselineMisoPlan,
    streams: int,
    *,
    tx_antennas: int | None = None,
    rx_antennas: int | None = None,
) -> DeliveryPlan:
    """Stretch a single-stream plan into a G-stream plan for the real network.

    The virtual network's multiplexing eta becomes the stretch factor: the
    real network has L = eta * G transmit streams and G receive streams.
    Every baseline term becomes G per-stream terms; each copy g keeps the
    original payload on stream g and nulls all G streams of the originally
    nulled users plus the owner's other G - 1 streams, for L - 1 nulls total.
    The schedule length and the subfile split are unchanged.
    """
    validate_baseline(baseline)
    eta = baseline.multiplexing
    config = validate_config(
        {
            "users": baseline.num_users,
            "caching_gain": baseline.caching_gain,
            "tx_multiplexing": eta * streams,
            "rx_multiplexing": streams,
            "library_size": baseline.library_size,
            "tx_antennas": tx_antennas if tx_antennas is not None else eta * streams,
            "rx_antennas": rx_antennas if rx_antennas is not None else streams,
        }
    )
    transmissions = []
    for idx, tx in enumerate(baseline.transmissions):
        serving = {term.owner for term in tx}
        serving.update(u for term in tx for u in term.zf_users)
        terms = []
        for term in tx:
            for g in range(1, streams + 1):
                zf = frozenset(
                    _all_streams(sorted(term.zf_users), streams)
                    + _other_streams(term.owner, g, streams)
                )
                terms.append(
                    TransmissionTerm(
                        SubpacketId(term.owner, term.packet, term.part, g),
                        zf,
                        (StreamId(term.owner, g),),
                    )
                )
        transmissions.append(TransmissionVector(frozenset(serving), tuple(terms), idx))
    return DeliveryPlan(
        config=config,
        mode="elevated",
        placement=baseline.placement,
        demands=baseline.demands,
        transmissions=tuple(transmissions),
        split_count=baseline.split_count,
        stream_split=streams,
    )


# ---------------------------------------------------------------------------
# counting
# ---------------------------------------------------------------------------


def count_dof(config: NetworkConfig, mode: str = "unicast") -> int:
    """Streams decoded per slot: G t + L for the multi-stream modes,
    t + L when the receivers fall back to single-stream combining."""
    if mode in MODES:
        return config.rx_multiplexing * config.caching_gain + config.tx_multiplexing
    if mode == "virtual-miso":
        return config.caching_gain + config.tx_multiplexing
    raise ModeMismatch(f"unknown mode {mode!r}")


def count_transmissions(config: NetworkConfig) -> int:
    """Schedule length of the native schemes: C(K, t + eta)."""
    return math.comb(config.num_users, config.serving_set_size)


def count_split(config: NetworkConfig) -> int:
    """Parts per subfile: the number of serving sets that can deliver a fixed
    (user, subfile) pair, C(K - t - 1, eta - 1)."""
    return math.comb(
        config.num_users - config.caching_gain - 1, config.eta - 1
    )


def count_subpacketization(config: NetworkConfig, scheme: str = "combinatorial") -> int:
    """Pieces one file is split into.

    ``combinatorial``: G C(K, t) C(K-t-1, eta-1).  ``low_subpacketization``:
    G K (t + eta), available only when eta >= t (the packet construction needs
    at least as many extra users per slot as cached packets to cancel).
    """
    g_tot = config.rx_multiplexing
    if scheme == "combinatorial":
        return g_tot * math.comb(config.num_users, config.caching_gain) * count_split(config)
    if scheme == "low_subpacketization":
        if config.eta < config.caching_gain:
            raise LowSubpackInapplicable(
                f"needs eta >= t, got eta={config.eta} t={config.caching_gain}"
            )
        return g_tot * config.num_users * config.serving_set_size
    raise OutOfRange(f"unknown subpacketization scheme {scheme!r}")


def plan_payloads(plan: DeliveryPlan) -> list[SubpacketId]:
    """All subpackets a plan delivers, codewords expanded into components."""
    out: list[SubpacketId] = []
    for tx in plan.transmissions:
        for term in tx.terms:
            if isinstance(term.payload, CodewordId):
                out.extend(term.payload.components)
            else:
                out.append(term.payload)
    return out


def plan_subpacketization(plan: DeliveryPlan | BaselineMisoPlan) -> int:
    """Distinct (subfile, part, stream) pieces a plan references.

    For schedules that deliver every missing piece of every user this equals
    the per-file subpacketization of the underlying scheme.
    """
    pieces: set[tuple] = set()
    if isinstance(plan, BaselineMisoPlan):
        for tx in plan.transmissions:
            for term in tx:
                pieces.add((label_sort_key(term.packet), term.part, 1))
    else:
        for sp in plan_payloads(plan):
            pieces.add((label_sort_key(sp.subfile), sp.part, sp.stream))
    return len(pieces)


def with_demands(plan: DeliveryPlan, demands: Sequence[int]) -> DeliveryPlan:
    """The same schedule serving a different demand vector."""
    return replace(plan, demands=validate_demands(demands, plan.config))
