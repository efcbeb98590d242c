"""Symbolic decodability checks for delivery plans.

For every transmission and every stream it serves, each term of the vector
must fall into one of three buckets at that stream: it is decoded there (the
stream appears in the term's served list), its beam nulls the stream, or the
receiving user can subtract it from cache knowledge.  XOR payloads decode
only if the user can strip every component but its own.  Terms fitting no
bucket make the stream unresolvable and fail the plan.

Several terms may legitimately serve the same stream in one slot: the
receiver then resolves them jointly (they arrive as a clean multi-access
bundle once everything else is nulled or subtracted).  The report records the
widest such bundle.

Verification is symbolic: no channel draws, no beamformers, and therefore no
tolerances.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .errors import ConfigMismatch, PlanFormatError
from .model import CodewordId, StreamId, SubpacketId
from .schemes import CachePlacement, DeliveryPlan

__all__ = [
    "StreamCheck",
    "UserCoverage",
    "DecodabilityReport",
    "verify_plan",
    "verify_dof_accounting",
    "report_to_dict",
    "format_report",
]


@dataclass(frozen=True)
class StreamCheck:
    """Classification of one served stream in one transmission."""

    transmission: int
    stream: StreamId
    decoded: tuple[SubpacketId, ...]
    nulled: int
    cache_removed: int
    unresolved: tuple[str, ...]


@dataclass(frozen=True)
class UserCoverage:
    """Delivery accounting for one user across the whole schedule."""

    user: int
    needed: int
    received: int
    missing: tuple
    duplicates: tuple
    extras: tuple

    @property
    def fraction(self) -> float:
        return 1.0 if self.needed == 0 else self.received / self.needed


@dataclass(frozen=True)
class DecodabilityReport:
    verdict: bool
    mode: str
    num_transmissions: int
    streams: tuple[StreamCheck, ...]
    coverage: tuple[UserCoverage, ...]
    mac_width: int

    @property
    def unresolved_count(self) -> int:
        return sum(len(s.unresolved) for s in self.streams)


def _user_knows(placement: CachePlacement, user: int, payload) -> bool:
    if isinstance(payload, CodewordId):
        return all(
            placement.knows(user, c.subfile) for c in payload.components
        )
    return placement.knows(user, payload.subfile)


def _describe(payload) -> str:
    if isinstance(payload, CodewordId):
        targets = ",".join(str(u) for u in sorted(payload.target_set))
        return f"xor[{targets}]^{payload.stream}"
    sub = (
        payload.subfile
        if isinstance(payload.subfile, int)
        else "{" + ",".join(str(u) for u in sorted(payload.subfile)) + "}"
    )
    return f"sub[{payload.owner}:{sub}.{payload.part}.{payload.stream}]"


def _decode_at(payload, stream: StreamId) -> tuple[SubpacketId | None, str | None]:
    """The subpacket the user at ``stream`` takes from a term it decodes,
    or a reason string when it cannot."""
    if isinstance(payload, CodewordId):
        own = [c for c in payload.components if c.owner == stream.user]
        if len(own) != 1:
            return None, f"{_describe(payload)} has no unique component for user {stream.user}"
        return own[0], None
    if payload.owner != stream.user:
        return None, f"{_describe(payload)} served to user {stream.user} but owned by {payload.owner}"
    return payload, None


def verify_plan(
    plan: DeliveryPlan,
    placement: CachePlacement | None = None,
    demands=None,
) -> DecodabilityReport:
    """Run the full symbolic check described in the module docstring.

    ``placement`` and ``demands`` default to the ones the plan carries;
    passing inconsistent ones raises :class:`ConfigMismatch`.
    """
    if placement is None:
        placement = plan.placement
    elif placement.num_users != plan.config.num_users:
        raise ConfigMismatch(
            f"placement covers {placement.num_users} users, "
            f"plan has {plan.config.num_users}"
        )
    if demands is None:
        demands = plan.demands
    elif tuple(demands) != plan.demands:
        # The schedule is demand-agnostic, so a different vector of the right
        # shape is fine; only the shape can mismatch.
        if len(tuple(demands)) != plan.config.num_users:
            raise ConfigMismatch("demand vector length does not match the plan")

    checks: list[StreamCheck] = []
    decoded_all: Counter = Counter()
    mac_width = 0

    for tx in plan.transmissions:
        served_streams = sorted({s for term in tx.terms for s in term.served})
        for stream in served_streams:
            decoded: list[SubpacketId] = []
            unresolved: list[str] = []
            nulled = 0
            removed = 0
            width = 0
            for term in tx.terms:
                if stream in term.served:
                    width += 1
                    subpacket, reason = _decode_at(term.payload, stream)
                    if reason is not None:
                        unresolved.append(reason)
                        continue
                    if isinstance(term.payload, CodewordId):
                        blockers = [
                            c
                            for c in term.payload.components
                            if c.owner != stream.user
                            and not placement.knows(stream.user, c.subfile)
                        ]
                        if blockers:
                            unresolved.append(
                                f"{_describe(term.payload)} not strippable by user "
                                f"{stream.user}: missing {_describe(blockers[0])}"
                            )
                            continue
                    decoded.append(subpacket)
                elif stream in term.zf_set:
                    nulled += 1
                elif _user_knows(placement, stream.user, term.payload):
                    removed += 1
                else:
                    unresolved.append(
                        f"{_describe(term.payload)} interferes at stream "
                        f"({stream.user},{stream.stream})"
                    )
            mac_width = max(mac_width, width)
            checks.append(
                StreamCheck(
                    transmission=tx.index,
                    stream=stream,
                    decoded=tuple(decoded),
                    nulled=nulled,
                    cache_removed=removed,
                    unresolved=tuple(unresolved),
                )
            )
            for sp in decoded:
                decoded_all[(sp.owner, sp.subfile, sp.part, sp.stream)] += 1

    coverage = []
    for user in range(1, plan.config.num_users + 1):
        needed = {
            (user, label, part, g)
            for label in placement.missing(user)
            for part in range(1, plan.split_count + 1)
            for g in range(1, plan.stream_split + 1)
        }
        got = {key for key in decoded_all if key[0] == user}
        missing = sorted(needed - got, key=_cover_key)
        dups = sorted(
            (key for key in got if decoded_all[key] > 1 and key in needed),
            key=_cover_key,
        )
        extras = sorted(got - needed, key=_cover_key)
        coverage.append(
            UserCoverage(
                user=user,
                needed=len(needed),
                received=len(needed & got),
                missing=tuple(missing),
                duplicates=tuple(dups),
                extras=tuple(extras),
            )
        )

    verdict = all(not c.unresolved for c in checks) and all(
        c.received == c.needed for c in coverage
    )
    return DecodabilityReport(
        verdict=verdict,
        mode=plan.mode,
        num_transmissions=len(plan.transmissions),
        streams=tuple(checks),
        coverage=tuple(coverage),
        mac_width=mac_width,
    )


def _cover_key(item):
    user, label, part, stream = item
    canon = (label,) if isinstance(label, int) else tuple(sorted(label))
    return (user, isinstance(label, int) is False, canon, part, stream)


def verify_dof_accounting(plan: DeliveryPlan) -> int:
    """Distinct streams served per transmission, checked to be uniform.

    For the native and elevated schemes this equals G t + L.  A schedule whose
    slots serve different stream counts is structurally broken and raises
    :class:`PlanFormatError`.
    """
    counts = {
        len({s for term in tx.terms for s in term.served})
        for tx in plan.transmissions
    }
    if len(counts) != 1:
        raise PlanFormatError(
            f"transmissions serve differing stream counts: {sorted(counts)}"
        )
    return counts.pop()


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def report_to_dict(report: DecodabilityReport) -> dict:
    return {
        "verdict": "pass" if report.verdict else "fail",
        "mode": report.mode,
        "transmissions": report.num_transmissions,
        "mac_width": report.mac_width,
        "unresolved": [
            {
                "transmission": c.transmission,
                "stream": [c.stream.user, c.stream.stream],
                "reasons": list(c.unresolved),
            }
            for c in report.streams
            if c.unresolved
        ],
        "coverage": [
            {
                "user": c.user,
                "needed": c.needed,
                "received": c.received,
                "fraction": c.fraction,
                "duplicates": len(c.duplicates),
                "extras": len(c.extras),
            }
            for c in report.coverage
        ],
    }


def format_report(report: DecodabilityReport) -> str:
    lines = [
        f"verdict: {'pass' if report.verdict else 'fail'}",
        f"mode: {report.mode}   transmissions: {report.num_transmissions}   "
        f"mac width: {report.mac_width}",
        "",
        "user  needed  received  coverage  dupes  extras",
    ]
    for c in report.coverage:
        lines.append(
            f"{c.user:4d}  {c.needed:6d}  {c.received:8d}  {c.fraction:8.1%}"
            f"  {len(c.duplicates):5d}  {len(c.extras):6d}"
        )
    bad = [c for c in report.streams if c.unresolved]
    if bad:
        lines.append("")
        lines.append(f"unresolved streams: {len(bad)}")
        for c in bad[:20]:
            for reason in c.unresolved:
                lines.append(
                    f"  tx {c.transmission} stream ({c.stream.user},{c.stream.stream}): {reason}"
                )
        if len(bad) > 20:
            lines.append(f"  ... and {len(bad) - 20} more")
    return "\n".join(lines)
