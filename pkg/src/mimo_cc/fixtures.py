"""A packaged six-user reference plan with packet-style placement.

The network has K = 6 users with caching gain t = 1.  Every file is cut into
6 packets and user k caches packet k of every file, so each user needs the
other five packets.  Delivery targets a virtual network with multiplexing
eta = 2: serving sets of three users, each beam nulling one user.

The schedule is built from successor maps.  For every "pivot" user t there is
a fixed-point-free bijection sigma_t on the other five users.  The slot for a
pair (t, c) serves S = {t, c, m} with m = sigma_t(c) and carries three terms:

* user t receives packet m, user m receives packet t (a swap between t and m),
* user c additionally receives packet t.

Each term's beam nulls the one serving-set user who neither owns the packet
nor caches it.  Over all 30 slots every (user, packet) pair appears exactly
three times, once per part, so the plan delivers all 6 * 5 * 3 = 90
single-stream pieces exactly once.  Part indices count occurrences of each
(user, packet) pair in schedule order.
"""

from __future__ import annotations

from .schemes import (
    BaselineMisoPlan,
    BaselineMisoTerm,
    CachePlacement,
    DeliveryPlan,
    elevate_baseline,
)

__all__ = ["k6_baseline", "k6_elevated", "K6_USERS", "K6_STREAMS"]

K6_USERS = 6
K6_STREAMS = 2
_PARTS = 3


def _successor_maps() -> dict[int, dict[int, int]]:
    maps: dict[int, dict[int, int]] = {}
    # Pivot 1 pairs low users by hand so the opening slots read well as an
    # example; the remaining entries just close the cycle without fixed points.
    maps[1] = {2: 4, 3: 2, 4: 3, 5: 6, 6: 5}
    for pivot in range(2, K6_USERS + 1):
        others = [u for u in range(1, K6_USERS + 1) if u != pivot]
        maps[pivot] = {
            u: others[(i + 1) % len(others)] for i, u in enumerate(others)
        }
    return maps


def _slot_order() -> list[tuple[int, int]]:
    lead = [(1, 3), (1, 4)]
    rest = [
        (pivot, c)
        for pivot in range(1, K6_USERS + 1)
        for c in range(1, K6_USERS + 1)
        if c != pivot and (pivot, c) not in lead
    ]
    return lead + rest


def k6_baseline() -> BaselineMisoPlan:
    """The 30-slot single-stream schedule described in the module docstring."""
    sigma = _successor_maps()
    placement = CachePlacement.from_packets(
        K6_USERS, K6_USERS, {k: (k,) for k in range(1, K6_USERS + 1)}
    )
    seen: dict[tuple[int, int], int] = {}

    def term(owner: int, packet: int, serving: set[int]) -> BaselineMisoTerm:
        part = seen.get((owner, packet), 0) + 1
        seen[(owner, packet)] = part
        return BaselineMisoTerm(
            owner=owner,
            packet=packet,
            part=part,
            zf_users=frozenset(serving - {owner, packet}),
        )

    transmissions = []
    for pivot, c in _slot_order():
        m = sigma[pivot][c]
        serving = {pivot, c, m}
        terms = sorted(
            [(pivot, m), (m, pivot), (c, pivot)]
        )  # present receivers in user order
        transmissions.append(tuple(term(o, p, serving) for o, p in terms))

    assert all(count == _PARTS for count in seen.values())
    return BaselineMisoPlan(
        num_users=K6_USERS,
        caching_gain=1,
        multiplexing=2,
        library_size=K6_USERS,
        placement=placement,
        demands=tuple(range(1, K6_USERS + 1)),
        transmissions=tuple(transmissions),
        split_count=_PARTS,
    )


def k6_elevated() -> DeliveryPlan:
    """The baseline stretched to G = 2 streams per user (L = 4)."""
    return elevate_baseline(k6_baseline(), K6_STREAMS)
