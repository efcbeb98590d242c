"""Shared helpers for the test suite."""

from collections import Counter

from mimo_cc.model import validate_config
from mimo_cc.schemes import DeliveryPlan, plan_payloads


def valid_configs(max_users=8, gains=(1, 2), rx=(1, 2, 3), stretches=(1, 2)):
    """All valid configurations over the sampled parameter grid."""
    out = []
    for k in range(2, max_users + 1):
        for t in gains:
            for g in rx:
                for eta in stretches:
                    if t + eta > k:
                        continue
                    out.append(
                        validate_config(
                            {
                                "users": k,
                                "caching_gain": t,
                                "tx_multiplexing": eta * g,
                                "rx_multiplexing": g,
                            }
                        )
                    )
    return out


def assert_exact_cover(plan: DeliveryPlan):
    """Every missing (subfile, part, stream) of every user appears exactly once."""
    delivered = Counter(
        (sp.owner, sp.subfile, sp.part, sp.stream) for sp in plan_payloads(plan)
    )
    expected = Counter()
    for user in range(1, plan.config.num_users + 1):
        for label in plan.placement.missing(user):
            for part in range(1, plan.split_count + 1):
                for stream in range(1, plan.stream_split + 1):
                    expected[(user, label, part, stream)] = 1
    assert delivered == expected
