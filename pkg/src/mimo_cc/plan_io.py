"""JSON serialization of delivery plans and single-stream baseline plans.

Exports are canonical: subfile labels appear as sorted lists (or bare ints
for packet labels), nulling sets as sorted [user, stream] pairs, and all
floats are absent by construction.  Exporting an imported plan therefore
reproduces the original text byte for byte.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import PlanFormatError
from .model import CodewordId, StreamId, SubfileLabel, SubpacketId, validate_config
from .schemes import (
    BaselineMisoPlan,
    BaselineMisoTerm,
    CachePlacement,
    DeliveryPlan,
    MODES,
    TransmissionTerm,
    TransmissionVector,
)

__all__ = [
    "export_plan",
    "import_plan",
    "save_plan",
    "load_plan",
    "export_baseline",
    "import_baseline",
    "save_baseline",
    "load_baseline",
]

_PLAN_FORMAT = "mimo-cc-plan"
_BASELINE_FORMAT = "mimo-cc-baseline"
_VERSION = 1


# ---------------------------------------------------------------------------
# encoding helpers
# ---------------------------------------------------------------------------


def _encode_label(label: SubfileLabel):
    if isinstance(label, int):
        return label
    return sorted(label)


def _decode_label(raw) -> SubfileLabel:
    if isinstance(raw, int):
        return raw
    if isinstance(raw, list) and all(isinstance(x, int) for x in raw):
        return frozenset(raw)
    raise PlanFormatError(f"bad subfile label {raw!r}")


def _encode_stream(s: StreamId) -> list[int]:
    return [s.user, s.stream]


def _decode_stream(raw) -> StreamId:
    if (
        not isinstance(raw, list)
        or len(raw) != 2
        or not all(isinstance(x, int) for x in raw)
    ):
        raise PlanFormatError(f"bad stream id {raw!r}")
    return StreamId(raw[0], raw[1])


def _encode_subpacket(sp: SubpacketId) -> dict:
    return {
        "owner": sp.owner,
        "subfile": _encode_label(sp.subfile),
        "part": sp.part,
        "stream": sp.stream,
    }


def _decode_subpacket(raw) -> SubpacketId:
    try:
        return SubpacketId(
            owner=raw["owner"],
            subfile=_decode_label(raw["subfile"]),
            part=raw["part"],
            stream=raw["stream"],
        )
    except (KeyError, TypeError) as exc:
        raise PlanFormatError(f"bad subpacket entry {raw!r}") from exc


def _encode_payload(payload) -> dict:
    if isinstance(payload, CodewordId):
        return {
            "targets": sorted(payload.target_set),
            "stream": payload.stream,
            "components": [_encode_subpacket(c) for c in payload.components],
        }
    return _encode_subpacket(payload)


def _decode_payload(raw):
    if not isinstance(raw, dict):
        raise PlanFormatError(f"bad payload entry {raw!r}")
    if "targets" in raw:
        try:
            return CodewordId(
                target_set=frozenset(raw["targets"]),
                stream=raw["stream"],
                components=tuple(_decode_subpacket(c) for c in raw["components"]),
            )
        except (KeyError, TypeError) as exc:
            raise PlanFormatError(f"bad codeword entry {raw!r}") from exc
    return _decode_subpacket(raw)


def _encode_placement(placement: CachePlacement) -> dict:
    return {
        "subfiles": [_encode_label(lab) for lab in placement.subfiles],
        "cached": [
            sorted((_encode_label(lab) for lab in labels), key=_label_key)
            for labels in placement.cached
        ],
    }


def _label_key(encoded):
    return (0, [encoded]) if isinstance(encoded, int) else (1, encoded)


def _decode_placement(raw, num_users: int) -> CachePlacement:
    try:
        subfiles = tuple(_decode_label(lab) for lab in raw["subfiles"])
        cached = tuple(
            frozenset(_decode_label(lab) for lab in labels) for labels in raw["cached"]
        )
    except (KeyError, TypeError) as exc:
        raise PlanFormatError("bad placement section") from exc
    if len(cached) != num_users:
        raise PlanFormatError(
            f"placement lists {len(cached)} users, config says {num_users}"
        )
    return CachePlacement(num_users, subfiles, cached)


# ---------------------------------------------------------------------------
# delivery plans
# ---------------------------------------------------------------------------


def _config_to_dict(config) -> dict:
    return {
        "users": config.num_users,
        "caching_gain": config.caching_gain,
        "tx_multiplexing": config.tx_multiplexing,
        "rx_multiplexing": config.rx_multiplexing,
        "library_size": config.library_size,
        "tx_antennas": config.tx_antennas,
        "rx_antennas": config.rx_antennas,
    }


def plan_to_dict(plan: DeliveryPlan) -> dict:
    return {
        "format": _PLAN_FORMAT,
        "version": _VERSION,
        "config": _config_to_dict(plan.config),
        "mode": plan.mode,
        "split_count": plan.split_count,
        "stream_split": plan.stream_split,
        "demands": list(plan.demands),
        "placement": _encode_placement(plan.placement),
        "transmissions": [
            {
                "serving_set": sorted(tx.serving_set),
                "terms": [
                    {
                        "payload": _encode_payload(term.payload),
                        "zf": sorted(_encode_stream(s) for s in term.zf_set),
                        "served": [_encode_stream(s) for s in term.served],
                    }
                    for term in tx.terms
                ],
            }
            for tx in plan.transmissions
        ],
    }


def plan_from_dict(data: Any) -> DeliveryPlan:
    if not isinstance(data, dict):
        raise PlanFormatError("plan document must be a JSON object")
    if data.get("format") != _PLAN_FORMAT:
        raise PlanFormatError(f"not a plan file (format={data.get('format')!r})")
    if data.get("version") != _VERSION:
        raise PlanFormatError(f"unsupported plan version {data.get('version')!r}")
    try:
        config = validate_config(data["config"])
        mode = data["mode"]
        if mode not in MODES:
            raise PlanFormatError(f"unknown mode {mode!r}")
        placement = _decode_placement(data["placement"], config.num_users)
        demands = tuple(int(d) for d in data["demands"])
        transmissions = []
        for idx, tx in enumerate(data["transmissions"]):
            terms = tuple(
                TransmissionTerm(
                    payload=_decode_payload(term["payload"]),
                    zf_set=frozenset(_decode_stream(s) for s in term["zf"]),
                    served=tuple(_decode_stream(s) for s in term["served"]),
                )
                for term in tx["terms"]
            )
            transmissions.append(
                TransmissionVector(frozenset(tx["serving_set"]), terms, idx)
            )
        return DeliveryPlan(
            config=config,
            mode=mode,
            placement=placement,
            demands=demands,
            transmissions=tuple(transmissions),
            split_count=int(data["split_count"]),
            stream_split=int(data["stream_split"]),
        )
    except PlanFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanFormatError(f"malformed plan document: {exc}") from exc


def export_plan(plan: DeliveryPlan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2) + "\n"


def import_plan(text: str) -> DeliveryPlan:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanFormatError(f"invalid JSON: {exc}") from exc
    return plan_from_dict(data)


def save_plan(plan: DeliveryPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(export_plan(plan))


def load_plan(path) -> DeliveryPlan:
    with open(path, "r", encoding="utf-8") as handle:
        return import_plan(handle.read())


# ---------------------------------------------------------------------------
# baseline plans
# ---------------------------------------------------------------------------


def baseline_to_dict(baseline: BaselineMisoPlan) -> dict:
    return {
        "format": _BASELINE_FORMAT,
        "version": _VERSION,
        "users": baseline.num_users,
        "caching_gain": baseline.caching_gain,
        "multiplexing": baseline.multiplexing,
        "library_size": baseline.library_size,
        "split_count": baseline.split_count,
        "demands": list(baseline.demands),
        "placement": _encode_placement(baseline.placement),
        "transmissions": [
            [
                {
                    "subpacket": [
                        term.owner,
                        _encode_label(term.packet),
                        term.part,
                    ],
                    "zf_users": sorted(term.zf_users),
                }
                for term in tx
            ]
            for tx in baseline.transmissions
        ],
    }


def baseline_from_dict(data: Any) -> BaselineMisoPlan:
    if not isinstance(data, dict):
        raise PlanFormatError("baseline document must be a JSON object")
    if data.get("format") != _BASELINE_FORMAT:
        raise PlanFormatError(f"not a baseline file (format={data.get('format')!r})")
    if data.get("version") != _VERSION:
        raise PlanFormatError(f"unsupported baseline version {data.get('version')!r}")
    try:
        num_users = int(data["users"])
        placement = _decode_placement(data["placement"], num_users)
        transmissions = []
        for tx in data["transmissions"]:
            terms = []
            for term in tx:
                owner, packet, part = term["subpacket"]
                terms.append(
                    BaselineMisoTerm(
                        owner=int(owner),
                        packet=_decode_label(packet),
                        part=int(part),
                        zf_users=frozenset(term["zf_users"]),
                    )
                )
            transmissions.append(tuple(terms))
        return BaselineMisoPlan(
            num_users=num_users,
            caching_gain=int(data["caching_gain"]),
            multiplexing=int(data["multiplexing"]),
            library_size=int(data["library_size"]),
            placement=placement,
            demands=tuple(int(d) for d in data["demands"]),
            transmissions=tuple(transmissions),
            split_count=int(data["split_count"]),
        )
    except PlanFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanFormatError(f"malformed baseline document: {exc}") from exc


def export_baseline(baseline: BaselineMisoPlan) -> str:
    return json.dumps(baseline_to_dict(baseline), indent=2) + "\n"


def import_baseline(text: str) -> BaselineMisoPlan:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanFormatError(f"invalid JSON: {exc}") from exc
    return baseline_from_dict(data)


def save_baseline(baseline: BaselineMisoPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(export_baseline(baseline))


def load_baseline(path) -> BaselineMisoPlan:
    with open(path, "r", encoding="utf-8") as handle:
        return import_baseline(handle.read())
