"""Monte-Carlo finite-SNR evaluation of the delivery schemes.

Three modes are compared:

* ``mimo-unicast``   — native multi-stream delivery, per-stream subpackets;
* ``mimo-multicast`` — native delivery with XOR codeword beams;
* ``virtual-miso``   — every receiver collapses its antennas with the
  strongest-eigenmode combiner and the single-stream scheme runs over the
  resulting effective channels with multiplexing L.

and two beamformer strategies: ``zf`` (closed-form zero forcing, equal power
split) and ``optimized`` (alternating max-min design).

The reported metric is the symmetric rate: per transmission, S times the
minimum decoded-group rate, where S is the number of served stream groups
(G t + L for the MIMO modes, t + L for virtual MISO).  A group is everything
a user decodes through one combiner output: a single stream when eta = 1,
and the full multiple-access bundle of eta subpackets when G = 1.  Group
rate is ln(1 + sum of signal powers / (unremovable interference + N0)),
where interference a user can reconstruct from its cache is removed before
detection.  With this normalization the high-SNR slope of the mean rate
against ln(SNR) estimates the degrees of freedom.

Noise is fixed at N0 = 1, so the SNR sweep is a pure power sweep:
P_T = 10^(SNR_dB / 10).

All numbers are deterministic in (master_seed, params): trial channels are
drawn from per-trial seed sequences and the aggregation uses compensated
summation, so results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channel import (
    ChannelRealization,
    generate_channel,
    strongest_eigenmode_receiver,
    zf_beamformer_set,
)
from .errors import InsufficientPoints, ModeMismatch, UnsupportedCombination
from .model import CodewordId, NetworkConfig, StreamId, validate_config
from .optimizer import OptProblem, OptSchedule, optimize_beamformers
from .schemes import (
    CachePlacement,
    DeliveryPlan,
    TransmissionVector,
    build_multicast_plan,
    build_unicast_plan,
    count_dof,
)

__all__ = [
    "EVAL_MODES",
    "STRATEGIES",
    "SimulationParams",
    "RateReport",
    "run_sweep",
    "run_mimo_trial",
    "run_virtual_miso_trial",
    "estimate_dof_slope",
    "virtual_network",
    "virtual_realization",
    "write_csv",
    "write_csv_many",
]

EVAL_MODES = ("mimo-unicast", "mimo-multicast", "virtual-miso")
STRATEGIES = ("zf", "optimized")

CSV_COLUMNS = (
    "snr_db",
    "mode",
    "strategy",
    "mean_rate_nats",
    "stderr",
    "trials",
    "dof_slope_window",
    "dof_slope",
)


@dataclass(frozen=True)
class SimulationParams:
    """One sweep: a network, an SNR grid, and how to beamform."""

    config: NetworkConfig
    snr_points_db: tuple[float, ...]
    trials: int
    master_seed: int
    mode: str
    strategy: str
    schedule: OptSchedule | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "snr_points_db", tuple(float(s) for s in self.snr_points_db)
        )
        if not self.snr_points_db:
            raise ValueError("need at least one SNR point")
        if any(b <= a for a, b in zip(self.snr_points_db, self.snr_points_db[1:])):
            raise ValueError("SNR points must be strictly increasing")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.mode not in EVAL_MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {EVAL_MODES}")
        if self.strategy not in STRATEGIES:
            raise ValueError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        check_supported(self.config, self.mode, self.strategy)


def check_supported(config: NetworkConfig, mode: str, strategy: str) -> None:
    """Reject (mode, strategy) pairs without a finite-SNR rate expression.

    The optimized design covers stretch factor 1 only.  The zero-forcing
    rates cover stretch 1 (per-stream decoding) and G = 1 (multiple-access
    decoding of a single combiner output); wider stretch with G > 1 would
    need multi-dimensional joint decoding, which no mode provides.  The
    virtual MISO reduction always presents a G = 1 network, so its stretch
    factor is L.
    """
    if mode == "virtual-miso":
        eta = config.tx_multiplexing  # stretch of the effective network
        streams = 1
    else:
        eta = config.eta
        streams = config.rx_multiplexing
    if strategy == "optimized":
        if eta != 1:
            raise UnsupportedCombination(
                f"optimized beamforming needs stretch factor 1, got {eta} for {mode}"
            )
    elif eta != 1 and streams != 1:
        raise UnsupportedCombination(
            f"zero-forcing rates need stretch 1 or single-stream receivers; "
            f"got stretch {eta} with {streams} streams for {mode}"
        )


@dataclass(frozen=True)
class RateReport:
    """Sweep results: one mean/stderr per SNR point plus per-trial raw data."""

    params: SimulationParams
    mean_rates: tuple[float, ...]
    stderrs: tuple[float, ...]
    raw: tuple[tuple[float, ...], ...]  # raw[i][j]: SNR point i, trial j
    dof_slope: float | None
    dof_slope_window: tuple[float, float] | None


# ---------------------------------------------------------------------------
# per-transmission rates
# ---------------------------------------------------------------------------


def _removable(payload, user: int, placement: CachePlacement) -> bool:
    """Can ``user`` reconstruct this payload from its cache and subtract it
    before detection?  Anything carrying the user's own data is never
    removable — that is self-interference, not a cache hit."""
    if isinstance(payload, CodewordId):
        if any(c.owner == user for c in payload.components):
            return False
        return all(placement.knows(user, c.subfile) for c in payload.components)
    if payload.owner == user:
        return False
    return placement.knows(user, payload.subfile)


def group_rates(
    transmission: TransmissionVector,
    beams,
    placement: CachePlacement,
) -> dict[StreamId, float]:
    """ln(1 + SINR) per decoded group.

    Groups are keyed by served stream id; every term serving the same id is
    decoded jointly through one combiner output, so their signal powers add
    (the multiple-access bundle).  Terms the user can cache-remove drop out
    of the denominator; everything else it hears is interference.
    """
    served_ids = []
    seen = set()
    for term in transmission.terms:
        for s in term.served:
            if s not in seen:
                seen.add(s)
                served_ids.append(s)
    n0 = beams.noise_power
    out: dict[StreamId, float] = {}
    for s in served_ids:
        h = beams.eq[s]
        signal = 0.0
        interference = 0.0
        for j, term in enumerate(transmission.terms):
            p = abs(np.vdot(h, beams.tx[j])) ** 2
            if s in term.served:
                signal += p
            elif not _removable(term.payload, s.user, placement):
                interference += p
        out[s] = math.log1p(signal / (interference + n0))
    return out


def _plan_for(config: NetworkConfig, mode: str) -> DeliveryPlan:
    if mode == "mimo-multicast":
        return build_multicast_plan(config)
    return build_unicast_plan(config)


def _trial_rates(
    plan: DeliveryPlan,
    realization: ChannelRealization,
    power_budget: float,
    strategy: str,
    schedule: OptSchedule | None,
) -> tuple[float, ...]:
    """Symmetric rate of every transmission in the plan for one channel draw."""
    streams = plan.config.rx_multiplexing
    s_count = count_dof(plan.config, plan.mode)
    rates = []
    if strategy == "optimized":
        opt_mode = "multicast" if plan.mode == "multicast" else "unicast"
        for tx in plan.transmissions:
            users = tuple(sorted(tx.serving_set))
            prob = OptProblem(
                mode=opt_mode,
                users=users,
                channels=tuple(realization.user(k) for k in users),
                streams=streams,
                noise_power=realization.noise_power,
                power_budget=power_budget,
            )
            result = optimize_beamformers(prob, schedule=schedule)
            rates.append(s_count * result.objective)
    else:
        for tx in plan.transmissions:
            beams = zf_beamformer_set(tx, realization, power_budget, streams)
            groups = group_rates(tx, beams, plan.placement)
            if len(groups) != s_count:
                raise ModeMismatch(
                    f"transmission serves {len(groups)} groups, expected {s_count}"
                )
            rates.append(s_count * min(groups.values()))
    return tuple(rates)


def run_mimo_trial(
    config: NetworkConfig,
    channel: ChannelRealization,
    power_budget: float,
    mode: str = "mimo-unicast",
    strategy: str = "zf",
    schedule: OptSchedule | None = None,
) -> tuple[float, ...]:
    """Per-transmission symmetric rates of a native multi-stream scheme."""
    if mode not in ("mimo-unicast", "mimo-multicast"):
        raise ValueError(f"not a MIMO mode: {mode!r}")
    check_supported(config, mode, strategy)
    return _trial_rates(_plan_for(config, mode), channel, power_budget, strategy, schedule)


# ---------------------------------------------------------------------------
# virtual MISO reduction
# ---------------------------------------------------------------------------


def virtual_network(config: NetworkConfig) -> NetworkConfig:
    """The effective network after strongest-eigenmode combining: same users
    and caches, single-stream receivers, stretch factor L."""
    return validate_config(
        {
            "users": config.num_users,
            "caching_gain": config.caching_gain,
            "tx_multiplexing": config.tx_multiplexing,
            "rx_multiplexing": 1,
            "library_size": config.library_size,
            "tx_antennas": config.tx_antennas,
            "rx_antennas": 1,
        }
    )


def virtual_realization(channel: ChannelRealization) -> ChannelRealization:
    """Collapse every user to one effective row through its strongest
    eigenmode.  Single-row inputs pass through unchanged, so a G = 1 network
    is its own virtual reduction."""
    rows = []
    for mat in channel.matrices:
        if mat.shape[0] == 1:
            rows.append(mat.copy())
        else:
            u = strongest_eigenmode_receiver(mat)
            rows.append((u.conj() @ mat).reshape(1, -1))
    return ChannelRealization(
        tuple(rows), channel.noise_power, channel.master_seed, channel.trial
    )


def run_virtual_miso_trial(
    config: NetworkConfig,
    channel: ChannelRealization,
    power_budget: float,
    strategy: str = "zf",
    schedule: OptSchedule | None = None,
) -> tuple[float, ...]:
    """Per-transmission symmetric rates of the virtual MISO baseline."""
    check_supported(config, "virtual-miso", strategy)
    vconf = virtual_network(config)
    return _trial_rates(
        build_unicast_plan(vconf),
        virtual_realization(channel),
        power_budget,
        strategy,
        schedule,
    )


# ---------------------------------------------------------------------------
# sweeps and reports
# ---------------------------------------------------------------------------


def run_sweep(
    params: SimulationParams,
    progress: Callable[[int, int], None] | None = None,
) -> RateReport:
    """Sweep the SNR grid over ``params.trials`` channel draws.

    Each trial draws one channel, reused across all SNR points so the sweep
    isolates the effect of power.  Per trial and SNR point the value recorded
    is the mean symmetric rate over the plan's transmissions; the report
    averages those over trials.
    """
    config = params.config
    if params.mode == "virtual-miso":
        plan = build_unicast_plan(virtual_network(config))
    else:
        plan = _plan_for(config, params.mode)
    powers = [10.0 ** (snr / 10.0) for snr in params.snr_points_db]
    per_snr: list[list[float]] = [[] for _ in powers]
    for trial in range(params.trials):
        drawn = generate_channel(config, params.master_seed, trial)
        realization = (
            virtual_realization(drawn) if params.mode == "virtual-miso" else drawn
        )
        for i, power in enumerate(powers):
            rates = _trial_rates(
                plan, realization, power, params.strategy, params.schedule
            )
            per_snr[i].append(math.fsum(rates) / len(rates))
        if progress is not None:
            progress(trial + 1, params.trials)

    means = tuple(math.fsum(vals) / len(vals) for vals in per_snr)
    stderrs = tuple(_stderr(vals) for vals in per_snr)
    if len(params.snr_points_db) >= 2:
        window = (params.snr_points_db[-2], params.snr_points_db[-1])
        slope = _slope(params.snr_points_db[-2:], means[-2:])
    else:
        window = None
        slope = None
    return RateReport(
        params=params,
        mean_rates=means,
        stderrs=stderrs,
        raw=tuple(tuple(vals) for vals in per_snr),
        dof_slope=slope,
        dof_slope_window=window,
    )


def _stderr(values: Sequence[float]) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return math.sqrt(var) / math.sqrt(n)


def _slope(snrs_db: Sequence[float], means: Sequence[float]) -> float:
    """Least-squares slope of mean rate against ln(SNR)."""
    x = [snr * math.log(10.0) / 10.0 for snr in snrs_db]
    xbar = math.fsum(x) / len(x)
    ybar = math.fsum(means) / len(means)
    num = math.fsum((a - xbar) * (b - ybar) for a, b in zip(x, means))
    den = math.fsum((a - xbar) ** 2 for a in x)
    return num / den


def estimate_dof_slope(
    report: RateReport, snr_window_db: tuple[float, float]
) -> float:
    """Slope of the report's mean rates against ln(SNR), restricted to points
    with lo <= snr_db <= hi.  Needs at least two points in the window."""
    lo, hi = snr_window_db
    pairs = [
        (snr, mean)
        for snr, mean in zip(report.params.snr_points_db, report.mean_rates)
        if lo <= snr <= hi
    ]
    if len(pairs) < 2:
        raise InsufficientPoints(
            f"window [{lo}, {hi}] dB holds {len(pairs)} SNR points; need 2"
        )
    return _slope([p[0] for p in pairs], [p[1] for p in pairs])


def write_csv(report: RateReport, destination) -> None:
    """Write one row per SNR point with the fixed column set.

    ``destination`` may be a path or an open text file.  The slope columns
    repeat the report-level estimate on every row (empty for single-point
    sweeps).
    """
    write_csv_many((report,), destination)


def write_csv_many(reports: Sequence[RateReport], destination) -> None:
    """One CSV with a shared header and each report's rows in order, giving
    one row per (snr, mode, strategy) triple."""
    if hasattr(destination, "write"):
        _write_csv_reports(reports, destination)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as f:
            _write_csv_reports(reports, f)


def _write_csv_reports(reports: Sequence[RateReport], f) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for report in reports:
        _write_csv_rows(report, writer)


def _write_csv_rows(report: RateReport, writer) -> None:
    if report.dof_slope_window is None:
        window_text = ""
        slope_text = ""
    else:
        lo, hi = report.dof_slope_window
        window_text = f"{lo:g}:{hi:g}"
        slope_text = repr(report.dof_slope)
    for snr, mean, err in zip(
        report.params.snr_points_db, report.mean_rates, report.stderrs
    ):
        writer.writerow(
            [
                f"{snr:g}",
                report.params.mode,
                report.params.strategy,
                repr(mean),
                repr(err),
                report.params.trials,
                window_text,
                slope_text,
            ]
        )
