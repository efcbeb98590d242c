"""End-to-end checks tying the whole pipeline together.

Each test exercises one system-level guarantee: exact reproduction of the
shipped six-user construction, decodability of every generated plan, stream
counts read back off simulated rate slopes, finite-SNR scheme orderings,
the optimizer's contract, agreement between closed-form SINRs and
symbol-level signal synthesis, and the combinatorial size identities.
Wall-clock budgets are asserted where the margin makes the bound robust.
"""

import dataclasses
import math
import time

import numpy as np
import pytest

from mimo_cc.channel import compute_sinrs, generate_channel, zf_beamformer_set
from mimo_cc.errors import MimoCcError
from mimo_cc.evaluator import (
    SimulationParams,
    estimate_dof_slope,
    group_rates,
    run_sweep,
)
from mimo_cc.fixtures import k6_baseline
from mimo_cc.model import CodewordId, StreamId, SubpacketId, validate_config
from mimo_cc.optimizer import OptProblem, optimize_beamformers
from mimo_cc.schemes import (
    build_baseline_plan,
    build_multicast_plan,
    build_placement,
    build_unicast_plan,
    count_subpacketization,
    elevate_baseline,
    plan_subpacketization,
)
from mimo_cc.verifier import verify_plan


def cfg(users, t, tx, rx):
    return validate_config(
        {"users": users, "caching_gain": t, "tx_multiplexing": tx, "rx_multiplexing": rx}
    )


def _sub(owner, subfile, part, stream):
    return SubpacketId(owner=owner, subfile=subfile, part=part, stream=stream)


def _zf(*pairs):
    return frozenset(StreamId(u, g) for u, g in pairs)


# ---------------------------------------------------------------------------
# Six-user worked construction: two receive streams elevated from the
# two-antenna single-stream baseline.  The expected terms are frozen here
# independently of the shipped fixture files.

X1_TERMS = [
    (_sub(1, 2, 1, 1), _zf((1, 2), (3, 1), (3, 2)), StreamId(1, 1)),
    (_sub(1, 2, 1, 2), _zf((1, 1), (3, 1), (3, 2)), StreamId(1, 2)),
    (_sub(2, 1, 1, 1), _zf((2, 2), (3, 1), (3, 2)), StreamId(2, 1)),
    (_sub(2, 1, 1, 2), _zf((2, 1), (3, 1), (3, 2)), StreamId(2, 2)),
    (_sub(3, 1, 1, 1), _zf((2, 1), (2, 2), (3, 2)), StreamId(3, 1)),
    (_sub(3, 1, 1, 2), _zf((2, 1), (2, 2), (3, 1)), StreamId(3, 2)),
]

X2_TERMS = [
    (_sub(1, 3, 1, 1), _zf((1, 2), (4, 1), (4, 2)), StreamId(1, 1)),
    (_sub(1, 3, 1, 2), _zf((1, 1), (4, 1), (4, 2)), StreamId(1, 2)),
    (_sub(3, 1, 2, 1), _zf((3, 2), (4, 1), (4, 2)), StreamId(3, 1)),
    (_sub(3, 1, 2, 2), _zf((3, 1), (4, 1), (4, 2)), StreamId(3, 2)),
    (_sub(4, 1, 1, 1), _zf((3, 1), (3, 2), (4, 2)), StreamId(4, 1)),
    (_sub(4, 1, 1, 2), _zf((3, 1), (3, 2), (4, 1)), StreamId(4, 2)),
]


class TestSixUserElevation:
    def test_first_two_transmissions_term_by_term(self):
        start = time.perf_counter()
        plan = elevate_baseline(k6_baseline(), 2)
        x1, x2 = plan.transmissions[0], plan.transmissions[1]
        assert x1.serving_set == frozenset({1, 2, 3})
        assert x2.serving_set == frozenset({1, 3, 4})
        for tx, expected in ((x1, X1_TERMS), (x2, X2_TERMS)):
            assert len(tx.terms) == 6
            got = [(t.payload, t.zf_set, t.served) for t in tx.terms]
            want = [(p, z, (s,)) for p, z, s in expected]
            assert got == want
        assert count_subpacketization(plan.config, "low_subpacketization") == 36
        assert plan_subpacketization(plan) == 36
        assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------------------
# Decodability: every generated plan passes the interference-accounting
# check, every demanded piece is delivered exactly once, and the check is
# sharp — changing any single nulling entry flips the verdict.


def _grid_configs():
    for k in range(2, 9):
        for t in (1, 2):
            for g in (1, 2, 3):
                for eta in (1, 2):
                    if t + eta > k:
                        continue
                    yield k, t, g, eta


def _mutations(plan):
    """Every plan obtained by swapping one nulling entry for another stream
    of the same serving set."""
    g_tot = plan.config.rx_multiplexing
    for i, tx in enumerate(plan.transmissions):
        scope = [StreamId(u, g) for u in sorted(tx.serving_set)
                 for g in range(1, g_tot + 1)]
        for j, term in enumerate(tx.terms):
            for victim in sorted(term.zf_set):
                for repl in scope:
                    if repl in term.zf_set:
                        continue
                    zf = frozenset(s for s in term.zf_set if s != victim) | {repl}
                    new_term = dataclasses.replace(term, zf_set=zf)
                    terms = tuple(new_term if jj == j else t2
                                  for jj, t2 in enumerate(tx.terms))
                    new_tx = dataclasses.replace(tx, terms=terms)
                    yield dataclasses.replace(
                        plan,
                        transmissions=tuple(new_tx if ii == i else t3
                                            for ii, t3 in enumerate(plan.transmissions)),
                    )


class TestDecodabilityOracle:
    def test_every_generated_plan_verifies(self):
        start = time.perf_counter()
        checked = 0
        for k, t, g, eta in _grid_configs():
            config = cfg(k, t, g * eta, g)
            unicast = build_unicast_plan(config)
            payloads = [term.payload for tx in unicast.transmissions for term in tx.terms]
            assert len(payloads) == len(set(payloads))  # exactly-once delivery
            for plan in (unicast, build_multicast_plan(config)):
                assert verify_plan(plan).verdict, (k, t, g, eta, plan.mode)
                checked += 1
            elevated = elevate_baseline(build_baseline_plan(k, t, eta), g)
            assert verify_plan(elevated).verdict, (k, t, g, eta, "elevated")
            checked += 1
        assert checked == 216
        assert time.perf_counter() - start < 60.0

    @pytest.mark.parametrize("make", [
        lambda: elevate_baseline(k6_baseline(), 2),
        lambda: build_multicast_plan(cfg(5, 1, 4, 2)),
        lambda: build_unicast_plan(cfg(5, 1, 4, 2)),
    ], ids=["elevated-k6", "multicast-k5", "unicast-k5"])
    def test_single_nulling_mutations_flip_the_verdict(self, make):
        plan = make()
        assert verify_plan(plan).verdict
        count = 0
        for mutated in _mutations(plan):
            assert not verify_plan(mutated).verdict
            count += 1
        assert count >= 400


# ---------------------------------------------------------------------------
# Rate slopes at high SNR recover the per-transmission stream counts.


class TestRateSlopes:
    def test_zero_forcing_slopes_recover_stream_counts(self):
        network = cfg(4, 1, 2, 2)
        start = time.perf_counter()
        slopes = {}
        for mode in ("mimo-unicast", "mimo-multicast", "virtual-miso"):
            report = run_sweep(SimulationParams(
                network, (30.0, 35.0, 40.0), trials=200, master_seed=2024,
                mode=mode, strategy="zf"))
            slopes[mode] = estimate_dof_slope(report, (30.0, 40.0))
        assert abs(slopes["mimo-unicast"] - 4.0) <= 0.4
        assert abs(slopes["mimo-multicast"] - 4.0) <= 0.4
        assert abs(slopes["virtual-miso"] - 3.0) <= 0.3
        assert time.perf_counter() - start < 300.0


# ---------------------------------------------------------------------------
# Finite-SNR orderings on the eight-user network.  The wide sweep is shared:
# both orderings are statements about the same multicast rates.

EIGHT_USERS = {"users": 8, "caching_gain": 1, "tx_multiplexing": 2, "rx_multiplexing": 2}
SNR_GRID = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
SWEEP_SEED = 424242
SWEEP_TRIALS = 100


def _timed_sweep(snr, mode, strategy):
    params = SimulationParams(validate_config(dict(EIGHT_USERS)), snr,
                              trials=SWEEP_TRIALS, master_seed=SWEEP_SEED,
                              mode=mode, strategy=strategy)
    start = time.perf_counter()
    report = run_sweep(params)
    return report, time.perf_counter() - start


@pytest.fixture(scope="module")
def multicast_sweep():
    return _timed_sweep(SNR_GRID, "mimo-multicast", "optimized")


@pytest.fixture(scope="module")
def unicast_sweep():
    return _timed_sweep((5.0, 10.0), "mimo-unicast", "optimized")


@pytest.fixture(scope="module")
def virtual_sweep():
    return _timed_sweep(SNR_GRID, "virtual-miso", "zf")


class TestMulticastBeatsUnicast:
    def test_paired_improvement_at_low_snr(self, multicast_sweep, unicast_sweep):
        multicast, t_multi = multicast_sweep
        unicast, t_uni = unicast_sweep
        # Student-t critical value, one-sided 95%, 99 degrees of freedom.
        t_crit = 1.6604
        for snr in (5.0, 10.0):
            m = multicast.params.snr_points_db.index(snr)
            u = unicast.params.snr_points_db.index(snr)
            assert multicast.mean_rates[m] > unicast.mean_rates[u]
            # Same master seed and network, so trial j sees the same channel
            # in both sweeps and the differences are paired.
            diffs = np.asarray(multicast.raw[m]) - np.asarray(unicast.raw[u])
            t_stat = diffs.mean() / (diffs.std(ddof=1) / math.sqrt(len(diffs)))
            assert t_stat > t_crit, (snr, t_stat)
        # The two low-SNR points cost at most twice the grid average (cost per
        # point grows with SNR), so this bounds the work this ordering needs.
        assert t_multi * (2 / 7) + t_uni < 1800.0


class TestMimoBeatsVirtualMiso:
    def test_mean_rates_dominate_and_gap_widens(self, multicast_sweep, virtual_sweep):
        multicast, t_multi = multicast_sweep
        virtual, t_virt = virtual_sweep
        gaps = [m - v for m, v in zip(multicast.mean_rates, virtual.mean_rates)]
        assert all(g >= 0.0 for g in gaps), gaps
        assert gaps[SNR_GRID.index(30.0)] > gaps[SNR_GRID.index(5.0)]
        assert t_multi + t_virt < 1800.0


# ---------------------------------------------------------------------------
# Optimizer contract on two-user serving sets: monotone ascent, feasible
# power, never worse than the zero-forcing design it starts from.


class TestOptimizerContract:
    def test_fifty_random_instances(self):
        network = cfg(2, 1, 2, 2)
        power = 10.0
        placement = build_placement(network)
        plans = {
            "unicast": build_unicast_plan(network),
            "multicast": build_multicast_plan(network),
        }
        start = time.perf_counter()
        for i in range(50):
            mode = "unicast" if i % 2 == 0 else "multicast"
            tx = plans[mode].transmissions[0]
            users = tuple(sorted(tx.serving_set))
            ch = generate_channel(network, seed=9090, trial=i)
            problem = OptProblem(
                mode=mode, users=users,
                channels=tuple(ch.user(k) for k in users),
                streams=2, noise_power=1.0, power_budget=power,
            )
            result = optimize_beamformers(problem)
            trace = np.asarray(result.trace)
            assert np.all(np.diff(trace) >= 0.0)
            assert result.beamformers.total_power() <= power * (1.0 + 1e-9)
            zf_rates = group_rates(tx, zf_beamformer_set(tx, ch, power, 2), placement)
            assert result.objective >= min(zf_rates.values()) - 1e-9, i
        assert time.perf_counter() - start < 120.0


# ---------------------------------------------------------------------------
# SINR formulas against symbol-level synthesis.  The reference below projects
# each beam through the raw channel matrix one unit symbol at a time, applies
# the receive combiner, subtracts every payload the cache can rebuild, and
# forms the power ratio — no shared intermediates with the library path.


def _cache_subtractable(payload, user):
    if isinstance(payload, CodewordId):
        return all(c.owner != user and user in c.subfile for c in payload.components)
    return payload.owner != user and user in payload.subfile


def _synthesized_sinrs(transmission, beams, channel):
    out = {}
    for i, term in enumerate(transmission.terms):
        for stream in term.served:
            u = beams.rx[stream]
            H = channel.user(stream.user)
            coeffs = [u.conj() @ (H @ w) for w in beams.tx]
            interference = 0.0
            for j, other in enumerate(transmission.terms):
                if j != i and not _cache_subtractable(other.payload, stream.user):
                    interference += abs(coeffs[j]) ** 2
            out[stream] = abs(coeffs[i]) ** 2 / (interference + beams.noise_power)
    return out


def _perturbed(beams, rng):
    """Keep each beam's power but rotate it off the exact nulls so cross
    terms are nonzero and the interference accounting actually matters."""
    new_tx = []
    for w in beams.tx:
        noise = rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape)
        v = w + 0.3 * np.linalg.norm(w) * noise / np.linalg.norm(noise)
        new_tx.append(v * (np.linalg.norm(w) / np.linalg.norm(v)))
    return dataclasses.replace(beams, tx=tuple(new_tx))


class TestSinrSynthesisParity:
    # Single-slot networks (equal transmit and receive multiplexing) of
    # assorted sizes; both delivery styles are drawn from the pool.
    POOL = [(2, 1, 2), (3, 1, 2), (3, 2, 3), (4, 1, 1),
            (4, 2, 2), (5, 1, 3), (6, 2, 2), (8, 3, 2)]

    def test_hundred_instances_match_to_1e12(self):
        start = time.perf_counter()
        for i in range(100):
            users, t, g = self.POOL[i % len(self.POOL)]
            network = cfg(users, t, g, g)
            build = build_unicast_plan if (i // 8) % 2 == 0 else build_multicast_plan
            plan = build(network)
            tx = plan.transmissions[i % len(plan.transmissions)]
            ch = generate_channel(network, seed=7000 + i, trial=0)
            rng = np.random.default_rng(1000 + i)
            beams = _perturbed(zf_beamformer_set(tx, ch, 31.6, g), rng)
            reference = compute_sinrs(tx, beams)
            synthesized = _synthesized_sinrs(tx, beams, ch)
            assert reference.keys() == synthesized.keys()
            for stream, value in reference.items():
                assert math.isclose(value, synthesized[stream],
                                    rel_tol=1e-12, abs_tol=1e-15), (i, stream)
        assert time.perf_counter() - start < 60.0


# ---------------------------------------------------------------------------
# Combinatorial size identities for the direct builders.


class TestCountingIdentities:
    def test_sizes_match_closed_forms(self):
        start = time.perf_counter()
        seen = 0
        for k in range(2, 9):
            for t in range(0, k):
                for g in (1, 2, 3, 4):
                    for eta in (1, 2, 3, 4):
                        if t + eta > k:
                            continue
                        try:
                            config = cfg(k, t, g * eta, g)
                        except MimoCcError:
                            continue
                        s = t + eta
                        unicast = build_unicast_plan(config)
                        multicast = build_multicast_plan(config)
                        assert len(unicast.transmissions) == math.comb(k, s)
                        assert len(multicast.transmissions) == math.comb(k, s)
                        for tx in unicast.transmissions:
                            assert len(tx.terms) == g * (t + 1) * math.comb(s, t + 1)
                            assert all(len(term.zf_set) == g * eta - 1
                                       for term in tx.terms)
                        # A codeword's nulling set holds every stream of the
                        # eta - 1 users outside its target set plus the other
                        # g - 1 stream indices inside it; that collapses to
                        # L - 1 exactly when g = 1 or t = 0.
                        codeword_zf = g * (eta - 1) + (g - 1) * (t + 1)
                        for tx in multicast.transmissions:
                            assert len(tx.terms) == g * math.comb(s, t + 1)
                            assert all(len(term.zf_set) == codeword_zf
                                       for term in tx.terms)
                        subpack = g * math.comb(k, t) * math.comb(k - t - 1, eta - 1)
                        assert count_subpacketization(config) == subpack
                        assert plan_subpacketization(unicast) == subpack
                        assert plan_subpacketization(multicast) == subpack
                        seen += 1
        assert seen >= 150
        assert time.perf_counter() - start < 10.0
