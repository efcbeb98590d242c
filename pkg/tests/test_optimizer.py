"""Max-min beamformer optimization: monotonicity, feasibility, optimality."""

import math

import numpy as np
import pytest

from mimo_cc.channel import generate_channel
from mimo_cc.errors import InfeasibleInit
from mimo_cc.model import StreamId, validate_config
from mimo_cc.optimizer import (
    OptProblem,
    OptResult,
    OptSchedule,
    evaluate_objective,
    optimize_beamformers,
    update_receivers,
    zf_initializer,
)


def cfg(users, t, tx, rx):
    return validate_config(
        {"users": users, "caching_gain": t, "tx_multiplexing": tx, "rx_multiplexing": rx}
    )


def pair_problem(mode, seed, trial=0, power=10.0, users=(1, 2)):
    """A serving pair from the two-stream network used throughout."""
    config = cfg(4, 1, 2, 2)
    ch = generate_channel(config, seed=seed, trial=trial)
    return OptProblem(
        mode=mode,
        users=users,
        channels=tuple(ch.user(k) for k in users),
        streams=2,
        noise_power=1.0,
        power_budget=power,
    )


class TestProblemLayout:
    def test_beam_counts(self):
        uni = pair_problem("unicast", seed=1)
        multi = pair_problem("multicast", seed=1)
        assert uni.num_streams == multi.num_streams == 4
        assert uni.num_beams == 4
        assert multi.num_beams == 2  # one shared beam per stream index

    def test_stream_ids_are_user_major(self):
        prob = pair_problem("unicast", seed=1)
        assert prob.stream_ids() == [
            StreamId(1, 1), StreamId(1, 2), StreamId(2, 1), StreamId(2, 2)
        ]

    def test_rejects_bad_inputs(self):
        config = cfg(4, 1, 2, 2)
        ch = generate_channel(config, seed=2, trial=0)
        chans = (ch.user(1), ch.user(2))
        with pytest.raises(ValueError):
            OptProblem("broadcast", (1, 2), chans, 2, 1.0, 1.0)
        with pytest.raises(ValueError):
            OptProblem("unicast", (2, 1), chans, 2, 1.0, 1.0)
        with pytest.raises(ValueError):
            OptProblem("unicast", (1, 2, 3), chans, 2, 1.0, 1.0)


class TestSingleUserOptimum:
    def test_matches_dominant_eigenmode_capacity(self):
        # one user, one stream: the max-min problem is just beamforming onto
        # the top singular mode, with the known optimum log(1 + P s1^2 / N0)
        config = cfg(1, 0, 2, 2, )
        rng_seeds = (3, 4, 5)
        for seed in rng_seeds:
            ch = generate_channel(config, seed=seed, trial=0)
            H = ch.user(1)
            prob = OptProblem("unicast", (1,), (H,), 1, 1.0, 5.0)
            schedule = OptSchedule(tol=1e-12, max_outer=4000)
            res = optimize_beamformers(prob, schedule=schedule)
            s1 = np.linalg.svd(H, compute_uv=False)[0]
            optimum = math.log1p(5.0 * s1**2)
            assert res.objective == pytest.approx(optimum, rel=1e-6)

    def test_scalar_channel_closed_form(self):
        config = cfg(1, 0, 1, 1)
        ch = generate_channel(config, seed=6, trial=0)
        h = ch.user(1)[0, 0]
        prob = OptProblem("unicast", (1,), (ch.user(1),), 1, 1.0, 3.0)
        res = optimize_beamformers(prob, schedule=OptSchedule(tol=1e-12))
        assert res.objective == pytest.approx(math.log1p(3.0 * abs(h) ** 2), rel=1e-9)


class TestAscentContract:
    @pytest.mark.parametrize("mode", ["unicast", "multicast"])
    def test_trace_nondecreasing_and_final_beats_start(self, mode):
        for trial in range(12):
            prob = pair_problem(mode, seed=31, trial=trial)
            init = zf_initializer(prob)
            res = optimize_beamformers(prob, init=init)
            trace = np.array(res.trace)
            assert np.all(np.diff(trace) >= 0.0)
            assert res.objective == trace[-1]
            assert trace[-1] >= trace[0]
            assert res.iterations == len(trace) - 1

    @pytest.mark.parametrize("mode", ["unicast", "multicast"])
    def test_power_feasible(self, mode):
        for trial in range(6):
            prob = pair_problem(mode, seed=32, trial=trial, power=7.0)
            res = optimize_beamformers(prob)
            assert res.beamformers.total_power() <= 7.0 * (1.0 + 1e-9)

    def test_result_is_self_consistent(self):
        prob = pair_problem("unicast", seed=33)
        res = optimize_beamformers(prob)
        obj, rate_map = evaluate_objective(res.beamformers, prob)
        assert obj == pytest.approx(res.objective, rel=1e-12)
        for s, r in res.rates.items():
            assert r == pytest.approx(rate_map[s], rel=1e-12)
            assert r == pytest.approx(math.log1p(res.sinrs[s]), rel=1e-12)
        assert res.objective == pytest.approx(min(res.rates.values()), rel=1e-12)

    def test_receive_update_never_hurts(self):
        prob = pair_problem("multicast", seed=34)
        W, rx, eq = zf_initializer(prob)
        before, _ = evaluate_objective(_bundle(prob, W, eq), prob)
        rx2, eq2 = update_receivers(prob, W)
        after, _ = evaluate_objective(_bundle(prob, W, eq2), prob)
        assert after >= before - 1e-12

    def test_iteration_cap_reports_nonconvergence(self):
        prob = pair_problem("unicast", seed=35)
        res = optimize_beamformers(prob, schedule=OptSchedule(max_outer=2))
        assert isinstance(res, OptResult)
        assert not res.converged
        assert res.iterations == 2


class TestInitializer:
    def test_unicast_start_nulls_own_other_stream(self):
        prob = pair_problem("unicast", seed=41)
        W, rx, eq = zf_initializer(prob)
        # user-major rows: streams (0, 1) belong to user 1, (2, 3) to user 2
        for a, b in ((0, 1), (1, 0), (2, 3), (3, 2)):
            assert abs(np.vdot(eq[a], W[b])) < 1e-9

    def test_multicast_start_has_zero_cross_stream_leakage(self):
        prob = pair_problem("multicast", seed=42)
        W, rx, eq = zf_initializer(prob)
        serving = prob.serving_beam_indices()
        for r in range(prob.num_streams):
            for b in range(prob.num_beams):
                if b != serving[r]:
                    assert abs(np.vdot(eq[r], W[b])) < 1e-9

    def test_rank_deficient_geometry_is_infeasible(self):
        # a rank-1 stacked channel cannot carry two shared codeword beams,
        # and a rank-1 user channel cannot resolve two unicast streams
        low = np.array([[1.0 + 0j, 2.0], [2.0, 4.0]])
        multi = OptProblem("multicast", (1, 2), (low, low), 2, 1.0, 1.0)
        with pytest.raises(InfeasibleInit):
            zf_initializer(multi)
        uni = OptProblem("unicast", (1, 2), (low, low), 2, 1.0, 1.0)
        with pytest.raises(InfeasibleInit):
            zf_initializer(uni)

    def test_default_init_is_zero_forcing(self):
        prob = pair_problem("unicast", seed=44)
        explicit = optimize_beamformers(prob, init=zf_initializer(prob))
        implicit = optimize_beamformers(prob)
        assert implicit.trace == explicit.trace


class TestInvariances:
    def test_objective_invariant_under_joint_scaling(self):
        # scaling noise and power together leaves every SINR unchanged
        prob = pair_problem("unicast", seed=51, power=4.0)
        W, rx, eq = zf_initializer(prob)
        base, _ = evaluate_objective(_bundle(prob, W, eq), prob)
        scaled_prob = OptProblem(
            "unicast", prob.users, prob.channels, 2,
            noise_power=3.0, power_budget=12.0,
        )
        W2, rx2, eq2 = zf_initializer(scaled_prob)
        scaled, _ = evaluate_objective(_bundle(scaled_prob, W2, eq2), scaled_prob)
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_optimizer_is_deterministic(self):
        a = optimize_beamformers(pair_problem("multicast", seed=52))
        b = optimize_beamformers(pair_problem("multicast", seed=52))
        assert a.trace == b.trace
        assert a.objective == b.objective
        for wa, wb in zip(a.beamformers.tx, b.beamformers.tx):
            assert np.array_equal(wa, wb)

    def test_zero_transmit_gives_zero_objective(self):
        prob = pair_problem("unicast", seed=53)
        W, rx, eq = zf_initializer(prob)
        obj, rates = evaluate_objective(_bundle(prob, np.zeros_like(W), eq), prob)
        assert obj == 0.0
        assert all(r == 0.0 for r in rates.values())


def _bundle(problem, W, eq):
    from mimo_cc.channel import BeamformerSet

    ids = problem.stream_ids()
    return BeamformerSet(
        tx=tuple(W[b] for b in range(problem.num_beams)),
        rx={s: np.zeros(1) for s in ids},  # unused by the objective
        eq={s: eq[r] for r, s in enumerate(ids)},
        noise_power=problem.noise_power,
        power_budget=problem.power_budget,
    )
