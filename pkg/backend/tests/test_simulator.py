"""Tests for the round-based simulator, epoch observer and trial runner"""

import random

import pytest
from pydantic import ValidationError

from config import Config
from models import GeneratorSpec, OracleMismatch, SimConfig, Variant
from protocol_wor import Broadcast, Reply
from sampling_core import THRESHOLD_ONE
from schedules import generate_schedule
from simulator import derive_seed, run_coupled, run_simulation, run_trials
from tests.fixtures.sample_streams import GENERATOR_KINDS


def _same_trace(a, b):
    assert a.final_sample == b.final_sample
    assert a.u_trajectory == b.u_trajectory
    assert a.sample_changes == b.sample_changes
    assert a.ledger.upstream_count == b.ledger.upstream_count
    assert a.ledger.reply_count == b.ledger.reply_count
    assert a.ledger.broadcast_count == b.ledger.broadcast_count
    assert [(e.start_round, e.end_round, e.upstream) for e in a.ledger.epochs] == \
        [(e.start_round, e.end_round, e.upstream) for e in b.ledger.epochs]


class TestRunSimulation:
    """Test cases for single runs"""

    def test_stream_shorter_than_sample(self):
        """Test that with n <= s every arrival costs one upstream and one reply"""
        trace = run_simulation(SimConfig(k=2, s=5, n=3, variant=Variant.A, seed=1))

        assert trace.total_messages == 6
        assert trace.ledger.upstream_count == 3
        assert sorted(trace.final_sample) == [1, 2, 3]

    def test_single_element(self):
        """Test the smallest possible run"""
        trace = run_simulation(SimConfig(k=1, s=1, n=1, seed=0))

        assert trace.final_sample == [1]
        assert trace.total_messages == 2

    def test_deterministic(self, small_sim_config):
        """Test that the trace is a pure function of the config"""
        _same_trace(run_simulation(small_sim_config), run_simulation(small_sim_config))

    def test_variant_a_sends_no_broadcasts(self, small_sim_config):
        """Test that variant A's total is upstream plus replies"""
        ledger = run_simulation(small_sim_config).ledger

        assert ledger.broadcast_count == 0
        assert ledger.total == ledger.upstream_count + ledger.reply_count

    def test_variant_b_ledger_identity(self, variant_b_config):
        """Test total = xi * k + 2 * sum(X_i) for variant B"""
        trace = run_simulation(variant_b_config)
        ledger = trace.ledger

        assert ledger.epoch_count > 2
        assert ledger.total == ledger.epoch_count * variant_b_config.k + 2 * sum(ledger.per_epoch_upstream)

    def test_variant_b_short_stream(self):
        """Test that n <= s costs 2n plus one broadcast of u = 1"""
        trace = run_simulation(SimConfig(k=6, s=10, n=4, variant=Variant.B, seed=2))

        assert trace.ledger.epoch_count == 1
        assert trace.total_messages == 2 * 4 + 6

    def test_epoch_floors_drop_by_r(self, variant_b_config):
        """Test that every epoch opens at most floor / r below the previous one"""
        floors = run_simulation(variant_b_config).ledger.epoch_floors

        assert floors[0] == 1.0
        for previous, current in zip(floors, floors[1:]):
            assert current <= previous / variant_b_config.r

    def test_skip_ahead_matches_every_round(self):
        """Test that skipping silent arrivals changes nothing but the oracle cadence"""
        base = SimConfig(k=5, s=3, n=3000, variant=Variant.B, seed=8, generator=GeneratorSpec(kind="uniform_random"))

        every = run_simulation(base.updated(oracle_checks="every-round"))
        final = run_simulation(base.updated(oracle_checks="final-only"))

        _same_trace(every, final)
        assert every.oracle_rounds_checked > final.oracle_rounds_checked == 1

    def test_unvalidated_copies_keep_their_modes(self):
        """Test that plain-string modes from an unvalidated copy are still honoured"""
        base = SimConfig(k=4, s=2, n=256, seed=11)

        every = run_simulation(base.model_copy(update={"oracle_checks": "every-round"}))
        variant_b = run_simulation(base.model_copy(update={"variant": "B", "oracle_checks": "final-only"}))

        assert every.oracle_rounds_checked == every.rounds
        assert variant_b.oracle_rounds_checked == 1
        assert variant_b.ledger.broadcast_count >= base.k

    def test_updated_validates(self):
        """Test that updated copies go through validation"""
        cfg = SimConfig(k=4, s=2, n=256).updated(oracle_checks="every-round", variant="B")

        assert cfg.oracle_checks.value == "every-round"
        assert cfg.variant is Variant.B
        with pytest.raises(ValidationError):
            cfg.updated(r=1.0)

    def test_ledger_charges_message_costs(self, mocker):
        """Test that broadcasts are charged through the message cost"""
        mocker.patch.object(Broadcast, "cost", return_value=100)

        trace = run_simulation(SimConfig(k=6, s=10, n=4, variant=Variant.B, seed=2))

        assert trace.ledger.broadcast_count == 100
        assert trace.total_messages == 2 * 4 + 100

    def test_with_replacement_run(self):
        """Test that a WR run fills every slot and is checked per slot"""
        cfg = SimConfig(k=3, s=4, n=500, variant=Variant.WR, seed=3, oracle_checks="every-round")

        trace = run_simulation(cfg)

        assert len(trace.final_sample) == 4
        assert trace.ledger.broadcast_count == 0
        assert trace.ledger.upstream_count == trace.ledger.reply_count

    def test_schedule_mismatch(self):
        """Test that an explicit schedule must match n and k"""
        schedule = generate_schedule("round_robin", {"n": 10, "k": 2}, seed=0)
        with pytest.raises(ValueError):
            run_simulation(SimConfig(k=3, s=1, n=10), schedule=schedule)

    def test_r_below_two_rejected(self):
        """Test that the epoch parameter must be at least 2"""
        with pytest.raises(ValidationError):
            SimConfig(k=2, s=1, n=10, r=1.5)

    def test_oracle_mismatch_names_round(self, mocker, small_sim_config):
        """Test that a coordinator that never inserts is caught in the first round"""
        mocker.patch(
            "simulator.coord_on_upstream",
            side_effect=lambda coord, msg: (coord, Reply(site=msg.site, threshold=THRESHOLD_ONE)),
        )

        with pytest.raises(OracleMismatch) as excinfo:
            run_simulation(small_sim_config)

        assert excinfo.value.round_no == 1

    def test_oracle_mismatch_recorded_when_not_strict(self, mocker, small_sim_config):
        """Test that a non-strict run finishes and records the first mismatch"""
        mocker.patch(
            "simulator.coord_on_upstream",
            side_effect=lambda coord, msg: (coord, Reply(site=msg.site, threshold=THRESHOLD_ONE)),
        )

        trace = run_simulation(small_sim_config, strict_oracle=False)

        assert not trace.oracle_ok
        assert "round 1" in trace.oracle_detail
        assert trace.oracle_rounds_checked == trace.rounds

    def test_clean_run_reports_oracle_ok(self, small_sim_config):
        """Test that a correct run carries no mismatch"""
        trace = run_simulation(small_sim_config, strict_oracle=False)

        assert trace.oracle_ok
        assert trace.oracle_detail is None


class TestOracleEquivalence:
    """The coordinator's sample equals the s smallest weights after every round"""

    @pytest.mark.parametrize("kind", GENERATOR_KINDS)
    def test_small_grid(self, kind, small_grid):
        """Test every generator on the small grid with a handful of seeds"""
        for k, s, n in small_grid:
            for seed in range(5):
                cfg = SimConfig(k=k, s=s, n=n, seed=seed, oracle_checks="every-round",
                                generator=GeneratorSpec(kind=kind))
                trace = run_simulation(cfg)
                assert trace.oracle_rounds_checked == trace.rounds


class TestCoupling:
    """Test cases for coupled A/B runs"""

    def test_coupled_runs_agree(self, variant_b_config):
        """Test identical u trajectories and the factor-2 message bound"""
        cfg_a = variant_b_config.with_variant(Variant.A)

        trace_a, trace_b = run_coupled(cfg_a, variant_b_config)

        assert trace_a.u_trajectory == trace_b.u_trajectory
        assert trace_a.final_sample == trace_b.final_sample
        assert trace_a.total_messages <= 2 * trace_b.total_messages

    def test_short_stream_counts(self):
        """Test n <= s: A sends 2n, B sends 2n + k * xi"""
        cfg_b = SimConfig(k=4, s=8, n=5, variant=Variant.B, seed=1)

        trace_a, trace_b = run_coupled(cfg_b.with_variant(Variant.A), cfg_b)

        assert trace_a.total_messages == 10
        assert trace_b.total_messages == 10 + 4 * trace_b.ledger.epoch_count

    def test_random_configs(self):
        """Test coupling over a spread of small random configurations"""
        rng = random.Random(3)
        for _ in range(30):
            k, s = rng.randint(1, 16), rng.randint(1, 8)
            r = rng.choice([2.0, max(2.0, k / s)])
            cfg_b = SimConfig(k=k, s=s, n=rng.randint(1, 600), r=r, variant=Variant.B,
                              seed=rng.randrange(10**6), generator=GeneratorSpec(kind="uniform_random"))
            run_coupled(cfg_b.with_variant(Variant.A), cfg_b)

    def test_configs_must_differ_only_in_variant(self, variant_b_config):
        """Test that coupling different seeds is refused"""
        cfg_a = variant_b_config.updated(variant=Variant.A, seed=99)
        with pytest.raises(ValueError):
            run_coupled(cfg_a, variant_b_config)


class TestTrials:
    """Test cases for seeded trial batches"""

    def test_derive_seed_is_stable(self):
        """Test that seeds depend only on (seed, sweep index, trial index)"""
        assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
        assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
        assert 0 <= derive_seed(1, 2, 3) < 2**63

    def test_trials_use_derived_seeds(self, small_sim_config):
        """Test that trial i runs with derive_seed(seed, sweep, i)"""
        traces = run_trials(small_sim_config, trials=3, seed=10, sweep_index=2)
        assert [trace.config.seed for trace in traces] == [derive_seed(10, 2, i) for i in range(3)]

    def test_worker_count_does_not_change_results(self, small_sim_config):
        """Test that the process pool returns the same traces in the same order"""
        serial = run_trials(small_sim_config, trials=4, seed=1)
        pooled = run_trials(small_sim_config, trials=4, seed=1, workers=2)

        for a, b in zip(serial, pooled):
            _same_trace(a, b)

    def test_trials_use_given_settings(self):
        """Test that the Config passed in reaches every run"""
        cfg = SimConfig(k=4, s=2, n=256, seed=3)

        default = run_trials(cfg, trials=2, seed=1)
        final_only = run_trials(cfg, trials=2, seed=1, settings=Config(ORACLE_EVERY_ROUND_MAX_N=1))

        assert all(trace.oracle_rounds_checked == trace.rounds for trace in default)
        assert all(trace.oracle_rounds_checked == 1 for trace in final_only)
