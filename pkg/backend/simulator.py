"""Synchronous round-based driver for the sampling protocols.

Within a round, arrivals are handled in ascending site order and the
coordinator completes each exchange (insert + reply) before the next one.
At the end of the round the epoch observer runs; in variant B a detected
boundary makes the coordinator broadcast u at the start of the next round.

Arrivals whose weight cannot beat their site's threshold send nothing, so
when oracle checks are final-only the driver skips them in vectorised
blocks instead of visiting them one by one.
"""

import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from config import Config, config
from models import CouplingViolation, OracleMismatch, OracleMode, SimConfig, Variant
from protocol_wor import (
    Broadcast,
    Message,
    Reply,
    Upstream,
    coord_epoch_tick,
    coord_init,
    coord_on_upstream,
    coord_query,
    epoch_boundary_reached,
    site_init,
    site_on_broadcast,
    site_on_element,
    site_on_reply,
)
from protocol_wr import wr_coord_init, wr_exchange, wr_query, wr_site_init
from sampling_core import THRESHOLD_ONE, Weight, WeightedElement, assign_weights, kth_smallest_oracle_values
from schedules import StreamSchedule, generate_schedule

logger = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    """One epoch: rounds over which the threshold has not yet dropped by r"""
    index: int
    start_round: int
    floor: float                      # m_i, threshold value when the epoch opened
    end_round: Optional[int] = None   # None while still open at the end of the run
    upstream: int = 0                 # X_i, site -> coordinator messages in the epoch


@dataclass
class MessageLedger:
    """Message accounting for one run, in single-message units"""
    k: int
    upstream_count: int = 0
    reply_count: int = 0
    broadcast_count: int = 0          # already multiplied by k
    epochs: List[EpochRecord] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.upstream_count + self.reply_count + self.broadcast_count

    @property
    def epoch_count(self) -> int:
        return len(self.epochs)

    @property
    def per_epoch_upstream(self) -> List[int]:
        return [epoch.upstream for epoch in self.epochs]

    @property
    def epoch_floors(self) -> List[float]:
        return [epoch.floor for epoch in self.epochs]

    def open_epoch(self, start_round: int, floor: float) -> EpochRecord:
        epoch = EpochRecord(index=len(self.epochs), start_round=start_round, floor=floor)
        self.epochs.append(epoch)
        return epoch

    def charge(self, msg: Message) -> None:
        cost = msg.cost(self.k)
        if isinstance(msg, Upstream):
            self.upstream_count += cost
            if self.epochs:
                self.epochs[-1].upstream += cost
        elif isinstance(msg, Reply):
            self.reply_count += cost
        else:
            self.broadcast_count += cost

    def charge_exchange(self, upstream: Upstream, reply: Reply) -> None:
        self.charge(upstream)
        self.charge(reply)


@dataclass
class SimTrace:
    """Everything a run produced; a pure function of its SimConfig"""
    config: SimConfig
    final_sample: List[int]                  # element ids, ascending weight (WR: slot order)
    ledger: MessageLedger
    rounds: int
    u_trajectory: List[Tuple[int, float]]    # (round, threshold) at rounds where it changed
    sample_changes: List[Tuple[int, int]]    # (round, element) whenever the sample gained an element
    oracle_rounds_checked: int = 0
    oracle_ok: bool = True
    oracle_detail: Optional[str] = None     # first mismatch, when not raised

    @property
    def total_messages(self) -> int:
        return self.ledger.total


def derive_seed(seed: int, sweep_index: int, trial_index: int) -> int:
    """Per-run seed; adding sweep points never moves existing ones"""
    digest = hashlib.sha256(f"{seed}/{sweep_index}/{trial_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class Simulator:
    """Drives one configured protocol over one schedule"""

    def __init__(
        self,
        cfg: SimConfig,
        schedule: Optional[StreamSchedule] = None,
        settings: Config = config,
        strict_oracle: bool = True,
    ):
        self.cfg = cfg
        self.settings = settings
        self.strict_oracle = strict_oracle
        self.variant = Variant(cfg.variant)
        if schedule is None:
            params = {**cfg.generator.params, "n": cfg.n, "k": cfg.k, "s": cfg.s}
            schedule = generate_schedule(cfg.generator.kind, params, cfg.seed)
        elif len(schedule) != cfg.n or schedule.k != cfg.k:
            raise ValueError("schedule does not match the config's n and k")
        self.schedule = schedule
        self.n = len(schedule)
        self.site_index = schedule.sites - 1
        self.round_of = schedule.rounds
        self.round_stop = np.searchsorted(schedule.rounds, schedule.rounds, side="right")
        self.last_round = schedule.num_rounds

        ids = np.arange(1, self.n + 1, dtype=np.int64)
        if self.variant is Variant.WR:
            self.values = np.vstack([assign_weights(cfg.seed, ids, i) for i in range(1, cfg.s + 1)])
            self.scan_values = self.values.min(axis=0)
        else:
            self.values = assign_weights(cfg.seed, ids, 0)
            self.scan_values = self.values

        mode = cfg.oracle_checks
        if mode is None:
            mode = OracleMode.EVERY_ROUND if cfg.n <= settings.ORACLE_EVERY_ROUND_MAX_N else OracleMode.FINAL_ONLY
        self.every_round = OracleMode(mode) is OracleMode.EVERY_ROUND

        # per-site thresholds mirrored as floats for vectorised scanning
        self.site_thresholds = np.ones(cfg.k, dtype=np.float64)
        if self.variant is Variant.WR:
            self.sites = [wr_site_init(j) for j in range(1, cfg.k + 1)]
            self.coord = wr_coord_init(cfg.s)
        else:
            self.sites = [site_init(j) for j in range(1, cfg.k + 1)]
            self.coord = coord_init(cfg.s, variant=self.variant, r=cfg.r)

        self.ledger = MessageLedger(k=cfg.k)
        self.u_trajectory: List[Tuple[int, float]] = []
        self.sample_changes: List[Tuple[int, int]] = []
        self.oracle_rounds_checked = 0
        self.oracle_failure: Optional[OracleMismatch] = None
        self._floor = 1.0
        self._last_u = 1.0

    # -- threshold access -------------------------------------------------

    def _threshold(self) -> Weight:
        return self.coord.beta if self.variant is Variant.WR else self.coord.threshold

    # -- per-arrival handling ---------------------------------------------

    def _arrive(self, t: int, round_no: int) -> None:
        element = t + 1
        j = int(self.site_index[t])
        if self.variant is Variant.WR:
            weights = [Weight(float(self.values[i, t]), element, i + 1) for i in range(self.cfg.s)]
            before = list(self.coord.minima)
            state, exchanged = wr_exchange(self.sites[j], self.coord, element, weights)
            self.sites[j] = state
            self.site_thresholds[j] = state.beta.value
            for upstream, reply in exchanged:
                self.ledger.charge_exchange(upstream, reply)
            if exchanged and before != self.coord.minima:
                self.sample_changes.append((round_no, element))
            return

        item = WeightedElement(
            element=element,
            weight=Weight(float(self.values[t]), element, 0),
            origin_site=j + 1,
        )
        state, msg = site_on_element(self.sites[j], item)
        if msg is None:
            return
        _, reply = coord_on_upstream(self.coord, msg)
        self.ledger.charge_exchange(msg, reply)
        if (element, None) in self.coord.sample:
            self.sample_changes.append((round_no, element))
        state = site_on_reply(state, reply.threshold)
        self.sites[j] = state
        self.site_thresholds[j] = state.threshold.value

    # -- end of round --------------------------------------------------------

    def _end_round(self, round_no: int) -> None:
        u = self._threshold()
        if u.value != self._last_u:
            self.u_trajectory.append((round_no, u.value))
            self._last_u = u.value

        broadcast = None
        if self.variant is Variant.B:
            broadcast = coord_epoch_tick(self.coord)

        if not epoch_boundary_reached(u.value, self._floor, self.cfg.r):
            return
        self.ledger.epochs[-1].end_round = round_no
        self._floor = u.value
        logger.debug("epoch %d closed at round %d, u=%.6g", self.ledger.epoch_count - 1, round_no, u.value)
        if round_no >= self.last_round:
            return
        self.ledger.open_epoch(round_no + 1, u.value)
        if broadcast is not None:
            self.ledger.charge(broadcast)
            self.sites = [site_on_broadcast(site, broadcast.threshold) for site in self.sites]
            self.site_thresholds[:] = broadcast.threshold.value

    # -- oracle ---------------------------------------------------------------

    def _check_oracle(self, round_no: int, prefix: int) -> None:
        self.oracle_rounds_checked += 1
        if self.variant is Variant.WR:
            for i in range(self.cfg.s):
                order, _ = kth_smallest_oracle_values(self.values[i, :prefix], 1)
                held = self.coord.minima[i]
                if held is None or held.element != int(order[0]) + 1:
                    raise OracleMismatch(round_no, f"slot {i + 1} holds {held and held.element}, oracle {int(order[0]) + 1}")
            if np.any(self.site_thresholds < self.coord.beta.value):
                raise OracleMismatch(round_no, "a site's beta_j fell below beta")
            return
        order, _ = kth_smallest_oracle_values(self.values[:prefix], self.cfg.s)
        expected = (order + 1).tolist()
        held = self.coord.sample.element_ids()
        if held != expected:
            raise OracleMismatch(round_no, f"coordinator holds {held}, oracle {expected}")
        if np.any(self.site_thresholds < self.coord.threshold.value):
            raise OracleMismatch(round_no, "a site's u_i fell below u")

    def _verify(self, round_no: int, prefix: int) -> None:
        try:
            self._check_oracle(round_no, prefix)
        except OracleMismatch as mismatch:
            if self.strict_oracle:
                raise
            if self.oracle_failure is None:
                logger.warning("%s", mismatch)
                self.oracle_failure = mismatch

    # -- driving --------------------------------------------------------------

    def _next_candidate(self, pos: int) -> int:
        """First arrival at or after pos that might beat its site's threshold"""
        block = self.settings.SCAN_BLOCK
        while pos < self.n:
            stop = min(pos + block, self.n)
            hits = np.flatnonzero(self.scan_values[pos:stop] <= self.site_thresholds[self.site_index[pos:stop]])
            if hits.size:
                return pos + int(hits[0])
            pos = stop
        return self.n

    def run(self) -> SimTrace:
        if self.n:
            self.ledger.open_epoch(1, 1.0)
            if self.variant is Variant.B:
                # epoch 0 opens with a broadcast of u = 1
                self.ledger.charge(Broadcast(threshold=THRESHOLD_ONE))

        pos = 0
        while pos < self.n:
            t = pos if self.every_round else self._next_candidate(pos)
            if t >= self.n:
                break
            round_no = int(self.round_of[t])
            stop = int(self.round_stop[t])
            for arrival in range(t, stop):
                self._arrive(arrival, round_no)
            self._end_round(round_no)
            if self.every_round:
                self._verify(round_no, stop)
            pos = stop

        if self.n and not self.every_round:
            self._verify(self.last_round, self.n)

        if self.variant is Variant.WR:
            final_sample = wr_query(self.coord) if self.n else []
        else:
            final_sample = [item.element for item in coord_query(self.coord)]
        return SimTrace(
            config=self.cfg,
            final_sample=final_sample,
            ledger=self.ledger,
            rounds=self.last_round,
            u_trajectory=self.u_trajectory,
            sample_changes=self.sample_changes,
            oracle_rounds_checked=self.oracle_rounds_checked,
            oracle_ok=self.oracle_failure is None,
            oracle_detail=None if self.oracle_failure is None else str(self.oracle_failure),
        )


def run_simulation(
    cfg: SimConfig,
    schedule: Optional[StreamSchedule] = None,
    settings: Config = config,
    strict_oracle: bool = True,
) -> SimTrace:
    """One run; with strict_oracle=False a mismatch is recorded on the trace instead of raised"""
    return Simulator(cfg, schedule=schedule, settings=settings, strict_oracle=strict_oracle).run()


def run_coupled(cfg_a: SimConfig, cfg_b: SimConfig, settings: Config = config) -> Tuple[SimTrace, SimTrace]:
    """Run A and B on identical weights and schedule and check their coupling"""
    if Variant(cfg_a.variant) is not Variant.A or Variant(cfg_b.variant) is not Variant.B:
        raise ValueError("run_coupled expects a variant-A config and a variant-B config")
    if cfg_a.with_variant(Variant.B) != cfg_b:
        raise ValueError("coupled configs must be identical apart from the variant")
    trace_a = run_simulation(cfg_a, settings=settings)
    trace_b = run_simulation(cfg_b, settings=settings)
    counterexample = {
        "config": cfg_a.model_dump(mode="json"),
        "messages_a": trace_a.total_messages,
        "messages_b": trace_b.total_messages,
    }
    if trace_a.u_trajectory != trace_b.u_trajectory:
        raise CouplingViolation("threshold trajectories differ", counterexample)
    if trace_a.sample_changes != trace_b.sample_changes or trace_a.final_sample != trace_b.final_sample:
        raise CouplingViolation("samples differ", counterexample)
    if [e.end_round for e in trace_a.ledger.epochs] != [e.end_round for e in trace_b.ledger.epochs]:
        raise CouplingViolation("epoch boundaries differ", counterexample)
    if trace_a.total_messages > 2 * trace_b.total_messages:
        raise CouplingViolation("variant A sent more than twice variant B's messages", counterexample)
    return trace_a, trace_b


def _run_seeded(args: Tuple[SimConfig, int, Config, bool]) -> SimTrace:
    cfg, seed, settings, strict_oracle = args
    return run_simulation(cfg.updated(seed=seed), settings=settings, strict_oracle=strict_oracle)


def run_trials(
    cfg: SimConfig,
    trials: int,
    seed: int,
    sweep_index: int = 0,
    workers: int = 1,
    settings: Config = config,
    strict_oracle: bool = True,
) -> List[SimTrace]:
    """T runs of one config with derived seeds, returned in trial order"""
    jobs = [(cfg, derive_seed(seed, sweep_index, trial), settings, strict_oracle) for trial in range(trials)]
    if workers <= 1 or trials == 1:
        return [_run_seeded(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_seeded, jobs, chunksize=max(1, trials // (workers * 4))))

