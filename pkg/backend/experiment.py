import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import Config, config
from heavy_hitters import run_heavy_hitters
from models import BoundReport, HeavyHitterConfig, RunSummary, Scenario, ScenarioError, SimConfig, Variant
from simulator import SimTrace, derive_seed, run_trials
from stats import (
    TrialSummary,
    UniformityVerdict,
    coupling_check,
    epoch_bound_check,
    heavy_hitter_check,
    inclusion_uniformity_test,
    per_epoch_message_check,
    total_message_check,
    trend_check,
    wor_denominator,
    wr_bound_check,
    wr_uniformity_test,
)

logger = logging.getLogger(__name__)

RUN_COLUMNS = [
    "run_id", "scenario", "variant", "generator", "k", "s", "n", "r", "seed",
    "rounds", "upstream", "replies", "broadcasts", "total_messages", "epochs", "oracle_ok",
]
AXES = ("k", "s", "n", "r")


@dataclass
class SweepPoint:
    index: int
    values: Dict[str, float]

    @property
    def label(self) -> str:
        return ",".join(f"{axis}={value:g}" for axis, value in self.values.items())


@dataclass
class ScenarioResult:
    """Rows, reports and artifact paths of one scenario execution"""
    scenario: Scenario
    runs: pd.DataFrame
    reports: List[BoundReport] = field(default_factory=list)
    artifacts: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(report.passed for report in self.reports)

    def to_summary(self, run_id: str) -> RunSummary:
        return RunSummary(
            run_id=run_id,
            scenario=self.scenario.name,
            passed=self.passed,
            runs=len(self.runs),
            reports=self.reports,
            artifacts=self.artifacts,
        )


def _verdict_report(name: str, verdict: UniformityVerdict, alpha: float) -> BoundReport:
    evidence = min(verdict.p_value, verdict.min_corrected_p)
    return BoundReport(
        name=name,
        theoretical=alpha,
        empirical_mean=evidence,
        ratio=evidence / alpha,
        passed=verdict.passed,
        detail=f"statistic {verdict.statistic:.3f}",
    )


def _trace_row(scenario: str, run_id: str, trace: SimTrace) -> Dict:
    cfg, ledger = trace.config, trace.ledger
    return {
        "run_id": run_id,
        "scenario": scenario,
        "variant": cfg.variant.value,
        "generator": cfg.generator.kind,
        "k": cfg.k,
        "s": cfg.s,
        "n": cfg.n,
        "r": cfg.r,
        "seed": cfg.seed,
        "rounds": trace.rounds,
        "upstream": ledger.upstream_count,
        "replies": ledger.reply_count,
        "broadcasts": ledger.broadcast_count,
        "total_messages": ledger.total,
        "epochs": ledger.epoch_count,
        "oracle_ok": trace.oracle_ok,
    }


class ExperimentRunner:
    """Runs scenarios: expands sweeps, executes seeded trials, evaluates checks, writes artifacts"""

    def __init__(self, settings: Config = config):
        self.settings = settings

    def sweep_points(self, scenario: Scenario) -> List[SweepPoint]:
        """Cross product of the sweep axes in k, s, n, r order; one point when nothing is swept"""
        axes = [axis for axis in AXES if axis in scenario.sweep]
        grids = product(*(scenario.sweep[axis] for axis in axes))
        return [SweepPoint(index=i, values=dict(zip(axes, values))) for i, values in enumerate(grids)]

    def configure(self, scenario: Scenario, point: SweepPoint, variant: Variant) -> SimConfig:
        update = {axis: (float(value) if axis == "r" else int(value)) for axis, value in point.values.items()}
        update["variant"] = variant
        k = update.get("k", scenario.sim.k)
        s = update.get("s", scenario.sim.s)
        rule = scenario.params.get("r_rule")
        if rule == "k":
            update["r"] = max(2.0, float(k))
        elif rule == "k/s":
            update["r"] = max(2.0, k / s)
        elif rule is not None:
            raise ScenarioError(f"unknown r_rule '{rule}'; expected 'k' or 'k/s'")
        # re-validate so swept values obey the same constraints as the template
        return scenario.sim.updated(**update)

    def run(
        self,
        scenario: Scenario,
        out_dir: Optional[str] = None,
        run_checks: bool = True,
        write: bool = True,
        trials: Optional[int] = None,
        seed: Optional[int] = None,
    ) -> ScenarioResult:
        """
        Execute every (sweep point, variant, trial) run of a scenario.

        Args:
            scenario: Scenario to execute
            out_dir: Artifact root, defaults to the scenario's, then Config.OUT_DIR
            run_checks: Whether to evaluate the scenario's checks
            write: Whether to write runs.csv and reports.json
            trials: Override of the scenario's trial count
            seed: Override of the scenario's seed

        Returns:
            ScenarioResult with the sorted run table and all reports
        """
        overrides = {key: value for key, value in (("trials", trials), ("seed", seed)) if value is not None}
        if overrides:
            scenario = Scenario.model_validate({**scenario.model_dump(), **overrides})
        if scenario.run_count() > self.settings.MAX_RUNS:
            raise ScenarioError(f"scenario expands to {scenario.run_count()} runs, cap is {self.settings.MAX_RUNS}")

        variants = scenario.variants or [scenario.sim.variant]
        points = self.sweep_points(scenario)
        logger.info("scenario %s: %d sweep points x %d variants x %d trials",
                    scenario.name, len(points), len(variants), scenario.trials)

        traces: Dict[Tuple[int, Variant], List[SimTrace]] = {}
        hh_outcomes: Dict[int, List[Tuple[bool, bool]]] = {}
        rows = []
        for point in points:
            for variant in variants:
                cfg = self.configure(scenario, point, variant)
                if "heavy-hitters" in scenario.checks:
                    batch, hh_outcomes[point.index] = self._heavy_hitter_batch(scenario, cfg, point)
                else:
                    batch = run_trials(
                        cfg, scenario.trials, scenario.seed, point.index,
                        workers=self.settings.WORKERS, settings=self.settings, strict_oracle=False,
                    )
                traces[(point.index, variant)] = batch
                for trial, trace in enumerate(batch):
                    run_id = f"{scenario.name}-p{point.index:03d}-t{trial:06d}-{variant.value}"
                    rows.append(_trace_row(scenario.name, run_id, trace))

        frame = pd.DataFrame(rows, columns=RUN_COLUMNS).sort_values("run_id", kind="stable").reset_index(drop=True)
        result = ScenarioResult(scenario=scenario, runs=frame)
        if run_checks:
            result.reports = self._evaluate(scenario, points, variants, traces, hh_outcomes)
        for report in result.reports:
            if not report.passed:
                logger.warning("scenario %s: check %s failed (%.4g vs %.4g)",
                               scenario.name, report.name, report.empirical_mean, report.theoretical)
        if write:
            result.artifacts = self._write(result, Path(out_dir or scenario.out_dir or self.settings.OUT_DIR))
        return result

    def _heavy_hitter_batch(
        self, scenario: Scenario, cfg: SimConfig, point: SweepPoint
    ) -> Tuple[List[SimTrace], List[Tuple[bool, bool]]]:
        params = scenario.params
        planted = dict(params.get("planted", {}))
        if not planted:
            raise ScenarioError("heavy-hitters needs [params] planted labels")
        epsilon = float(params.get("epsilon", 0.1))
        hh_cfg = HeavyHitterConfig(epsilon=epsilon, confidence_constant=self.settings.HH_CONFIDENCE, n_hint=max(2, cfg.n))
        frequent = [label for label, freq in planted.items() if freq >= epsilon]
        rare = [label for label, freq in planted.items() if freq <= epsilon / 2]
        batch, outcomes = [], []
        for trial in range(scenario.trials):
            outcome = run_heavy_hitters(
                hh_cfg, cfg.k, planted, derive_seed(scenario.seed, point.index, trial),
                n=cfg.n, generator=cfg.generator.kind, settings=self.settings,
            )
            batch.append(outcome.trace)
            found = all(label in outcome.heavy_hitters for label in frequent)
            false_positive = any(label in outcome.heavy_hitters for label in rare)
            outcomes.append((found, false_positive))
        return batch, outcomes

    def _evaluate(
        self,
        scenario: Scenario,
        points: List[SweepPoint],
        variants: List[Variant],
        traces: Dict[Tuple[int, Variant], List[SimTrace]],
        hh_outcomes: Dict[int, List[Tuple[bool, bool]]],
    ) -> List[BoundReport]:
        checks = scenario.checks
        alpha = self.settings.ALPHA
        slack = self.settings.SE_SLACK
        # bound checks are stated for variant B; fall back to whichever variant ran
        primary = Variant.B if Variant.B in variants else variants[0]
        reports: List[BoundReport] = []
        wor_trend_ratios: Dict[str, float] = {}
        wr_grids: Dict[Tuple[int, int], Dict[int, TrialSummary]] = defaultdict(dict)

        for point in points:
            suffix = f"[{point.label}]" if point.values else ""
            batch = traces[(point.index, primary)]
            cfg = batch[0].config
            summary = TrialSummary.from_traces(batch)
            point_reports: List[BoundReport] = []

            if "oracle" in checks:
                runs = [trace for variant in variants for trace in traces[(point.index, variant)]]
                ok = sum(trace.oracle_ok for trace in runs)
                failures = [trace.oracle_detail for trace in runs if not trace.oracle_ok]
                checked = f"{sum(trace.oracle_rounds_checked for trace in runs)} rounds checked"
                point_reports.append(BoundReport(
                    name="oracle", theoretical=len(runs), empirical_mean=ok, ratio=ok / len(runs),
                    passed=ok == len(runs),
                    detail=f"{checked}; first failure: {failures[0]}" if failures else checked,
                ))
            if "coupling" in checks:
                if not {Variant.A, Variant.B} <= set(variants):
                    raise ScenarioError("the coupling check needs variants A and B")
                pairs = list(zip(traces[(point.index, Variant.A)], traces[(point.index, Variant.B)]))
                point_reports.append(coupling_check(pairs))
            if "uniformity" in checks:
                verdict = inclusion_uniformity_test(summary, cfg.n, cfg.s, alpha)
                point_reports.append(_verdict_report("inclusion-uniformity", verdict, alpha))
            if "epochs" in checks:
                point_reports.append(epoch_bound_check(summary, cfg.n, cfg.s, cfg.r, slack))
            if "per-epoch" in checks:
                point_reports.append(per_epoch_message_check(summary, cfg.s, cfg.r, slack))
            if "total" in checks:
                point_reports.append(total_message_check(summary, cfg.k, cfg.s, cfg.n, cfg.r, slack))
            if "wr-uniformity" in checks:
                verdict = wr_uniformity_test(np.array(summary.final_samples), cfg.n, alpha)
                point_reports.append(_verdict_report("wr-uniformity", verdict, alpha))
            if "heavy-hitters" in checks:
                point_reports.append(heavy_hitter_check(hh_outcomes[point.index]))
            if "figure1-trend" in checks:
                wor_trend_ratios[point.label or "base"] = float(np.mean(summary.totals)) / wor_denominator(cfg.k, cfg.s, cfg.n)
            if "wr-trend" in checks:
                wr_grids[(cfg.k, cfg.s)][cfg.n] = summary

            for report in point_reports:
                report.name += suffix
            reports.extend(point_reports)

        if "figure1-trend" in checks:
            reports.append(trend_check("figure1-trend", wor_trend_ratios, self.settings.TREND_BAND))
        for (k, s), grid in wr_grids.items():
            report = wr_bound_check(grid, k, s, self.settings.TREND_BAND)
            if len(wr_grids) > 1:
                report.name += f"[k={k},s={s}]"
            reports.append(report)
        return reports

    def _write(self, result: ScenarioResult, root: Path) -> Dict[str, str]:
        target = root / result.scenario.name
        target.mkdir(parents=True, exist_ok=True)
        runs_path = target / "runs.csv"
        reports_path = target / "reports.json"
        result.runs.to_csv(runs_path, index=False, encoding="utf-8")
        payload = {
            "scenario": result.scenario.name,
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "passed": result.passed,
            "reports": [report.to_json_dict() for report in result.reports],
        }
        reports_path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        logger.info("scenario %s: wrote %s and %s", result.scenario.name, runs_path, reports_path)
        return {"runs": str(runs_path), "reports": str(reports_path)}
