"""Builtin scenarios and the TOML scenario-file loader.

A scenario file looks like::

    [scenario]
    name = "small-coupling"
    trials = 20
    seed = 7
    variants = ["A", "B"]

    [sim]
    k = 4
    s = 2
    n = 256
    generator = "uniform_random"

    [sweep]
    n = [256, 1024]

    [checks]
    enabled = ["oracle", "coupling"]

    [output]
    dir = "./results"

An optional [params] table carries check-specific values (epsilon and
planted labels for heavy hitters, r_rule for tying r to k or k/s).
"""

import logging
import re
import tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import ValidationError

from models import GeneratorSpec, Scenario, ScenarioError, SimConfig, Variant

logger = logging.getLogger(__name__)

_SECTIONS = {"scenario", "sim", "sweep", "checks", "output", "params"}
_TOML_LINE = re.compile(r"at line (\d+)")
_FILE_KEYS = {"checks": "enabled", "out_dir": "dir"}  # model field -> key in the file


def _builtins() -> Dict[str, Scenario]:
    scenarios = [
        Scenario(
            name="smoke",
            description="k=4, s=2, n=256: coupled A/B runs checked against the oracle every round",
            sim=SimConfig(k=4, s=2, n=256),
            trials=100,
            variants=[Variant.A, Variant.B],
            checks=["oracle", "coupling"],
        ),
        Scenario(
            name="uniformity",
            description="n=100, s=10, k=5: every element included with probability s/n",
            sim=SimConfig(k=5, s=10, n=100, generator=GeneratorSpec(kind="uniform_random"), oracle_checks="final-only"),
            trials=50_000,
            checks=["oracle", "uniformity"],
        ),
        Scenario(
            name="epochs",
            description="n=2^20 variant B: epoch count and per-epoch upstream messages against their bounds",
            sim=SimConfig(k=4, s=1, n=2**20, variant=Variant.B),
            trials=200,
            sweep={"s": [1, 8], "r": [2, 8]},
            checks=["epochs", "per-epoch"],
        ),
        Scenario(
            name="bounds-wor",
            description="k=8, s=8, r=2, n=2^13: total messages of variant B under the large-sample cap",
            sim=SimConfig(k=8, s=8, n=2**13, variant=Variant.B),
            trials=100,
            checks=["total", "epochs", "per-epoch"],
        ),
        Scenario(
            name="bounds-wr",
            description="k=64, s=4: with-replacement message growth across n=2^10..2^18",
            sim=SimConfig(k=64, s=4, n=2**10, variant=Variant.WR, generator=GeneratorSpec(kind="uniform_random")),
            trials=20,
            sweep={"n": [2**10, 2**12, 2**14, 2**16, 2**18]},
            checks=["oracle", "wr-trend"],
        ),
        Scenario(
            name="figure1-trend",
            description="s=1, r=k: messages over k log(n/s)/log(k/s) stay in a constant band",
            sim=SimConfig(k=16, s=1, n=2**12, variant=Variant.B, generator=GeneratorSpec(kind="uniform_random")),
            trials=50,
            sweep={"k": [16, 64, 256], "n": [2**12, 2**16, 2**20]},
            params={"r_rule": "k"},
            checks=["figure1-trend"],
        ),
        Scenario(
            name="heavy-hitters",
            description="n=20000, eps=0.1: a 0.12 label is reported and a 0.04 label is not",
            sim=SimConfig(k=8, s=1, n=20_000, generator=GeneratorSpec(kind="uniform_random")),
            trials=200,
            params={"epsilon": 0.1, "planted": {"heavy": 0.12, "rare": 0.04}},
            checks=["heavy-hitters"],
        ),
        Scenario(
            name="adversarial-lb",
            description="lower-bound epoch construction as workload: oracle, coupling and total messages",
            sim=SimConfig(k=16, s=2, n=2**10, generator=GeneratorSpec(kind="epoch_adversarial")),
            trials=50,
            sweep={"n": [2**10, 2**14]},
            variants=[Variant.A, Variant.B],
            checks=["oracle", "coupling", "total"],
        ),
    ]
    return {scenario.name: scenario for scenario in scenarios}


BUILTIN_SCENARIOS: Dict[str, Scenario] = _builtins()


def list_scenarios() -> List[Tuple[str, str]]:
    """(name, description) of every builtin, in definition order"""
    return [(name, scenario.description) for name, scenario in BUILTIN_SCENARIOS.items()]


def _line_of_key(text: str, key: str) -> Optional[int]:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*=", re.MULTILINE)
    match = pattern.search(text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def _scenario_fields(document: Dict[str, Any], fallback_name: str) -> Dict[str, Any]:
    header = dict(document.get("scenario", {}))
    sim = dict(document.get("sim", {}))
    generator = {"kind": sim.pop("generator", "round_robin"), "params": sim.pop("generator_params", {})}
    sim["generator"] = generator
    fields: Dict[str, Any] = {
        "name": header.pop("name", fallback_name),
        "sim": sim,
        "sweep": document.get("sweep", {}),
        "checks": document.get("checks", {}).get("enabled", []),
        "out_dir": document.get("output", {}).get("dir"),
        "params": document.get("params", {}),
    }
    fields.update(header)
    return fields


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Parse TOML scenario text; every failure surfaces as ScenarioError with a line"""
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = _TOML_LINE.search(str(exc))
        raise ScenarioError(f"{source}: {exc}", line=int(match.group(1)) if match else None) from exc

    unknown = set(document) - _SECTIONS
    if unknown:
        section = sorted(unknown)[0]
        line = next((i for i, row in enumerate(text.splitlines(), 1) if row.strip() == f"[{section}]"), None)
        raise ScenarioError(f"{source}: unknown section [{section}]", line=line)
    if "sim" not in document:
        raise ScenarioError(f"{source}: missing [sim] section")

    try:
        return Scenario.model_validate(_scenario_fields(document, Path(source).stem))
    except ValidationError as exc:
        first = exc.errors()[0]
        location = [str(part) for part in first["loc"]]
        key = next((part for part in reversed(location) if not part.isdigit()), None)
        line = _line_of_key(text, _FILE_KEYS.get(key, key)) if key else None
        raise ScenarioError(f"{source}: {'.'.join(location)}: {first['msg']}", line=line) from exc


def load_scenario(name_or_path: str) -> Scenario:
    """A builtin name, or the path of a TOML scenario file"""
    if name_or_path in BUILTIN_SCENARIOS:
        return BUILTIN_SCENARIOS[name_or_path]
    path = Path(name_or_path)
    if not path.is_file():
        raise ScenarioError(f"no builtin scenario or config file named '{name_or_path}'")
    logger.info("loading scenario from %s", path)
    return parse_scenario(path.read_text(encoding="utf-8"), source=str(path))
