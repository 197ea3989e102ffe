"""Scenario files: one JSON document per experiment.

A scenario carries a ``schema_version``, exactly one mechanism section
(``auction``, ``bundled``, ``tsvcg`` or ``assignment``) and optional
``simulation`` and ``verify`` blocks.  Parsing builds the library's own
immutable types, so ``parse_scenario(s.to_dict()) == s`` for every valid s.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import assignment as asg
from . import bundled_auction as bund
from . import single_auction as single
from . import tso_auction as tso
from .distributions import distribution_from_dict
from .errors import ScenarioError

SCHEMA_VERSION = 1
SECTIONS = ("auction", "bundled", "tsvcg", "assignment")
ASSIGNMENT_MODES = ("vcg", "ivcg")


@dataclass(frozen=True)
class Simulation:
    trials: int = 0
    seed: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.trials, bool) or not isinstance(self.trials, int) or self.trials < 0:
            raise ScenarioError(f"simulation.trials must be a nonnegative integer, got {self.trials!r}")
        if self.seed is not None and (isinstance(self.seed, bool) or not isinstance(self.seed, int)):
            raise ScenarioError(f"simulation.seed must be an integer, got {self.seed!r}")
        if self.trials > 0 and self.seed is None:
            raise ScenarioError("simulation.seed is required when trials > 0")

    def to_dict(self) -> dict:
        d = {"trials": self.trials}
        if self.seed is not None:
            d["seed"] = self.seed
        return d


@dataclass(frozen=True)
class VerifySpec:
    grid_points: int = 20
    tolerance: float = 1e-7

    def __post_init__(self):
        if isinstance(self.grid_points, bool) or not isinstance(self.grid_points, int) or self.grid_points < 2:
            raise ScenarioError(f"verify.grid_points must be an integer >= 2, got {self.grid_points!r}")
        # a negative tolerance demands that every deviation be strictly worse than the truth
        if isinstance(self.tolerance, bool) or not isinstance(self.tolerance, (int, float)) or not math.isfinite(self.tolerance):
            raise ScenarioError(f"verify.tolerance must be a finite number, got {self.tolerance!r}")

    def to_dict(self) -> dict:
        return {"grid_points": self.grid_points, "tolerance": self.tolerance}


@dataclass(frozen=True)
class AssignmentSection:
    problem: asg.AssignmentProblem
    mode: str = "vcg"
    bids: Optional[tuple] = None  # (player_id, TwoDimBid); i-VCG only

    def __post_init__(self):
        if self.mode not in ASSIGNMENT_MODES:
            raise ScenarioError(f"assignment.mode must be one of {ASSIGNMENT_MODES}, got {self.mode!r}")

    def to_dict(self) -> dict:
        d = {
            "lambda": self.problem.spot_price,
            "demand": self.problem.demand.to_dict(),
            "players": [{"id": pid, "type": law.to_dict()} for pid, law in self.problem.players],
            "mode": self.mode,
        }
        if self.bids is not None:
            d["bids"] = [{"id": pid, **b.to_dict()} for pid, b in self.bids]
        return d

    @classmethod
    def from_dict(cls, spec: dict) -> "AssignmentSection":
        players = tuple((p["id"], distribution_from_dict(p["type"])) for p in spec["players"])
        problem = asg.AssignmentProblem(players, asg.Demand.from_dict(spec["demand"]), float(spec["lambda"]))
        bids = None
        if "bids" in spec:
            bids = tuple((int(b["id"]), asg.TwoDimBid(float(b["beta"]), float(b["d"]))) for b in spec["bids"])
        return cls(problem, spec.get("mode", "vcg"), bids)


@dataclass(frozen=True)
class Scenario:
    kind: str
    body: object
    mechanism: Optional[str] = None
    simulation: Simulation = field(default_factory=Simulation)
    verify: VerifySpec = field(default_factory=VerifySpec)
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        section = self.body.to_dict()
        if self.mechanism is not None:
            section = {"mechanism": self.mechanism, **section}
        return {
            "schema_version": self.schema_version,
            self.kind: section,
            "simulation": self.simulation.to_dict(),
            "verify": self.verify.to_dict(),
        }


def _section(kind: str, spec: dict):
    if not isinstance(spec, dict):
        raise ScenarioError(f"section {kind!r} must be an object")
    if kind == "auction":
        mech = spec.get("mechanism")
        if mech not in single.MECHANISMS:
            raise ScenarioError(f"auction.mechanism must be one of {single.MECHANISMS}, got {mech!r}")
        return mech, single.AuctionScenario.from_dict(spec)
    if kind == "bundled":
        mech = spec.get("mechanism", bund.BSVCG)
        if mech not in (bund.BSVCG, bund.BSSP):
            raise ScenarioError(f"bundled.mechanism must be 'bsvcg' or 'bssp', got {mech!r}")
        return mech, bund.BundledScenario.from_dict(spec)
    if kind == "tsvcg":
        return None, tso.TsvcgScenario.from_dict(spec)
    return None, AssignmentSection.from_dict(spec)


def parse_scenario(data) -> Scenario:
    """Validate the document structure and build the section's domain objects.

    Structural problems raise :class:`ScenarioError`; invalid parameters
    (a Beta with alpha <= 0, say) raise the domain error of the module that
    rejects them.
    """
    if not isinstance(data, dict):
        raise ScenarioError("a scenario must be a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION}")
    present = [k for k in SECTIONS if k in data]
    if len(present) != 1:
        raise ScenarioError(f"expected exactly one of {SECTIONS}, found {present}")
    unknown = set(data) - set(SECTIONS) - {"schema_version", "simulation", "verify"}
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")
    kind = present[0]
    try:
        mechanism, body = _section(kind, data[kind])
        simulation = Simulation(**data.get("simulation", {}))
        verify = VerifySpec(**data.get("verify", {}))
    except (KeyError, TypeError, IndexError) as exc:
        raise ScenarioError(f"malformed {kind!r} scenario: {exc!r}") from None
    return Scenario(kind, body, mechanism, simulation, verify, version)


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: not valid JSON ({exc})") from None
    return parse_scenario(data)


def dumps(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True) + "\n"


def reference_scenarios() -> dict:
    """The scenario files shipped with the package, keyed by file stem."""
    from importlib import resources

    root = resources.files("auction_lab") / "scenarios"
    return {p.name[: -len(".json")]: p for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".json")}
