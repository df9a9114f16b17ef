"""Run orchestration: executing scenario docs, replay checks, cross-play.

The runner owns everything between a scenario document and its artifacts:
provider construction, trace file emission, byte-level replay comparison,
and the cross-play matrix CSV.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import lm, scenario
from .engines import RunResult, Simulation
from .errors import CassetteMiss, ProviderError
from .trace import TraceSink


@dataclass
class RunArtifacts:
    result: RunResult
    sink: TraceSink
    focal_scores: dict

    @property
    def lines(self) -> list[str]:
        return self.sink.lines()


def run_doc(
    doc: dict,
    *,
    provider: Optional[lm.Provider] = None,
    provider_config: Optional[dict] = None,
    seed: Optional[int] = None,
    max_steps: Optional[int] = None,
    workers: int = 1,
    out: Optional[str | Path] = None,
    channel=None,
    base_dir: Optional[Path] = None,
) -> RunArtifacts:
    """Instantiate and execute one scenario document."""
    doc = dict(doc)
    if seed is not None:
        doc["seed"] = seed
    if max_steps is not None:
        doc["max_steps"] = max_steps

    actors, gm, config = scenario.instantiate(doc)
    config.workers = workers
    config.header_extra = {
        "scenario": doc.get("name", ""),
        "scenario_digest": scenario.scenario_digest(doc),
    }

    if provider is None:
        cfg = provider_config if provider_config is not None else doc.get("provider", {"kind": "echo"})
        provider = lm.provider_from_config(cfg, base_dir=base_dir)

    sink = TraceSink(out)
    sim = Simulation(actors, gm, config, sink, provider, channel=channel)
    try:
        result = sim.run()
    except ProviderError as exc:
        # keep whatever was traced so replay checks can localize the failure
        exc.trace_lines = sink.lines()
        raise
    finally:
        sink.close()
        provider.close()
    return RunArtifacts(result, sink, result.scores)


def first_divergence(expected: list[str], actual: list[str]) -> Optional[int]:
    """Index (= trace seq) of the first differing line, None if identical."""
    for i, (a, b) in enumerate(zip(expected, actual)):
        if a != b:
            return i
    if len(expected) != len(actual):
        return min(len(expected), len(actual))
    return None


def replay_doc(doc: dict, cassette: str | Path, expected_lines: list[str],
               **kwargs) -> tuple[Optional[int], Optional[RunArtifacts]]:
    """Re-execute against a cassette; report the first divergent seq.

    A tampered response derails later prompts into cassette misses, but
    the divergence traced before the miss is the real finding, so it
    wins. A miss with no prior divergence (wrong scenario, truncated
    cassette) propagates.
    """
    provider = lm.ReplayProvider(cassette)
    try:
        artifacts = run_doc(doc, provider=provider, **kwargs)
    except CassetteMiss as exc:
        partial = getattr(exc, "trace_lines", [])
        for i, (a, b) in enumerate(zip(expected_lines, partial)):
            if a != b:
                return i, None
        raise
    return first_divergence(expected_lines, artifacts.lines), artifacts


@dataclass(frozen=True)
class CrossplaySpec:
    actor_prefabs: tuple[str, ...]
    scenarios: tuple[str, ...]
    seeds: tuple[int, ...]
    focal_slot: int = 0

    def __post_init__(self):
        if not self.actor_prefabs or not self.scenarios or not self.seeds:
            raise ValueError("actor_prefabs, scenarios, and seeds must be non-empty")
        if self.focal_slot < 0:
            raise ValueError("focal_slot must be nonnegative")

    @staticmethod
    def from_dict(data: dict) -> "CrossplaySpec":
        return CrossplaySpec(
            tuple(data["actor_prefabs"]),
            tuple(data["scenarios"]),
            tuple(data["seeds"]),
            int(data.get("focal_slot", 0)),
        )


CROSSPLAY_COLUMNS = ("focal", "scenario", "seed", "total_score", "steps", "warnings", "status")


def swap_focal(doc: dict, focal_slot: int, prefab_name: str) -> dict:
    """Substitute the focal actor's prefab, keeping compatible overrides.

    Overrides the new prefab does not declare are dropped, so a utility
    table configured for one actor style never leaks into another.
    """
    from .prefabs import get_prefab

    doc = dict(doc)
    actors = [dict(a) for a in doc["actors"]]
    if focal_slot >= len(actors):
        raise ValueError(f"focal_slot {focal_slot} out of range for {len(actors)} actors")
    prefab = get_prefab(prefab_name)
    declared = prefab.param_names() if prefab is not None else set()
    entry = actors[focal_slot]
    entry["prefab"] = prefab_name
    entry["overrides"] = {k: v for k, v in entry.get("overrides", {}).items() if k in declared}
    doc["actors"] = actors
    return doc


def crossplay(spec: CrossplaySpec, *, base_dir: Optional[Path] = None) -> list[dict]:
    """One run per (focal prefab, scenario, seed), plus per-focal means.

    Failures are recorded as rows with status "failed"; the harness never
    aborts on an individual cell.
    """
    rows: list[dict] = []
    for prefab_name in spec.actor_prefabs:
        cell_scores: list[float] = []
        for scenario_path in spec.scenarios:
            for seed in spec.seeds:
                path = Path(scenario_path)
                if not path.is_absolute() and base_dir is not None:
                    path = base_dir / path
                row = {
                    "focal": prefab_name,
                    "scenario": scenario_path,
                    "seed": seed,
                    "total_score": "",
                    "steps": "",
                    "warnings": "",
                    "status": "ok",
                }
                try:
                    doc = scenario.load_doc(path)
                    doc = swap_focal(doc, spec.focal_slot, prefab_name)
                    focal_name = doc["actors"][spec.focal_slot].get(
                        "name", doc["actors"][spec.focal_slot]["prefab"])
                    artifacts = run_doc(doc, seed=seed, base_dir=path.parent)
                    focal = artifacts.focal_scores.get(focal_name, {})
                    score = focal.get("mean", 0.0)
                    row.update(total_score=score,
                               steps=artifacts.result.steps,
                               warnings=artifacts.result.warnings)
                    cell_scores.append(score)
                except Exception as exc:
                    row.update(status="failed", total_score="",
                               steps="", warnings="")
                    row["detail"] = str(exc)
                rows.append(row)
        mean = sum(cell_scores) / len(cell_scores) if cell_scores else ""
        rows.append({
            "focal": prefab_name,
            "scenario": "",
            "seed": "",
            "total_score": mean,
            "steps": "",
            "warnings": "",
            "status": "mean",
        })
    return rows


def crossplay_csv(rows: list[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CROSSPLAY_COLUMNS)
    for row in rows:
        writer.writerow([row.get(col, "") for col in CROSSPLAY_COLUMNS])
    return buffer.getvalue()


def summarize(result: RunResult) -> str:
    lines = [
        f"steps: {result.steps}",
        f"reason: {result.reason}",
        f"warnings: {result.warnings}",
    ]
    for entity in sorted(result.scores):
        row = result.scores[entity]
        lines.append(f"score {entity}: total={row['total']:.4f} mean={row['mean']:.4f}")
    return "\n".join(lines)
