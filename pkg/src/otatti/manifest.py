"""JSON experiment manifests: strict parsing into configs, canonical output writers."""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import itertools
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable

from .attacks import ATTACK_KINDS, AttackSpec
from .bo import BOConfig
from .data import TriggerSpec
from .errors import ConfigurationError
from .model import TrainConfig
from .simulation import DataConfig, ExperimentResult, ScenarioConfig
from .trust import TierSpec, TransformParams

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "run_label", "output_dir", "scenario", "trust_weights_from", "bo", "sweep"}
METRIC_COLUMNS = (
    "round",
    "mta",
    "asr",
    "n_trusted",
    "n_suspicious",
    "n_malicious_tier",
    "n_accepted_suspects",
    "n_rs_filtered",
)
FLOAT_DIGITS = 6

# nested dataclass fields of ScenarioConfig and the types they parse into
_NESTED = {
    "attack": AttackSpec,
    "tier": TierSpec,
    "transform": TransformParams,
    "data": DataConfig,
    "trigger": TriggerSpec,
    "train": TrainConfig,
}
_TUPLE_FIELDS = {"trust_weights", "malicious_ids", "hidden", "coords"}


class ManifestError(ConfigurationError):
    """Invalid manifest content; ``field`` is the dotted path of the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclasses.dataclass
class Manifest:
    path: Path
    run_label: str
    output_dir: str | None
    scenario_raw: dict
    scenario: ScenarioConfig
    bo: BOConfig | None = None
    bo_seeds: tuple[int, ...] = ()
    bo_attack_kinds: tuple[str, ...] = ()
    sweep_axes: dict[str, list] | None = None


def _check_keys(raw: dict, allowed: Iterable[str], where: str) -> None:
    for key in raw:
        if key not in allowed:
            raise ManifestError(f"{where}.{key}" if where else key, "unknown key")


def _freeze(name: str, value: Any) -> Any:
    if name in _TUPLE_FIELDS and isinstance(value, list):
        return tuple(value)
    return value


def build_dataclass(cls, raw: Any, where: str):
    if not isinstance(raw, dict):
        raise ManifestError(where, f"expected an object, got {type(raw).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(raw, names, where)
    kwargs = {k: _freeze(k, v) for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ManifestError(where, str(err)) from err


def build_scenario(raw: dict, where: str = "scenario") -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ManifestError(where, "expected an object")
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    _check_keys(raw, names, where)
    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        if key in _NESTED:
            if value is None and key == "attack":
                kwargs[key] = None
            else:
                kwargs[key] = build_dataclass(_NESTED[key], value, f"{where}.{key}")
        else:
            kwargs[key] = _freeze(key, value)
    try:
        return ScenarioConfig(**kwargs)
    except (TypeError, ValueError) as err:
        raise ManifestError(where, str(err)) from err


def _read_weights(path: Path) -> list[float]:
    try:
        doc = json.loads(path.read_text())
        return [float(b) for b in doc["beta_star"]]
    except (OSError, ValueError, KeyError, TypeError) as err:
        raise ManifestError("trust_weights_from", f"cannot read beta_star from {path}: {err}") from err


PRESET_DIR = Path(__file__).parent / "presets"


def preset_names() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def resolve_manifest_path(spec: str | os.PathLike) -> Path:
    """``preset:NAME`` selects a shipped manifest; anything else is a file path."""
    text = str(spec)
    if text.startswith("preset:"):
        name = text.split(":", 1)[1]
        if name not in preset_names():
            raise ManifestError("<file>", f"unknown preset {name!r}; available: {preset_names()}")
        return PRESET_DIR / f"{name}.json"
    return Path(text)


def load_manifest(path: str | os.PathLike, seed_override: int | None = None) -> Manifest:
    path = resolve_manifest_path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as err:
        raise ManifestError("<file>", f"cannot read {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ManifestError("<file>", f"not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ManifestError("<root>", "manifest must be a JSON object")
    _check_keys(raw, TOP_KEYS, "")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ManifestError("schema_version", f"expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    scenario_raw = copy.deepcopy(raw.get("scenario", {}))
    if not isinstance(scenario_raw, dict):
        raise ManifestError("scenario", "expected an object")
    if "trust_weights_from" in raw:
        if "trust_weights" in scenario_raw:
            raise ManifestError("trust_weights_from", "conflicts with scenario.trust_weights")
        scenario_raw["trust_weights"] = _read_weights(path.parent / raw["trust_weights_from"])
    if seed_override is not None:
        scenario_raw["seed"] = seed_override
    scenario = build_scenario(scenario_raw)

    bo = None
    bo_seeds: tuple[int, ...] = ()
    bo_kinds: tuple[str, ...] = ()
    if "bo" in raw:
        bo_raw = dict(raw["bo"]) if isinstance(raw["bo"], dict) else raw["bo"]
        if isinstance(bo_raw, dict):
            bo_seeds = tuple(bo_raw.pop("seeds", ()))
            bo_kinds = tuple(bo_raw.pop("attack_kinds", ()))
            for kind in bo_kinds:
                if kind not in ATTACK_KINDS:
                    raise ManifestError("bo.attack_kinds", f"unknown attack kind {kind!r}")
        bo = build_dataclass(BOConfig, bo_raw, "bo")

    axes = None
    if "sweep" in raw:
        sweep = raw["sweep"]
        if not isinstance(sweep, dict):
            raise ManifestError("sweep", "expected an object")
        _check_keys(sweep, {"axes"}, "sweep")
        axes = sweep.get("axes")
        if not isinstance(axes, dict) or not axes:
            raise ManifestError("sweep.axes", "sweep needs at least one axis")
        for name, values in axes.items():
            if not isinstance(values, list) or not values:
                raise ManifestError(f"sweep.axes.{name}", "axis must be a nonempty list")
        # validate every grid point up front so a typo fails before any run starts
        for point in sweep_points(axes):
            build_scenario(apply_overrides(scenario_raw, point), where=f"sweep point {point_label(point)}")

    label = raw.get("run_label", path.stem)
    if not isinstance(label, str) or not label:
        raise ManifestError("run_label", "must be a nonempty string")
    return Manifest(path, label, raw.get("output_dir"), scenario_raw, scenario, bo, bo_seeds, bo_kinds, axes)


def sweep_points(axes: dict[str, list]) -> list[dict[str, Any]]:
    names = list(axes)
    return [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]


def apply_overrides(scenario_raw: dict, point: dict[str, Any]) -> dict:
    out = copy.deepcopy(scenario_raw)
    for dotted, value in point.items():
        parts = dotted.split(".")
        node = out
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = copy.deepcopy(value)
    return out


def point_label(point: dict[str, Any]) -> str:
    bits = []
    for key, value in point.items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value, sort_keys=True, separators=(",", ":"))
        bits.append(f"{key}={value}")
    return ",".join(bits)


def resolve_output_dir(manifest: Manifest, cli_dir: str | None) -> Path:
    if cli_dir:
        return Path(cli_dir)
    env = os.environ.get("OTATTI_OUTPUT_DIR")
    if env:
        return Path(env) / manifest.run_label
    if manifest.output_dir:
        return manifest.path.parent / manifest.output_dir
    return Path("runs") / manifest.run_label


# ---- serialisation ---------------------------------------------------------

def canonical(obj: Any) -> Any:
    """Round floats to six decimals and turn tuples into lists, recursively."""
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        r = round(obj, FLOAT_DIGITS)
        return 0.0 if r == 0 else r
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(v) for v in obj]
    return obj


def dump_json(obj: Any) -> str:
    return json.dumps(canonical(obj), sort_keys=True, indent=2) + "\n"


def scenario_echo(scenario: ScenarioConfig) -> dict:
    return canonical(dataclasses.asdict(scenario))


def fmt_float(x: float) -> str:
    return f"{x:.{FLOAT_DIGITS}f}"


def metrics_rows(result: ExperimentResult) -> list[list[str]]:
    rows = []
    for rec in result.records:
        n_t, n_s, n_m = rec.tier_counts()
        rows.append(
            [
                str(rec.round),
                fmt_float(rec.mta),
                fmt_float(rec.asr),
                str(n_t),
                str(n_s),
                str(n_m),
                str(sum(rec.verdicts.values())),
                str(rec.n_rs_filtered),
            ]
        )
    return rows


def csv_text(header: Iterable[str], rows: Iterable[Iterable[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(header))
    writer.writerows(rows)
    return buf.getvalue()


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def summary_doc(manifest_label: str, scenario: ScenarioConfig, result: ExperimentResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "run_label": manifest_label,
        "seed": scenario.seed,
        "final_mta": result.final_mta,
        "final_asr": result.final_asr,
        "malicious_ids": sorted(result.malicious),
        "opacity_tripped": result.opacity_tripped,
        "stalled_rounds": sum(r.stalled for r in result.records),
        "wall_time_s": result.wall_time,
        "config": scenario_echo(scenario),
    }


def rounds_jsonl(result: ExperimentResult) -> str:
    lines = []
    for rec in result.records:
        doc = {
            "round": rec.round,
            "mta": rec.mta,
            "asr": rec.asr,
            "tiers": rec.tiers,
            "verdicts": rec.verdicts,
            "final_participants": list(rec.final_participants),
            "rs": rec.rs_snapshot,
            "n_rs_filtered": rec.n_rs_filtered,
            "stalled": rec.stalled,
        }
        lines.append(json.dumps(canonical(doc), sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def write_run_outputs(out_dir: Path, label: str, scenario: ScenarioConfig, result: ExperimentResult) -> None:
    write_text(out_dir / "metrics.csv", csv_text(METRIC_COLUMNS, metrics_rows(result)))
    write_text(out_dir / "summary.json", dump_json(summary_doc(label, scenario, result)))
    write_text(out_dir / "rounds.jsonl", rounds_jsonl(result))
