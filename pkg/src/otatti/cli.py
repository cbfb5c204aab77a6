"""Command-line entry point: ``otatti run|calibrate|sweep <manifest>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import kernels
from .bo import run_bo, scenario_objective
from .errors import ConfigurationError
from .manifest import (
    ManifestError,
    apply_overrides,
    build_scenario,
    csv_text,
    dump_json,
    fmt_float,
    load_manifest,
    point_label,
    resolve_output_dir,
    sweep_points,
    write_run_outputs,
    write_text,
)
from .simulation import run_experiment

log = logging.getLogger("otatti")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


def cmd_run(manifest, out_dir: Path) -> int:
    result = run_experiment(manifest.scenario)
    write_run_outputs(out_dir, manifest.run_label, manifest.scenario, result)
    log.info("run %s: MTA=%.4f ASR=%.4f -> %s", manifest.run_label, result.final_mta, result.final_asr, out_dir)
    return EXIT_OK


def cmd_calibrate(manifest, out_dir: Path) -> int:
    if manifest.bo is None:
        raise ManifestError("bo", "calibrate needs a 'bo' section")
    start = time.perf_counter()
    objective = scenario_objective(
        manifest.scenario, manifest.bo.lambda_tradeoff, manifest.bo_seeds or None, manifest.bo_attack_kinds or None
    )
    res = run_bo(objective, manifest.bo)
    doc = {
        "schema_version": 1,
        "run_label": manifest.run_label,
        "beta_star": list(res.best_beta),
        "best_objective": res.best_objective,
        "lambda_tradeoff": manifest.bo.lambda_tradeoff,
        "seeds": list(manifest.bo_seeds) or [manifest.scenario.seed],
        "attack_kinds": list(manifest.bo_attack_kinds),
        "records": [{"beta": list(r.beta), "objective": r.objective} for r in res.records],
        "wall_time_s": time.perf_counter() - start,
    }
    text = dump_json(doc)
    # beta_star keeps full precision so it stays on the simplex to 1e-9 when read back
    doc = json.loads(text)
    doc["beta_star"] = [float(b) for b in res.best_beta]
    write_text(out_dir / "calibration.json", json.dumps(doc, sort_keys=True, indent=2) + "\n")
    log.info("calibrate %s: beta*=%s J=%.4f", manifest.run_label, [round(b, 4) for b in res.best_beta], res.best_objective)
    return EXIT_OK


def cmd_sweep(manifest, out_dir: Path) -> int:
    if not manifest.sweep_axes:
        raise ManifestError("sweep.axes", "sweep needs at least one axis")
    axes = list(manifest.sweep_axes)
    rows = []
    for i, point in enumerate(sweep_points(manifest.sweep_axes)):
        label = point_label(point)
        scenario = build_scenario(apply_overrides(manifest.scenario_raw, point), where=f"sweep point {label}")
        result = run_experiment(scenario)
        sub = out_dir / f"point_{i:03d}"
        write_run_outputs(sub, f"{manifest.run_label}/{label}", scenario, result)
        rows.append(
            [f"point_{i:03d}"]
            + [point_label({a: point[a]}).split("=", 1)[1] for a in axes]
            + [str(scenario.seed), fmt_float(result.final_mta), fmt_float(result.final_asr), str(int(result.opacity_tripped))]
        )
        log.info("sweep point %d (%s): MTA=%.4f ASR=%.4f", i, label, result.final_mta, result.final_asr)
    header = ["point"] + axes + ["seed", "final_mta", "final_asr", "opacity_tripped"]
    write_text(out_dir / "sweep_summary.csv", csv_text(header, rows))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "calibrate": cmd_calibrate, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otatti", description="Over-the-air FL backdoor defense simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("manifest", help="JSON manifest path")
        p.add_argument("--output-dir", help="output directory (overrides OTATTI_OUTPUT_DIR and the manifest)")
        p.add_argument("--seed", type=int, help="override scenario.seed")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        manifest = load_manifest(args.manifest, seed_override=args.seed)
        out_dir = resolve_output_dir(manifest, args.output_dir)
        return COMMANDS[args.command](manifest, out_dir)
    except ManifestError as err:
        print(f"invalid manifest: {err}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigurationError as err:
        print(f"invalid configuration: {err}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as err:  # noqa: BLE001 - report any runtime failure as exit 1
        log.exception("run failed")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
