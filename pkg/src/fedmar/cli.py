"""Command-line entry point: run experiments, sweeps, and analyses.

Configs are flat key=value text files; `--set key=value` overrides beat the
FLSIM_SEED environment variable, which in turn beats the file. rounds.csv and
summary.json contain only deterministic fields (two runs of one config are
byte-identical); wall-clock timing lives in timings.csv and the manifest.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import CapExceeded, ConfigError, FedmarError, MissingArtifact
from .linalg import load_matrices, save_matrices
from .metrics import (
    DetectionLedger,
    avg_tdmi,
    coordinate_tdmi,
    detection_pr,
    prob_at_least_one_malicious,
    welch_one_tailed_t,
)
from .simulation import ExperimentConfig, ExperimentResult, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SWEEP_CAP_DEFAULT = 256
ROUNDS_FIELDS = (
    "round_id",
    "accuracy",
    "precision_so_far",
    "recall_so_far",
    "flagged_ids",
    "malicious_ids",
)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    mapping: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def load_mapping(config_path: str | None, overrides: list[str]) -> dict[str, str]:
    mapping: dict[str, str] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {config_path}")
        mapping.update(parse_config_text(path.read_text(), str(path)))
    env_seed = os.environ.get("FLSIM_SEED")
    if env_seed is not None:
        mapping["seed"] = env_seed
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def _git_blob_hash(data: bytes) -> str:
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _atomic_write_json(path: Path, payload) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _prepare_out_dir(out_dir: str, force: bool) -> Path:
    out = Path(out_dir)
    if out.exists():
        if not out.is_dir():
            raise ConfigError(f"output path exists and is not a directory: {out}")
        if any(out.iterdir()) and not force:
            raise ConfigError(f"output directory not empty (use --force): {out}")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ids_field(ids) -> str:
    return ";".join(str(i) for i in sorted(ids))


def write_run_outputs(
    out: Path, result: ExperimentResult, config_path: str | None
) -> None:
    config = result.config

    rows = [",".join(ROUNDS_FIELDS)]
    for rec in result.records:
        rows.append(
            ",".join(
                [
                    str(rec.round_id),
                    repr(rec.accuracy),
                    repr(rec.precision_so_far),
                    repr(rec.recall_so_far),
                    _ids_field(rec.flagged),
                    _ids_field(rec.malicious),
                ]
            )
        )
    _atomic_write_text(out / "rounds.csv", "\n".join(rows) + "\n")

    timing_rows = ["round_id,ms"]
    timing_rows += [f"{rec.round_id},{rec.ms:.3f}" for rec in result.records]
    _atomic_write_text(out / "timings.csv", "\n".join(timing_rows) + "\n")

    _atomic_write_json(out / "summary.json", result.summary)

    config_bytes = json.dumps(config.to_flat_dict(), sort_keys=True).encode()
    manifest = {
        "config_path": config_path,
        "config_hash": _git_blob_hash(config_bytes),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "runtime_ms": result.runtime_ms,
    }
    _atomic_write_json(out / "manifest.json", manifest)

    if config.export_scores:
        score_rows = []
        for rec in result.records:
            for cid in range(config.K):
                score = rec.scores.get(cid) if rec.scores is not None else None
                score_rows.append(
                    [
                        rec.round_id,
                        cid,
                        "NA" if score is None else repr(float(score)),
                        str(cid in rec.flagged).lower(),
                        str(cid in rec.malicious).lower(),
                    ]
                )
        lines = ["round_id,client_id,score,flagged,truth"]
        lines += [",".join(str(v) for v in row) for row in score_rows]
        _atomic_write_text(out / "scores.csv", "\n".join(lines) + "\n")

    if config.export_trajectories:
        clients = sorted(result.trajectories)
        matrices = []
        rounds_index = {}
        for cid in clients:
            entries = result.trajectories[cid]
            rounds_index[str(cid)] = [t for t, _ in entries]
            matrices.append(np.stack([vec for _, vec in entries], axis=0))
        save_matrices(out / "trajectories.bin", matrices)
        _atomic_write_json(
            out / "trajectories.json",
            {
                "clients": clients,
                "rounds": rounds_index,
                "ever_malicious": sorted(result.ever_malicious),
            },
        )


def cmd_run(args) -> int:
    mapping = load_mapping(args.config, args.set or [])
    config = ExperimentConfig.from_mapping(mapping)
    out = _prepare_out_dir(args.out, args.force)
    result = run_experiment(config)
    write_run_outputs(out, result, args.config)
    print(
        f"run complete: T={config.T} best_accuracy={result.summary['best_accuracy']:.4f} "
        f"precision={result.summary['precision']:.4f} recall={result.summary['recall']:.4f}"
    )
    return EXIT_OK


def _parse_sweep_spec(items: list[str]) -> list[tuple[str, list[str]]]:
    spec = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--sweep expects key=v1,v2,..., got {item!r}")
        key, values = item.split("=", 1)
        values = [v.strip() for v in values.split(",") if v.strip()]
        if not values:
            raise ConfigError(f"--sweep {key}: no values given")
        spec.append((key.strip(), values))
    return spec


def _sanitize(token: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "._-" else "-" for ch in token)


def _run_sweep_cell(payload) -> dict:
    mapping, out_dir, config_path = payload
    config = ExperimentConfig.from_mapping(mapping)
    result = run_experiment(config)
    write_run_outputs(Path(out_dir), result, config_path)
    return result.summary


def cmd_sweep(args) -> int:
    base = load_mapping(args.config, args.set or [])
    spec = _parse_sweep_spec(args.sweep or [])
    keys = [key for key, _ in spec]
    combos = list(itertools.product(*[values for _, values in spec])) if spec else [()]
    if len(combos) > args.cap:
        raise CapExceeded(f"sweep expands to {len(combos)} runs, cap is {args.cap}")
    out = _prepare_out_dir(args.out, args.force)

    jobs = []
    for combo in combos:
        mapping = dict(base)
        mapping.update(dict(zip(keys, combo)))
        ExperimentConfig.from_mapping(mapping)  # validate before launching
        if combo:
            name = _sanitize("_".join(f"{k}={v}" for k, v in zip(keys, combo)))
            cell_dir = out / name
            cell_dir.mkdir(exist_ok=True)
        else:
            cell_dir = out
        jobs.append((mapping, str(cell_dir), args.config))

    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_run_sweep_cell, jobs))
    else:
        summaries = [_run_sweep_cell(job) for job in jobs]

    header = keys + ["best_accuracy", "final_accuracy", "precision", "recall"]
    lines = [",".join(header)]
    for combo, summary in zip(combos, summaries):
        row = list(combo) + [
            repr(summary["best_accuracy"]),
            repr(summary["final_accuracy"]),
            repr(summary["precision"]),
            repr(summary["recall"]),
        ]
        lines.append(",".join(str(v) for v in row))
    _atomic_write_text(out / "sweep_summary.csv", "\n".join(lines) + "\n")
    print(f"sweep complete: {len(combos)} runs in {out}")
    return EXIT_OK


def _read_rounds_csv(run_dir: Path) -> list[dict]:
    path = run_dir / "rounds.csv"
    if not path.is_file():
        raise MissingArtifact(f"{path} not found")
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def _analyze_pr(run_dir: Path) -> int:
    ledger = DetectionLedger()
    for row in _read_rounds_csv(run_dir):
        if int(row["round_id"]) < 2:
            continue
        flagged = {int(x) for x in row["flagged_ids"].split(";") if x}
        truth = {int(x) for x in row["malicious_ids"].split(";") if x}
        ledger.record(flagged, truth)
    if not ledger.rounds:
        raise MissingArtifact("run has no detection rounds (t >= 2)")
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        precision, recall = detection_pr(ledger)
    _atomic_write_json(
        run_dir / "pr.json",
        {
            "tp": ledger.tp,
            "fp": ledger.fp,
            "fn": ledger.fn,
            "precision": precision,
            "recall": recall,
        },
    )
    print(f"P={precision:.4f} R={recall:.4f} (tp={ledger.tp} fp={ledger.fp} fn={ledger.fn})")
    return EXIT_OK


def _analyze_tdmi(run_dir: Path, delay: int, bins: int) -> int:
    bin_path = run_dir / "trajectories.bin"
    idx_path = run_dir / "trajectories.json"
    if not bin_path.is_file() or not idx_path.is_file():
        raise MissingArtifact(f"trajectory artifacts missing in {run_dir}")
    index = json.loads(idx_path.read_text())
    matrices = load_matrices(bin_path)
    clients = index["clients"]
    ever_malicious = set(index["ever_malicious"])

    usable = [(cid, mat) for cid, mat in zip(clients, matrices) if mat.shape[0] >= delay + 4]
    if not usable:
        raise MissingArtifact(
            f"no client has the >= {delay + 4} observations needed at delay {delay}"
        )

    lines = ["client_id,round_pair,avg_tdmi"]
    legit_pool: list[np.ndarray] = []
    mal_pool: list[np.ndarray] = []
    for cid, mat in usable:
        per_coord = coordinate_tdmi(mat, delay=delay, bins=bins)
        lines.append(f"{cid},t:t+{delay},{repr(float(np.mean(per_coord)))}")
        (mal_pool if cid in ever_malicious else legit_pool).append(per_coord)
    _atomic_write_text(run_dir / "tdmi.csv", "\n".join(lines) + "\n")

    if not legit_pool or not mal_pool:
        raise MissingArtifact("need both legitimate and malicious trajectories for the test")
    stat, dof, p_value = welch_one_tailed_t(
        np.concatenate(legit_pool), np.concatenate(mal_pool)
    )
    _atomic_write_json(
        run_dir / "ttest.json", {"statistic": stat, "dof": dof, "p_value": p_value}
    )
    print(f"tdmi: t={stat:.4f} dof={dof:.1f} p={p_value:.3e}")
    return EXIT_OK


def _analyze_prob(run_dir: Path, total: int, malicious: int, selected: int) -> int:
    p = prob_at_least_one_malicious(total, malicious, selected)
    _atomic_write_json(
        run_dir / "prob.json",
        {"K": total, "b": malicious, "m": selected, "probability": p},
    )
    print(f"P(at least one malicious selected) = {p:.6f}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    run_dir = Path(args.run_dir)
    if args.mode == "prob":
        if args.K is None or args.b is None or args.m is None:
            raise ConfigError("mode=prob needs --K, --b, and --m")
        run_dir.mkdir(parents=True, exist_ok=True)
        return _analyze_prob(run_dir, args.K, args.b, args.m)
    if not run_dir.is_dir():
        raise MissingArtifact(f"run directory not found: {run_dir}")
    if args.mode == "pr":
        return _analyze_pr(run_dir)
    return _analyze_tdmi(run_dir, args.delay, args.bins)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedmar",
        description="Seeded federated-learning simulator with forecast-based filtering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", required=True, help="flat key=value config file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    run.add_argument("--force", action="store_true", help="allow a non-empty output directory")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a cartesian grid of experiments")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    sweep.add_argument(
        "--sweep", action="append", metavar="KEY=V1,V2", help="values to grid over"
    )
    sweep.add_argument("--jobs", type=int, default=1, help="parallel subruns")
    sweep.add_argument("--cap", type=int, default=SWEEP_CAP_DEFAULT)
    sweep.add_argument("--force", action="store_true")
    sweep.set_defaults(func=cmd_sweep)

    analyze = sub.add_parser("analyze", help="post-process a run directory")
    analyze.add_argument("run_dir", nargs="?", default=".")
    analyze.add_argument("--mode", choices=("tdmi", "pr", "prob"), required=True)
    analyze.add_argument("--delay", type=int, default=1)
    analyze.add_argument("--bins", type=int, default=10)
    analyze.add_argument("--K", type=int, default=None)
    analyze.add_argument("--b", type=int, default=None)
    analyze.add_argument("--m", type=int, default=None)
    analyze.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MissingArtifact) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FedmarError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
