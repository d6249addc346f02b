"""
Batch command-line driver.

    fbm-lgf sample | kernel-table | converge-pairing | gmc-spectrum | selfcheck
            [--config run.json] [--seed N] [--threads N] [--out DIR] [--set key=value ...]

Exit codes: 0 success, 1 runtime or assertion failure, 2 rejected config.  Every
output file is staged in a temporary directory and moved into place only after
the whole run succeeded; the manifest is written last.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

import numpy as np
from pydantic import ValidationError

from . import __version__
from .config import (CONFIG_MODELS, ConvergePairingConfig, GmcSpectrumConfig, KernelTableConfig,
                     SampleConfig, SelfcheckConfig)
from .errors import DomainError
from .gmc import (GmcMeasureSample, estimate_spectrum, frisch_parisi_dim, gmc_log_weights,
                  gmc_sampling_grid)
from .kernels import kernel_table_rows, strictly_decreasing
from .pairing import QuadratureSpec, convergence_report, mc_pairing_covariance
from .sampler import (normalize_to_x, sample_fbm, sample_fbm_cholesky, write_ensemble_binary,
                      write_ensemble_csv)
from .selfcheck import format_report, run_selfcheck

log = logging.getLogger("fbm_lgf")

OUT_ENV = "FBM_LGF_OUT"
DEFAULT_OUT = "fbm_lgf_out"


class ConfigRejected(Exception):
    def __init__(self, details: list[dict]):
        super().__init__("config rejected")
        self.details = details


class RunFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors: machine-readable, exit 2
    def error(self, message):
        _emit_error("usage", [{"msg": message}])
        sys.exit(2)


def _emit_error(kind: str, details: list[dict]) -> None:
    sys.stderr.write(json.dumps({"error": kind, "details": details}, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands


def cmd_sample(cfg: SampleConfig, stage: Path, threads: int) -> list[str]:
    grid = cfg.grid.build()
    ens = sample_fbm(grid, cfg.h, cfg.n_replicas, cfg.seed, method=cfg.method, threads=threads)
    if cfg.normalize:
        ens = normalize_to_x(ens)
    if "csv" in cfg.formats:
        write_ensemble_csv(ens, stage / "ensemble.csv")
    if "binary" in cfg.formats:
        write_ensemble_binary(ens, stage / "ensemble.bin")
    return []


KERNEL_COLUMNS = ["t", "s", "h", "i1", "i2", "i3", "i4", "total", "limit_total", "abs_gap"]


def cmd_kernel_table(cfg: KernelTableConfig, stage: Path, threads: int) -> list[str]:
    rows = kernel_table_rows(cfg.probes, cfg.h_values)
    _write_csv(stage / "kernel_table.csv", KERNEL_COLUMNS,
               [[r[c] for c in KERNEL_COLUMNS] for r in rows])
    failures = []
    if cfg.check_monotone:
        for t, s in cfg.probes:
            gaps = [r["abs_gap"] for r in rows if r["t"] == t and r["s"] == s and r["h"] > 0.0]
            if not strictly_decreasing(gaps):
                failures.append(f"gap not decreasing in h at probe ({t}, {s}): {gaps}")
    return failures


def cmd_converge_pairing(cfg: ConvergePairingConfig, stage: Path, threads: int) -> list[str]:
    f1 = cfg.f1.build(cfg.mean_zero)
    f2 = cfg.f2.build(cfg.mean_zero)
    report = convergence_report(f1, f2, cfg.h_values, QuadratureSpec(abs_tol=cfg.abs_tol))
    if cfg.replicas > 0:
        fs = [f1] if f1 == f2 else [f1, f2]
        key = (0, 0) if len(fs) == 1 else (0, 1)
        for row in report.rows:
            est = mc_pairing_covariance(fs, row["h"], cfg.replicas, cfg.seed, step=cfg.mc_step,
                                        threads=threads)[key]
            row["mc_value"] = est.value
            row["mc_se"] = est.std_error
            row["mc_z"] = (est.value - row["value"]) / est.std_error
    (stage / "convergence.csv").write_text(report.to_csv())
    (stage / "convergence.json").write_text(report.to_json())
    if cfg.check_monotone and not report.monotone:
        return [f"pairing gap not decreasing in h: {report.gaps}"]
    return []


FP_COLUMNS = ["gamma", "r", "dim_numeric", "argmin_p", "closed_form", "abs_dev", "argmin_dev"]
FP_TOL = 1e-6


def cmd_gmc_spectrum(cfg: GmcSpectrumConfig, stage: Path, threads: int) -> list[str]:
    params = cfg.params()
    est = estimate_spectrum(params, cfg.q_values, cfg.r_values, cfg.n_replicas, cfg.seed,
                            cfg.centers, threads)
    (stage / "spectrum.csv").write_text(est.to_csv())
    (stage / "spectrum.json").write_text(est.to_json())

    rows, worst = [], 0.0
    for g in cfg.fp_gammas:
        for frac in cfg.fp_r_fractions:
            r = frac * np.sqrt(2.0) / g
            res = frisch_parisi_dim(g, r)
            dev, adev = abs(res.dim - res.closed_form), abs(res.argmin_p - r)
            worst = max(worst, dev, adev)
            rows.append([g, r, res.dim, res.argmin_p, res.closed_form, dev, adev])
    _write_csv(stage / "frisch_parisi.csv", FP_COLUMNS, rows)

    if cfg.export_sample:
        # replica 0 of the spectrum run, regenerated from its own stream
        ens = sample_fbm_cholesky(gmc_sampling_grid(params), params.h, 1, cfg.seed)
        m = GmcMeasureSample(params, gmc_log_weights(params, normalize_to_x(ens))[0])
        (stage / "measure_sample.csv").write_text(m.to_csv())

    failures = []
    if worst > FP_TOL:
        failures.append(f"Frisch-Parisi max deviation {worst:.3e} exceeds {FP_TOL:g}")
    for q, r in est.overflow:
        failures.append(f"non-finite moment at q={q}, r={r}")
    return failures


def cmd_selfcheck(cfg: SelfcheckConfig, stage: Path, threads: int) -> list[str]:
    results = run_selfcheck(cfg.seed, cfg.n_random)
    (stage / "selfcheck.txt").write_text(format_report(results))
    return [r.line() for r in results if not r.passed]


COMMANDS: dict[str, Callable] = {
    "sample": cmd_sample,
    "kernel-table": cmd_kernel_table,
    "converge-pairing": cmd_converge_pairing,
    "gmc-spectrum": cmd_gmc_spectrum,
    "selfcheck": cmd_selfcheck,
}


# ---------------------------------------------------------------- plumbing


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigRejected([{"loc": ["--set"], "msg": f"expected key=value, got {item!r}"}])
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def load_config(command: str, path: str | None, seed: int | None, sets: list[str]):
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigRejected([{"loc": ["--config"], "msg": str(exc)}]) from exc
        if not isinstance(doc, dict):
            raise ConfigRejected([{"loc": ["--config"], "msg": "config must be a JSON object"}])
    doc.update(_parse_set(sets))
    model = CONFIG_MODELS[command]
    if seed is not None:
        if "seed" not in model.model_fields:
            raise ConfigRejected([{"loc": ["--seed"], "msg": f"{command} takes no seed"}])
        doc["seed"] = seed
    try:
        return model.model_validate(doc)
    except ValidationError as exc:
        raise ConfigRejected([
            {"loc": [str(p) for p in e["loc"]], "msg": e["msg"]} for e in exc.errors()
        ]) from exc
    except DomainError as exc:
        raise ConfigRejected([{"loc": [], "msg": str(exc)}]) from exc


def resolve_out(flag: str | None) -> Path:
    """--out beats $FBM_LGF_OUT beats the default directory."""
    if flag:
        return Path(flag)
    env = os.environ.get(OUT_ENV)
    return Path(env) if env else Path(DEFAULT_OUT)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat(timespec="milliseconds")


def _publish(stage: Path, out: Path, manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    names = sorted(p.name for p in stage.iterdir())
    manifest["outputs"] = {n: {"sha256": _sha256(stage / n), "bytes": (stage / n).stat().st_size}
                           for n in names}
    for n in names:
        os.replace(stage / n, out / n)
    tmp = out / ".manifest.json.tmp"
    _write_json(tmp, manifest)
    os.replace(tmp, out / "manifest.json")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fbm-lgf", description="Normalized fBm, its log-correlated limit and GMC.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "sample": "sample fBm or normalized X^H paths",
        "kernel-table": "tabulate K_H against the limit kernel",
        "converge-pairing": "test-function pairings along an h sweep",
        "gmc-spectrum": "moment-scaling spectrum of the GMC measure",
        "selfcheck": "fast invariant suite",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker threads (default: all cores)")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else ./{DEFAULT_OUT})")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a top-level config field; VALUE is parsed as JSON")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigRejected([{"loc": ["--threads"], "msg": "must be >= 1"}])
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigRejected([{"loc": ["--seed"], "msg": "must be a 64-bit unsigned integer"}])
        cfg = load_config(args.command, args.config, args.seed, args.set)
    except ConfigRejected as exc:
        _emit_error("config", exc.details)
        return 2

    out = resolve_out(args.out)
    started = time.time()
    # staging next to the output keeps the final renames on one filesystem
    out.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".fbm_lgf-", dir=out.parent))
    try:
        failures = COMMANDS[args.command](cfg, stage, args.threads)
        if failures:
            raise RunFailed("\n".join(failures))
        finished = time.time()
        manifest = {
            "command": args.command,
            "config": cfg.model_dump(mode="json"),
            "tool": "fbm_lgf",
            "version": __version__,
            "threads": args.threads,
            "started_at": _iso(started),
            "finished_at": _iso(finished),
            "duration_s": round(finished - started, 6),
        }
        _publish(stage, out, manifest)
    except RunFailed as exc:
        _emit_error("failed", [{"msg": line} for line in str(exc).splitlines()])
        return 1
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        log.debug("run failed", exc_info=True)
        _emit_error("runtime", [{"type": type(exc).__name__, "msg": str(exc)}])
        return 1
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    log.info("wrote %s", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
