"""File outputs: draw tables, summaries, study reports and run manifests.

Machine-readable floats are written with 17 significant digits so that a
file round-trips to the exact doubles; human tables use 4.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .diagnostics import ComparisonTable, summarize_all, summarize_array
from .samplers import ChainOutput, effective_prior_events_draws

__all__ = [
    "fmt",
    "write_rows",
    "write_json",
    "write_chain_draws",
    "write_chain_summary",
    "write_informativeness",
    "write_comparison",
    "RunManifest",
    "file_digest",
    "verify_manifest",
]


def fmt(x, digits: int = 17) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), f".{digits}g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_rows(path, rows: Sequence[dict], digits: int = 17) -> None:
    rows = list(rows)
    header = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(row[k], digits) for k in header])


def _draw_columns(chain: ChainOutput) -> tuple[list[str], list[np.ndarray]]:
    names, cols = [], []
    for name in sorted(chain.draws):
        arr = chain.draws[name]
        if arr.ndim == 2:
            names.append(name)
            cols.append(arr.reshape(-1))
    for name in ("beta",):
        if name in chain.draws:
            arr = chain.draws[name]
            for j in range(arr.shape[2]):
                names.append(f"beta[{j}]")
                cols.append(arr[:, :, j].reshape(-1))
    for name in ("lambda", "z"):
        if name in chain.draws:
            arr = chain.draws[name]
            for i, rid in enumerate(chain.region_ids):
                names.append(f"{name}[{rid}]")
                cols.append(arr[:, :, i].reshape(-1))
    return names, cols


def write_chain_draws(path, chain: ChainOutput) -> None:
    """Wide CSV: ``chain,draw`` then one column per scalar / coefficient / region."""
    names, cols = _draw_columns(chain)
    chains, draws = chain.n_chains, chain.n_draws
    idx_c = np.repeat(np.arange(chains), draws)
    idx_d = np.tile(np.arange(draws), chains)
    mat = np.column_stack(cols) if cols else np.empty((chains * draws, 0))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(["chain", "draw", *names]) + "\n")
        for r in range(chains * draws):
            fh.write(f"{idx_c[r]},{idx_d[r]}," + ",".join(format(v, ".17g") for v in mat[r]) + "\n")


def write_chain_summary(outdir, chain: ChainOutput) -> list[dict]:
    outdir = Path(outdir)
    rows = []
    for s in summarize_all(chain):
        d = {"parameter": s.name, "mean": s.mean, "sd": s.sd}
        d.update(s.to_dict()["quantiles"])
        d.update({"ess": s.ess, "chains": s.chains, "draws": s.draws})
        rows.append(d)
    write_rows(outdir / "summary.csv", rows)
    write_json(
        outdir / "summary.json",
        {
            "model": chain.model,
            "region_ids": list(chain.region_ids),
            "islands": list(chain.islands),
            "config": chain.config.to_dict(),
            "restriction": chain.restriction.to_dict() if chain.restriction else None,
            "fixed": dict(chain.fixed),
            "acceptance": {k: np.asarray(v).tolist() for k, v in chain.acceptance.items()},
            "parameters": rows,
        },
    )
    return rows


def write_informativeness(outdir, chain: ChainOutput, m0: int | None = None) -> dict:
    info = effective_prior_events_draws(chain, m0)
    s = summarize_array("informativeness", info)
    d = {
        "model": chain.model,
        "m0": int(m0 or chain.m0 or 3) if chain.model == "bym" else None,
        "restriction": chain.restriction.to_dict() if chain.restriction else None,
        "median": s.median,
        "lower95": s.interval95[0],
        "upper95": s.interval95[1],
        "mean": s.mean,
        "sd": s.sd,
        "ess": s.ess,
        "max": float(info.max()),
        "min": float(info.min()),
    }
    write_json(Path(outdir) / "informativeness.json", d)
    return d


def write_comparison(outdir, table: ComparisonTable, prefix: str = "comparison") -> None:
    outdir = Path(outdir)
    write_rows(outdir / f"{prefix}_informativeness.csv", table.informativeness_rows())
    write_rows(outdir / f"{prefix}_regions.csv", table.region_rows())
    write_rows(outdir / f"{prefix}_regions_table.csv", table.region_rows(), digits=4)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: list[str]
    inputs: dict[str, str] = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int | None = None
    version: str = __version__
    outputs: dict[str, str] = field(default_factory=dict)

    @classmethod
    def build(cls, command: Sequence[str], inputs: Iterable, config: dict, seed: int | None):
        return cls(
            command=list(command),
            inputs={os.fspath(p): file_digest(p) for p in inputs},
            config=config,
            seed=seed,
        )

    def record_outputs(self, outdir) -> None:
        outdir = Path(outdir)
        self.outputs = {
            p.name: file_digest(p) for p in sorted(outdir.iterdir()) if p.is_file() and p.name != "manifest.json"
        }

    def write(self, outdir) -> Path:
        path = Path(outdir) / "manifest.json"
        write_json(path, asdict(self))
        return path


def verify_manifest(path) -> list[str]:
    """Paths whose current digest differs from the one recorded (empty when all match)."""
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    bad = [p for p, d in m.get("inputs", {}).items() if not os.path.exists(p) or file_digest(p) != d]
    base = Path(path).parent
    bad += [p for p, d in m.get("outputs", {}).items() if not (base / p).exists() or file_digest(base / p) != d]
    return bad
