"""Serialization of models, reports, pools and traces.

All writers are deterministic: keys are sorted, floats use repr
round-tripping, and CSV field orders are fixed, so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from .costmodel import CostReport
from .designspace import ADCType, CandidateModel, LayerChoice, LayerShape
from .search import CandidatePool, PoolEntry


def model_to_dict(model: CandidateModel) -> dict:
    return {
        "input_channels": model.input_channels,
        "layers": [
            {
                "shape": {
                    "kernel": shape.kernel,
                    "in_h": shape.in_spatial[0],
                    "in_w": shape.in_spatial[1],
                    "stride": shape.stride,
                    "is_fc": shape.is_fc,
                },
                "choice": {
                    "cd_out": choice.cd_out,
                    "cs": choice.cs,
                    "at": choice.at.value,
                    "ap": choice.ap,
                    "ip": choice.ip,
                },
            }
            for shape, choice in model.layers
        ],
    }


def model_from_dict(raw: dict) -> CandidateModel:
    try:
        layers = []
        for entry in raw["layers"]:
            s = entry["shape"]
            c = entry["choice"]
            shape = LayerShape(kernel=int(s["kernel"]),
                               in_spatial=(int(s["in_h"]), int(s["in_w"])),
                               stride=int(s["stride"]),
                               is_fc=bool(s.get("is_fc", False)))
            choice = LayerChoice(cd_out=int(c["cd_out"]), cs=int(c["cs"]),
                                 at=ADCType(c["at"]), ap=int(c["ap"]),
                                 ip=int(c["ip"]))
            layers.append((shape, choice))
        return CandidateModel(layers=tuple(layers),
                              input_channels=int(raw["input_channels"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid model document: {exc}") from exc


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path: str | Path) -> CandidateModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    with open(path) as f:
        return model_from_dict(json.load(f))


def write_report(report: CostReport, json_path: Path, csv_path: Path) -> None:
    write_json(json_path, report.to_dict())
    rows = report.csv_rows()
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})


def pool_entry_to_dict(entry: PoolEntry) -> dict:
    return {
        "model": model_to_dict(entry.model),
        "step": entry.step,
        "admitted": entry.admitted,
        "hd_score": entry.hd_score,
        "area_mm2": entry.report.area,
        "delay_ns": entry.report.delay,
        "energy_pJ": entry.report.energy,
        "edap_mJ_ms_mm2": entry.report.edap,
        "psi": entry.report.psi,
    }


def write_pool(pool: CandidatePool, path: Path,
               selected_key: tuple | None = None) -> None:
    payload = {
        "entries": [pool_entry_to_dict(e) for e in pool.entries],
        "admitted_count": len(pool.admitted()),
        "selected": list(map(list, selected_key)) if selected_key else None,
    }
    write_json(path, payload)


def write_trace(rows: list[dict], path: Path) -> None:
    if not rows:
        with open(path, "w", newline="") as f:
            f.write("")
        return
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v)
                             for k, v in row.items()})


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
