"""
File formats.

Time-tag files: ``SPDCTT1\\n`` magic, little-endian u32 header length, a UTF-8
JSON header, then packed records of (channel: u8, time_ps: u64 LE).
Channel 0 is the signal detector, channel 1 the idler detector.

Scans: CSV with '#'-prefixed metadata lines, one header row and '.' decimals,
plus a JSON sidecar holding the full metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .montecarlo import TimeTagStream
from .polarization import BiphotonState
from .spectral import ScanResult

MAGIC = b"SPDCTT1\n"
RECORD = np.dtype([("channel", "u1"), ("time_ps", "<u8")])
CHANNELS = {"signal": 0, "idler": 1}


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indent, trailing newline)."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, default=_default) + "\n"


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj) -> Path:
    p = Path(path)
    p.write_text(dumps(obj), encoding="utf-8")
    return p


def write_timetags(path, streams: tuple[TimeTagStream, TimeTagStream], config_hash: str = "") -> Path:
    s, i = streams
    if s.duration != i.duration or s.seed != i.seed:
        raise ValueError("streams come from different runs")
    header = json.dumps(
        {"duration_s": s.duration, "seed": s.seed, "config_hash": config_hash,
         "channels": CHANNELS, "n_gates": i.n_gates},
        sort_keys=True,
    ).encode("utf-8")
    rec = np.empty(len(s) + len(i), dtype=RECORD)
    rec["channel"][: len(s)] = CHANNELS["signal"]
    rec["channel"][len(s):] = CHANNELS["idler"]
    rec["time_ps"][: len(s)] = s.tags
    rec["time_ps"][len(s):] = i.tags
    # time-ordered, signal before idler on ties
    rec = rec[np.lexsort((rec["channel"], rec["time_ps"]))]
    p = Path(path)
    with open(p, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(rec.tobytes())
    return p


def read_timetags(path) -> tuple[tuple[TimeTagStream, TimeTagStream], dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path} is not a time-tag file")
    off = len(MAGIC)
    (n,) = struct.unpack_from("<I", data, off)
    off += 4
    header = json.loads(data[off : off + n].decode("utf-8"))
    off += n
    if (len(data) - off) % RECORD.itemsize:
        raise ValueError(f"{path} has a truncated record block")
    rec = np.frombuffer(data, dtype=RECORD, offset=off)
    t = rec["time_ps"].astype(np.int64)
    ch = rec["channel"]
    dur, seed = header["duration_s"], header["seed"]
    streams = (
        TimeTagStream("signal", t[ch == CHANNELS["signal"]], dur, seed),
        TimeTagStream("idler", t[ch == CHANNELS["idler"]], dur, seed, n_gates=header.get("n_gates", 0)),
    )
    return streams, header


def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(path, columns: dict[str, list], units: dict[str, str], meta: dict) -> Path:
    """Write named columns; ``meta`` becomes '#'-prefixed ``key=value`` lines."""
    names = list(columns)
    n = len(next(iter(columns.values()))) if columns else 0
    lines = [f"# {k}={meta[k]}" for k in sorted(meta)]
    lines.append("# units: " + ",".join(f"{c}[{units.get(c, '')}]" for c in names))
    lines.append(",".join(names))
    for r in range(n):
        row = []
        for c in names:
            v = columns[c][r]
            if isinstance(v, str):
                row.append(v.replace(",", ";").replace("\n", " "))
            elif v is None or (isinstance(v, float) and not np.isfinite(v)):
                row.append("nan" if v is not None else "")
            else:
                row.append(_fmt(v))
        lines.append(",".join(row))
    p = Path(path)
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


def read_csv(path) -> tuple[dict[str, list], dict[str, str]]:
    meta = {}
    header = None
    cols: dict[str, list] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and not body.startswith("units:"):
                k, _, v = body.partition("=")
                meta[k.strip()] = v.strip()
            continue
        if header is None:
            header = line.split(",")
            cols = {h: [] for h in header}
            continue
        for h, v in zip(header, line.split(",")):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(v)
    return cols, meta


def write_scan(path, scan: ScanResult, config_hash: str = "", seed: int | None = None) -> tuple[Path, Path]:
    """CSV plus ``<name>.json`` sidecar."""
    p = Path(path)
    m = scan.metadata
    su, vu = m.get("setting_unit", ""), m.get("value_unit", "")
    meta = {"config_hash": config_hash, "seed": seed if seed is not None else m.get("seed", ""),
            "kind": m.get("kind", "")}
    csv_path = write_csv(
        p,
        {"setting": scan.settings.tolist(), "value": scan.values.tolist(), "uncertainty": scan.uncertainties.tolist()},
        {"setting": su, "value": vu, "uncertainty": vu},
        meta,
    )
    side = write_json(p.with_suffix(".json"), {"config_hash": config_hash, "seed": meta["seed"], "metadata": m})
    return csv_path, side


def read_scan(path) -> ScanResult:
    p = Path(path)
    cols, _ = read_csv(p)
    side = p.with_suffix(".json")
    meta = json.loads(side.read_text(encoding="utf-8"))["metadata"] if side.exists() else {}
    return ScanResult(cols["setting"], cols["value"], cols["uncertainty"], meta)


def write_matrix(path, matrix: np.ndarray, header: dict) -> Path:
    """Whitespace-separated text matrix preceded by a one-line '# {json}' header."""
    p = Path(path)
    with open(p, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True, default=_default) + "\n")
        np.savetxt(fh, np.asarray(matrix, dtype=float), fmt="%.10e")
    return p


def read_matrix(path) -> tuple[np.ndarray, dict]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        header = json.loads(first[1:]) if first.startswith("#") else {}
        mat = np.loadtxt(fh, ndmin=2)
    return mat, header


def write_state(path, state: BiphotonState, meta: dict | None = None) -> Path:
    return write_json(path, {"density_matrix": state.to_json(), **(meta or {})})


def read_state(path) -> BiphotonState:
    return BiphotonState.from_json(json.loads(Path(path).read_text(encoding="utf-8"))["density_matrix"])
