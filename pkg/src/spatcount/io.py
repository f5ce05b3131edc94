"""Stable on-disk formats: dataset CSVs, chain draws, rasters, manifests.

All CSV files use '.' decimals, ',' separators, '\n' line endings,
UTF-8, and a mandatory header row.  Floats are written with repr so a
read-back reproduces the value bit for bit.

Two error families map to distinct exit codes in the CLI: a file that
is structurally not the expected schema (missing header, non-numeric
field, bad shape) raises FileFormatError, while a file that parses but
fails content validation (negative count, missing trap/occasion pair,
unknown id) raises DataError carrying row numbers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .mcmc import ChainOutput
from .model import CountData, DataError, MarkedObservations, TrapArray
from .posterior import DensityRaster

TRAPS_HEADER = ["trap_id", "x", "y"]
COUNTS_HEADER = ["trap_id", "occasion", "count"]
MARKED_HEADER = ["individual_id", "trap_id", "occasion", "count"]
TRUTH_HEADER = ["individual_id", "x", "y", "marked"]
CHAIN_HEADER = ["iteration", "sigma", "lambda0", "phi", "N", "D"]

MANIFEST_NAME = "manifest.json"
SUMMARY_NAME = "summary.csv"
RASTER_NAME = "raster.csv"


class FileFormatError(RuntimeError):
    """File is unreadable or structurally not the expected schema."""


def chain_filename(chain_id: int) -> str:
    return f"chain_{chain_id}.csv"


def centers_filename(chain_id: int) -> str:
    return f"centers_{chain_id}.npz"


def sha256_of(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _fmt(x: float) -> str:
    return repr(float(x))


def _open_read(path: str):
    return open(path, "r", encoding="utf-8", newline="")


def _open_write(path: str):
    return open(path, "w", encoding="utf-8", newline="")


def _reader(path: str, header: list):
    """Yield (row_number, row) after checking the header row."""
    with _open_read(path) as f:
        rows = csv.reader(f)
        try:
            first = next(rows)
        except StopIteration:
            raise FileFormatError(f"{path}: empty file, expected header "
                                  f"{','.join(header)}") from None
        if [c.strip() for c in first] != header:
            raise FileFormatError(
                f"{path}: bad header {first!r}, expected {','.join(header)}")
        for lineno, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FileFormatError(
                    f"{path}: row {lineno} has {len(row)} fields, "
                    f"expected {len(header)}")
            yield lineno, [c.strip() for c in row]


def _parse_float(path: str, lineno: int, field: str, raw: str) -> float:
    try:
        v = float(raw)
    except ValueError:
        raise FileFormatError(
            f"{path}: row {lineno}: {field} {raw!r} is not a number") from None
    if not math.isfinite(v):
        raise FileFormatError(f"{path}: row {lineno}: {field} must be finite")
    return v


def _parse_int(path: str, lineno: int, field: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise FileFormatError(
            f"{path}: row {lineno}: {field} {raw!r} is not an integer") from None


# ---------------------------------------------------------------------------
# dataset files


def write_traps_csv(path: str, traps: TrapArray, unit_scale: float = 1.0) -> None:
    """Trap coordinates in user units (model coords divided by unit_scale)."""
    with _open_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRAPS_HEADER)
        for i, (x, y) in enumerate(traps.coords):
            w.writerow([i, _fmt(x / unit_scale), _fmt(y / unit_scale)])


def read_traps_csv(path: str, unit_scale: float = 1.0):
    """Returns (TrapArray in model units, trap ids in file order)."""
    ids = []
    seen = {}
    coords = []
    for lineno, (tid, xs, ys) in _reader(path, TRAPS_HEADER):
        if tid in seen:
            raise DataError(f"{path}: row {lineno}: duplicate trap_id {tid!r} "
                            f"(first at row {seen[tid]})")
        seen[tid] = lineno
        ids.append(tid)
        coords.append((_parse_float(path, lineno, "x", xs) * unit_scale,
                       _parse_float(path, lineno, "y", ys) * unit_scale))
    if not coords:
        raise DataError(f"{path}: no traps")
    return TrapArray(np.array(coords, dtype=np.float64)), ids


def read_counts_csv(path: str, trap_ids: list) -> CountData:
    """Long-form counts; every trap/occasion pair must appear exactly once."""
    index = {tid: i for i, tid in enumerate(trap_ids)}
    R = len(trap_ids)
    cells = {}
    T = 0
    for lineno, (tid, occ_s, cnt_s) in _reader(path, COUNTS_HEADER):
        if tid not in index:
            raise DataError(f"{path}: row {lineno}: unknown trap_id {tid!r}")
        occ = _parse_int(path, lineno, "occasion", occ_s)
        if occ < 1:
            raise DataError(f"{path}: row {lineno}: occasion must be >= 1")
        cnt = _parse_int(path, lineno, "count", cnt_s)
        if cnt < 0:
            raise DataError(f"{path}: row {lineno}: negative count {cnt}")
        key = (index[tid], occ - 1)
        if key in cells:
            raise DataError(f"{path}: row {lineno}: duplicate entry for "
                            f"trap {tid!r} occasion {occ}")
        cells[key] = cnt
        T = max(T, occ)
    if T == 0:
        raise DataError(f"{path}: no count rows")
    missing = [(trap_ids[r], t + 1) for r in range(R) for t in range(T)
               if (r, t) not in cells]
    if missing:
        shown = ", ".join(f"trap {tid!r} occasion {occ}"
                          for tid, occ in missing[:5])
        more = "" if len(missing) <= 5 else f" (and {len(missing) - 5} more)"
        raise DataError(f"{path}: missing pairs: {shown}{more}")
    counts = np.zeros((R, T), dtype=np.int64)
    for (r, t), c in cells.items():
        counts[r, t] = c
    return CountData(counts)


def write_counts_csv(path: str, data: CountData, trap_ids=None) -> None:
    ids = trap_ids if trap_ids is not None else list(range(data.R))
    with _open_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(COUNTS_HEADER)
        for r in range(data.R):
            for t in range(data.T):
                w.writerow([ids[r], t + 1, int(data.counts[r, t])])


def read_marked_csv(path: str, trap_ids: list, T: int):
    """Full-grid marked histories; returns (MarkedObservations, ids)."""
    index = {tid: i for i, tid in enumerate(trap_ids)}
    R = len(trap_ids)
    order = []
    ind_index = {}
    cells = {}
    for lineno, (iid, tid, occ_s, cnt_s) in _reader(path, MARKED_HEADER):
        if tid not in index:
            raise DataError(f"{path}: row {lineno}: unknown trap_id {tid!r}")
        occ = _parse_int(path, lineno, "occasion", occ_s)
        if not 1 <= occ <= T:
            raise DataError(f"{path}: row {lineno}: occasion {occ} outside "
                            f"1..{T} of the counts file")
        cnt = _parse_int(path, lineno, "count", cnt_s)
        if cnt < 0:
            raise DataError(f"{path}: row {lineno}: negative count {cnt}")
        if iid not in ind_index:
            ind_index[iid] = len(order)
            order.append(iid)
        key = (ind_index[iid], index[tid], occ - 1)
        if key in cells:
            raise DataError(f"{path}: row {lineno}: duplicate entry for "
                            f"individual {iid!r} trap {tid!r} occasion {occ}")
        cells[key] = cnt
    if not order:
        raise DataError(f"{path}: no marked rows")
    m = len(order)
    if len(cells) != m * R * T:
        for i in range(m):
            for r in range(R):
                for t in range(T):
                    if (i, r, t) not in cells:
                        raise DataError(
                            f"{path}: missing entry for individual "
                            f"{order[i]!r} trap {trap_ids[r]!r} occasion {t + 1}")
    hist = np.zeros((m, R, T), dtype=np.int64)
    for (i, r, t), c in cells.items():
        hist[i, r, t] = c
    return MarkedObservations(hist), order


def write_marked_csv(path: str, marked: MarkedObservations,
                     trap_ids=None, individual_ids=None) -> None:
    h = marked.histories
    m, R, T = h.shape
    tids = trap_ids if trap_ids is not None else list(range(R))
    iids = individual_ids if individual_ids is not None else list(range(m))
    with _open_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MARKED_HEADER)
        for i in range(m):
            for r in range(R):
                for t in range(T):
                    w.writerow([iids[i], tids[r], t + 1, int(h[i, r, t])])


def write_truth_csv(path: str, centers: np.ndarray, marked_index: np.ndarray,
                    unit_scale: float = 1.0) -> None:
    flagged = set(int(i) for i in np.asarray(marked_index).ravel())
    with _open_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for i, (x, y) in enumerate(np.asarray(centers)):
            w.writerow([i, _fmt(x / unit_scale), _fmt(y / unit_scale),
                        1 if i in flagged else 0])


# ---------------------------------------------------------------------------
# run outputs


@dataclass(frozen=True)
class LoadedChain:
    """Chain draws read back from disk, summary-compatible."""

    iteration: np.ndarray
    sigma: np.ndarray
    lambda0: np.ndarray
    phi: np.ndarray
    N: np.ndarray
    D: np.ndarray
    centers_x: np.ndarray | None = None
    centers_y: np.ndarray | None = None
    centers_w: np.ndarray | None = None

    @property
    def n_kept(self) -> int:
        return self.sigma.size


def write_chain_csv(path: str, chain: ChainOutput,
                    burn_in: int, thin: int) -> None:
    with _open_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CHAIN_HEADER)
        for k in range(chain.n_kept):
            w.writerow([burn_in + thin * (k + 1),
                        _fmt(chain.sigma[k]), _fmt(chain.lambda0[k]),
                        _fmt(chain.phi[k]), int(chain.N[k]),
                        _fmt(chain.D[k])])


def read_chain_csv(path: str) -> LoadedChain:
    cols = {name: [] for name in CHAIN_HEADER}
    for lineno, row in _reader(path, CHAIN_HEADER):
        cols["iteration"].append(_parse_int(path, lineno, "iteration", row[0]))
        cols["sigma"].append(_parse_float(path, lineno, "sigma", row[1]))
        cols["lambda0"].append(_parse_float(path, lineno, "lambda0", row[2]))
        cols["phi"].append(_parse_float(path, lineno, "phi", row[3]))
        cols["N"].append(_parse_int(path, lineno, "N", row[4]))
        cols["D"].append(_parse_float(path, lineno, "D", row[5]))
    if not cols["sigma"]:
        raise FileFormatError(f"{path}: chain file holds no draws")
    return LoadedChain(
        iteration=np.array(cols["iteration"], dtype=np.int64),
        sigma=np.array(cols["sigma"]), lambda0=np.array(cols["lambda0"]),
        phi=np.array(cols["phi"]), N=np.array(cols["N"], dtype=np.int64),
        D=np.array(cols["D"]))


def write_centers_npz(path: str, chain: ChainOutput, burn_in: int) -> None:
    ns = chain.centers_x.shape[0]
    its = burn_in + chain.center_stride * (np.arange(ns, dtype=np.int64) + 1)
    with open(path, "wb") as f:
        np.savez(f, iteration=its, x=chain.centers_x, y=chain.centers_y,
                 w=chain.centers_w)


def read_centers_npz(path: str):
    """Returns (iteration, x, y, w) arrays of stored center snapshots."""
    try:
        with np.load(path) as z:
            return (z["iteration"].copy(), z["x"].copy(),
                    z["y"].copy(), z["w"].copy())
    except (OSError, KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: not a centers file ({exc})") from None


# ---------------------------------------------------------------------------
# summary, raster, manifest


def write_summary_csv(path: str, rows, include_rhat: bool) -> None:
    """Rows are ParameterSummary objects, written in the given order."""
    header = ["parameter", "mean", "sd", "mode", "q025", "q500", "q975"]
    if include_rhat:
        header.append("rhat")
    with _open_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            rec = [r.name, _fmt(r.mean), _fmt(r.sd), _fmt(r.mode),
                   _fmt(r.q025), _fmt(r.q500), _fmt(r.q975)]
            if include_rhat:
                rec.append("" if r.rhat is None else _fmt(r.rhat))
            w.writerow(rec)


def write_raster_csv(path: str, raster: DensityRaster,
                     units: str = "model") -> None:
    """Six header lines, then the grid from the top row (ymax) down."""
    with _open_write(path) as f:
        f.write(f"# origin,{_fmt(raster.x0)},{_fmt(raster.y0)}\n")
        f.write(f"# pixel,{_fmt(raster.pixel)}\n")
        f.write(f"# nx,{raster.nx}\n")
        f.write(f"# ny,{raster.ny}\n")
        f.write(f"# units,{units}\n")
        f.write(f"# draws,{raster.n_snapshots}\n")
        for iy in range(raster.ny - 1, -1, -1):
            f.write(",".join(_fmt(v) for v in raster.values[iy]) + "\n")


def read_raster_header(path: str) -> dict:
    """Parse the six-line raster header into a dict."""
    out = {}
    with _open_read(path) as f:
        for _ in range(6):
            line = f.readline().strip()
            if not line.startswith("# "):
                raise FileFormatError(f"{path}: missing raster header line")
            parts = line[2:].split(",")
            key = parts[0]
            vals = parts[1:]
            if key == "origin":
                out["x0"], out["y0"] = (float(v) for v in vals)
            elif key in ("pixel",):
                out[key] = float(vals[0])
            elif key in ("nx", "ny", "draws"):
                out[key] = int(vals[0])
            elif key == "units":
                out[key] = vals[0]
            else:
                raise FileFormatError(f"{path}: unknown raster header {key!r}")
    for key in ("x0", "pixel", "nx", "ny", "units", "draws"):
        if key not in out:
            raise FileFormatError(f"{path}: incomplete raster header")
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer, int)) and not isinstance(obj, bool):
        return int(obj)
    return obj


def write_manifest(path: str, manifest: dict) -> None:
    text = json.dumps(_jsonable(manifest), indent=2, sort_keys=True,
                      allow_nan=False)
    with _open_write(path) as f:
        f.write(text + "\n")


def read_manifest(path: str) -> dict:
    try:
        with _open_read(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: corrupt manifest ({exc})") from None
