"""Plain-text exports: sparse triplets, JSON records and flow CSV files.

Triplet files look like::

    # renormsb-triplet v1
    # shape 6 6
    # nnz 4
    0 0 1.0 0.0
    ...

one ``row col real imag`` line per nonzero entry, rows sorted, no duplicates.
A sidecar ``<file>.json`` holds the basis descriptor and grid hash.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

TRIPLET_HEADER = "# renormsb-triplet v1"


class FormatError(ValueError):
    """A file does not follow the documented schema."""


def write_triplets(path, matrix, meta: dict | None = None) -> Path:
    path = Path(path)
    m = sp.coo_matrix(matrix)
    m.sum_duplicates()
    order = np.lexsort((m.col, m.row))
    rows, cols, vals = m.row[order], m.col[order], m.data[order].astype(complex)
    keep = vals != 0
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    with path.open("w") as fh:
        fh.write(f"{TRIPLET_HEADER}\n# shape {m.shape[0]} {m.shape[1]}\n# nnz {rows.size}\n")
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{int(r)} {int(c)} {float(v.real)!r} {float(v.imag)!r}\n")
    side = {"shape": list(m.shape), "nnz": int(rows.size), "format": "renormsb-triplet v1"}
    side.update(meta or {})
    write_json(path.with_suffix(path.suffix + ".json"), side)
    return path


def read_triplets(path) -> tuple[sp.csr_matrix, dict]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != TRIPLET_HEADER:
        raise FormatError(f"{path}: missing triplet header")
    try:
        shape = tuple(int(x) for x in lines[1].split()[2:4])
        nnz = int(lines[2].split()[2])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed header") from exc
    body = [ln.split() for ln in lines[3:] if ln.strip()]
    if len(body) != nnz:
        raise FormatError(f"{path}: header says {nnz} entries, found {len(body)}")
    if nnz:
        arr = np.array(body, dtype=float)
        rows, cols = arr[:, 0].astype(int), arr[:, 1].astype(int)
        if len(set(zip(rows.tolist(), cols.tolist()))) != nnz:
            raise FormatError(f"{path}: duplicate entries")
        m = sp.csr_matrix((arr[:, 2] + 1j * arr[:, 3], (rows, cols)), shape=shape)
    else:
        m = sp.csr_matrix(shape, dtype=complex)
    side = path.with_suffix(path.suffix + ".json")
    meta = read_json(side) if side.exists() else {}
    return m, meta


def jsonable(obj):
    """Convert numpy scalars/arrays and complex numbers into JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


# column name -> (type, unit, description)
FLOW_COLUMNS = {
    "stage": (int, "-", "position in the cutoff list; -1 marks the cutoff-free limit"),
    "cutoff": (float, "momentum", "UV cutoff n (inf for the limit)"),
    "self_energy_magnitude": (float, "energy", "||omega^-1/2 v_n||^2"),
    "self_energy": (float, "energy", "-||omega^-1/2 v_n||^2"),
    "wavefunction_norm_sq": (float, "-", "||omega^-1 v_n||^2 = ||g_n||^2"),
    "log_dressed_vacuum_norm_sq": (float, "-", "log of the unnormalized dressed vacuum norm, ||B||^2 ||g_n||^2"),
    "vacuum_overlap_free": (float, "-", "exp(-||g_n||^2/2), overlap with the free vacuum"),
    "vacuum_overlap_prev": (float, "-", "exp(-||g_n - g_prev||^2/2)"),
    "vacuum_overlap_first": (float, "-", "exp(-||g_n - g_first||^2/2)"),
    "offdiag_chi": (float, "-", "largest |chi(lambda_i, lambda_j)| over distinct clusters"),
    "renorm_delta": (float, "energy", "max |Q_n - Q_prev| over probe elements (nan at the first stage)"),
    "limit_distance": (float, "energy", "max |Q_n - Q_limit| over probe elements"),
    "element_scale": (float, "energy", "max |Q_n| over probe elements"),
    "renorm_ground_energy": (float, "energy", "lowest generalized eigenvalue of (Q_n, G_n) on the probe space"),
    "gram_condition": (float, "-", "condition number of the probe-space Gram matrix"),
    "dressed_regular_reported": (int, "-", "1 when the dressed regular form met the truncation tolerance"),
    "identity_residual": (float, "energy", "max |F_n - Q_n| (nan when not reported)"),
    "identity_tail_bound": (float, "energy", "max element-wise truncation bound for F_n"),
    "work_N": (int, "-", "working particle cutoff for the dressed regular form"),
    "required_N": (int, "-", "smallest cutoff meeting the tolerance (-1 if not searched or not found)"),
}

PROBE_COLUMNS = {
    "stage": (int, "-", "as in the flow table"),
    "cutoff": (float, "momentum", "as in the flow table"),
    "row": (int, "-", "probe index (spin-major, Fock-minor)"),
    "col": (int, "-", "probe index"),
    "renorm_re": (float, "energy", "Re Q_n(row, col)"),
    "renorm_im": (float, "energy", "Im Q_n(row, col)"),
    "limit_re": (float, "energy", "Re Q_limit(row, col)"),
    "limit_im": (float, "energy", "Im Q_limit(row, col)"),
    "dressed_re": (float, "energy", "Re F_n(row, col) (nan when not reported)"),
    "dressed_im": (float, "energy", "Im F_n(row, col)"),
    "tail_bound": (float, "energy", "truncation bound for F_n(row, col)"),
}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, rows: list[dict], columns: dict) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(columns))
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])
    return path


def read_csv(path, columns: dict) -> list[dict]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(columns):
            raise FormatError(f"{path}: columns {reader.fieldnames} do not match the schema")
        return [{c: columns[c][0](float(r[c])) if columns[c][0] is int else float(r[c]) for c in columns}
                for r in reader]


def schema_markdown(columns: dict) -> str:
    lines = ["| column | type | unit | meaning |", "|---|---|---|---|"]
    for name, (typ, unit, desc) in columns.items():
        lines.append(f"| `{name}` | {typ.__name__} | {unit} | {desc} |")
    return "\n".join(lines)
