"""CSV / JSON emission of run records and tables."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .harness import RunRecord

SCHEMA = "gpcflock.runrecord/1"


class OutputError(OSError):
    pass


def _fmt(value) -> str:
    # repr round-trips doubles exactly and keeps reruns byte-identical
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def record_columns(record: RunRecord) -> list[str]:
    cols = ["t"]
    agents = [(i, k) for i in range(record.N) for k in range(record.d)]
    cols += [f"vbar_{i}_{k}" for i, k in agents]
    cols += [f"var_{i}_{k}" for i, k in agents]
    cols += [f"x_{i}_{k}" for i, k in agents]
    modes = [(k, h) for k in range(record.d) for h in range(record.M + 1)]
    cols += [f"V_{k}_{h}" for k, h in modes]
    if record.u is not None:
        cols += [f"u_{k}_{h}" for k, h in modes]
    if record.drift is not None:
        cols.append("mean_drift")
    cols.append("diverged")
    return cols


def record_rows(record: RunRecord):
    S = len(record.times)
    for s in range(S):
        row = [record.times[s]]
        row += list(record.vbar[s].ravel())
        row += list(record.variance[s].ravel())
        row += list(record.xbar[s].ravel())
        row += list(record.Vhat[s].ravel())
        if record.u is not None:
            row += list(record.u[s].ravel())
        if record.drift is not None:
            row.append(record.drift[s])
        row.append(bool(record.diverged[s]))
        yield row


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_table(path: str | Path, columns: list[str], rows) -> Path:
    """Write a CSV with a header row; every value formatted losslessly."""
    path = Path(path)
    with _open(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    return path


def write_record_csv(record: RunRecord, path: str | Path) -> Path:
    return write_table(path, record_columns(record), record_rows(record))


def record_to_json(record: RunRecord) -> dict:
    def arr(a):
        return None if a is None else {"shape": list(a.shape), "data": a.ravel().tolist()}

    return {
        "schema": SCHEMA,
        "config": record.config,
        "N": record.N,
        "d": record.d,
        "M": record.M,
        "aborted": record.aborted,
        "abort_time": record.abort_time,
        "times": arr(record.times),
        "vbar": arr(record.vbar),
        "variance": arr(record.variance),
        "xbar": arr(record.xbar),
        "Vhat": arr(record.Vhat),
        "u": arr(record.u),
        "drift": arr(record.drift),
        "diverged": arr(record.diverged),
    }


def record_from_json(data: dict) -> RunRecord:
    if data.get("schema") != SCHEMA:
        raise ValueError(f"unsupported schema {data.get('schema')!r}, expected {SCHEMA}")

    def arr(entry, dtype=float):
        if entry is None:
            return None
        return np.array(entry["data"], dtype=dtype).reshape(entry["shape"])

    return RunRecord(
        config=data["config"],
        N=data["N"],
        d=data["d"],
        M=data["M"],
        times=arr(data["times"]),
        vbar=arr(data["vbar"]),
        variance=arr(data["variance"]),
        xbar=arr(data["xbar"]),
        Vhat=arr(data["Vhat"]),
        diverged=arr(data["diverged"], bool),
        u=arr(data["u"]),
        drift=arr(data["drift"]),
        aborted=data["aborted"],
        abort_time=data["abort_time"],
    )


def write_record_json(record: RunRecord, path: str | Path) -> Path:
    path = Path(path)
    with _open(path) as fh:
        json.dump(record_to_json(record), fh, indent=1)
        fh.write("\n")
    return path


def load_record_json(path: str | Path) -> RunRecord:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return record_from_json(data)


def emit(record: RunRecord, path: str | Path, format: str = "csv") -> Path:
    """Write ``record`` to ``path`` (suffix added when missing)."""
    path = Path(path)
    if format not in ("csv", "json"):
        raise ValueError("format must be csv or json")
    if path.suffix != f".{format}":
        path = path.with_name(path.name + f".{format}")
    if format == "csv":
        return write_record_csv(record, path)
    return write_record_json(record, path)


def emit_table(columns: list[str], rows, path: str | Path, format: str = "csv") -> Path:
    """Write a plain table as CSV, or as JSON ``{"columns", "rows"}``."""
    path = Path(path)
    if path.suffix != f".{format}":
        path = path.with_name(path.name + f".{format}")
    if format == "csv":
        return write_table(path, columns, rows)
    rows = [[v if isinstance(v, str) else (bool(v) if isinstance(v, (bool, np.bool_)) else float(v)) for v in r] for r in rows]
    with _open(path) as fh:
        json.dump({"schema": "gpcflock.table/1", "columns": columns, "rows": rows}, fh, indent=1)
        fh.write("\n")
    return path


def long_rows(record: RunRecord, label: str):
    """Plot-ready long format: (series, t, agent, dim, quantity, value).

    Agent-level quantities are ``vbar`` and ``variance``; ensemble quantities
    use agent -1 and name the mode, e.g. ``V_0`` and ``u_0``.
    """
    for s, t in enumerate(record.times):
        for i in range(record.N):
            for k in range(record.d):
                yield [label, t, i, k, "vbar", record.vbar[s, i, k]]
                yield [label, t, i, k, "variance", record.variance[s, i, k]]
        for k in range(record.d):
            for h in range(record.M + 1):
                yield [label, t, -1, k, f"V_{h}", record.Vhat[s, k, h]]
                if record.u is not None:
                    yield [label, t, -1, k, f"u_{h}", record.u[s, k, h]]


LONG_COLUMNS = ["series", "t", "agent", "dim", "quantity", "value"]
