import csv
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..models.analysis import DecayFit
from ..models.grid import PlanarState
from ..models.metric import AssumptionReport

SNAPSHOT_MAGIC = b"CLSNAP01"

PathLike = Union[str, Path]


def local_column(a: float) -> str:
    return f"E_local[a={a!r}]"


def trace_header(a_values: Sequence[float]) -> List[str]:
    """t, E_total, 每个 a 一列 E_local, W_exp, front_outside"""
    return ["t", "E_total"] + [local_column(float(a)) for a in a_values] + ["W_exp", "front_outside"]


def _cell(value) -> str:
    # repr 保证浮点数读回后逐位相同
    return "" if value is None else repr(float(value))


def write_trace(path: PathLike, a_values: Sequence[float], rows: Sequence[Dict]) -> Path:
    """每个采样时刻一行；不写任何墙钟时间"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = trace_header(a_values)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(row.get(column)) for column in header])
    return path


def read_trace(path: PathLike) -> Dict[str, np.ndarray]:
    """读回轨迹 CSV，空单元记为 NaN"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        columns: Dict[str, List[float]] = {name: [] for name in header}
        for record in reader:
            for name, cell in zip(header, record):
                columns[name].append(float(cell) if cell != "" else float("nan"))
    return {name: np.array(values, dtype=float) for name, values in columns.items()}


def trace_local_radii(trace: Dict[str, np.ndarray]) -> List[float]:
    radii = []
    for name in trace:
        if name.startswith("E_local[a=") and name.endswith("]"):
            radii.append(float(name[len("E_local[a="):-1]))
    return radii


def write_fits(path: PathLike, fits: Sequence[Tuple[float, DecayFit]]) -> Path:
    """每个观测半径一行 DecayFit"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["a"] + DecayFit.CSV_HEADER)
        for a, fit in fits:
            writer.writerow([repr(float(a))] + fit.to_csv_row())
    return path


def write_assumption_records(path: PathLike, reports: Sequence[AssumptionReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines: List[str] = []
    for report in reports:
        lines.extend(report.to_record_lines())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_snapshot(path: PathLike, state: PlanarState) -> Path:
    """二进制快照：魔数、int64 (n_r+1, n_θ)、float64 t，随后按行优先的 u 与 v"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows, cols = state.u.shape
    with open(path, "wb") as f:
        f.write(SNAPSHOT_MAGIC)
        f.write(np.array([rows, cols], dtype="<i8").tobytes())
        f.write(np.array([state.t], dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(state.u, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(state.v, dtype="<f8").tobytes())
    return path


def read_snapshot(path: PathLike) -> Tuple[float, np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:8] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot file")
    rows, cols = np.frombuffer(raw, dtype="<i8", count=2, offset=8)
    t = float(np.frombuffer(raw, dtype="<f8", count=1, offset=24)[0])
    size = int(rows * cols)
    u = np.frombuffer(raw, dtype="<f8", count=size, offset=32).reshape(rows, cols)
    v = np.frombuffer(raw, dtype="<f8", count=size, offset=32 + 8 * size).reshape(rows, cols)
    return t, u.copy(), v.copy()
