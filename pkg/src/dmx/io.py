"""JSON model ingestion and CSV serialization.

CSV cells hold ``repr`` floats so files round-trip exactly; infinite errors
are written as the literal ``inf`` and empty cells mean "not applicable".
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .continuous import ContinuousDescriptorModel
from .discrete import Unbounded
from .errors import ContractViolation, DimensionMismatch
from .linalg import DEFAULT_TOL, ToleranceConfig
from .model import DiscreteDescriptorModel
from .scenarios import BUILTINS, Scenario

__all__ = [
    "ContinuousSpec",
    "load_model",
    "parse_model",
    "format_cell",
    "write_csv",
    "read_csv",
    "read_measurements",
    "read_directions",
    "CONTINUOUS_BUILTINS",
]


@dataclass(frozen=True)
class ContinuousSpec:
    """A continuous model together with its sampled output."""

    name: str
    model: ContinuousDescriptorModel
    y: np.ndarray


def scalar_riccati(tol: ToleranceConfig = DEFAULT_TOL) -> ContinuousSpec:
    """``x' = f``, ``y = x + eta`` on ``[0, 2]``; K is ``tanh(t)`` in the dual convention."""
    grid = np.linspace(0.0, 2.0, 21)
    model = ContinuousDescriptorModel(F=[[1.0]], grid=grid, C_samples=[[0.0]],
                                      H_samples=[[1.0]], Q_samples=[[1.0]],
                                      R_samples=[[1.0]], tol=tol)
    return ContinuousSpec("scalar-riccati", model, np.sin(grid)[:, None])


def descriptor_riccati(tol: ToleranceConfig = DEFAULT_TOL) -> ContinuousSpec:
    """Three states, one algebraic equation, time-varying coupling on ``[0, 1]``."""
    grid = np.linspace(0.0, 1.0, 11)
    C = np.array([[[-0.5, 1.0, 0.2 * np.cos(t)],
                   [-1.0, -0.3, 0.4],
                   [0.3, 0.1 * t, 1.5]] for t in grid])
    H = np.array([[[1.0, 0.0, 0.5], [0.0, 0.7, -0.4]]] * grid.size)
    Q = np.array([[2.0, 0.2, 0.1], [0.2, 1.5, 0.0], [0.1, 0.0, 1.0]])
    R = np.diag([4.0, 2.0])
    y = np.column_stack([np.sin(3 * grid), np.cos(2 * grid)])
    model = ContinuousDescriptorModel(F=np.diag([1.0, 1.0, 0.0]), grid=grid, C_samples=C,
                                      H_samples=H, Q_samples=Q, R_samples=R, tol=tol)
    return ContinuousSpec("descriptor-riccati", model, y)


CONTINUOUS_BUILTINS = {"scalar-riccati": scalar_riccati,
                       "descriptor-riccati": descriptor_riccati}


def _matrix_seq(doc, key, count, shape, required=True):
    if key not in doc:
        if required:
            raise ContractViolation(f"model is missing field {key!r}")
        return None
    try:
        a = np.asarray(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ContractViolation(f"field {key!r} is not a numeric array") from exc
    if a.shape == shape:
        a = np.broadcast_to(a, (count,) + shape)
    elif a.size == 0 and count == 0:
        a = a.reshape((0,) + shape)
    if a.shape != (count,) + shape:
        raise DimensionMismatch(f"field {key!r} has shape {a.shape}, expected {shape} "
                                f"or {(count,) + shape}")
    return np.array(a)


def _int_field(doc, key):
    value = doc.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 0:
        raise ContractViolation(f"field {key!r} must be a non-negative integer, got {value!r}")
    return value


def _builtin(name, horizon, tol):
    if name in BUILTINS:
        scenario = BUILTINS[name](N=horizon) if horizon is not None else BUILTINS[name]()
        if tol != scenario.model.tol:
            m = scenario.model
            model = DiscreteDescriptorModel(F=m.F, C=m.C, H=m.H, S=m.S, S_seq=m.S_seq,
                                            R_seq=m.R_seq, tol=tol)
            scenario = Scenario(scenario.name, model, scenario.free, scenario.q)
        return scenario
    if name in CONTINUOUS_BUILTINS:
        return CONTINUOUS_BUILTINS[name](tol)
    known = ", ".join(sorted(list(BUILTINS) + list(CONTINUOUS_BUILTINS)))
    raise ContractViolation(f"unknown builtin {name!r} (known: {known})")


def parse_model(doc, horizon: Optional[int] = None, tol: ToleranceConfig = DEFAULT_TOL,
                name: str = "model"):
    """Build a :class:`Scenario` or :class:`ContinuousSpec` from a JSON document.

    Discrete documents carry ``n, m, p, N`` and ``F, C, H, S, S_seq, R_seq``;
    each sequence may be given as one matrix, which is repeated. Optional
    ``q`` fixes the initial condition and ``free`` the free-coordinate
    schedule. ``{"builtin": NAME}`` selects a built-in scenario.
    Continuous documents have ``"kind": "continuous"`` and carry ``F, grid,
    C, H, Q, R`` and optionally the sampled output ``y``.
    """
    if not isinstance(doc, dict):
        raise ContractViolation("model document must be a JSON object")
    if "builtin" in doc:
        if horizon is None and "N" in doc:
            horizon = _int_field(doc, "N")
        return _builtin(doc["builtin"], horizon, tol)
    if doc.get("kind") == "continuous":
        return _parse_continuous(doc, tol, name)
    if doc.get("kind", "discrete") != "discrete":
        raise ContractViolation(f"unknown model kind {doc.get('kind')!r}")
    n, m, p, N = (_int_field(doc, key) for key in ("n", "m", "p", "N"))
    model = DiscreteDescriptorModel(
        F=_matrix_seq(doc, "F", N + 1, (m, n)),
        C=_matrix_seq(doc, "C", N, (m, n)),
        H=_matrix_seq(doc, "H", N + 1, (p, n)),
        S=_matrix_seq(doc, "S", 1, (m, m))[0],
        S_seq=_matrix_seq(doc, "S_seq", N, (m, m)),
        R_seq=_matrix_seq(doc, "R_seq", N + 1, (p, p)),
        tol=tol,
    )
    q = doc.get("q")
    if q is not None:
        q = np.asarray(q, dtype=float).reshape(-1)
        if q.shape != (m,):
            raise DimensionMismatch(f"q must have length {m}")
    free = doc.get("free")
    if free is not None:
        if not isinstance(free, list) or len(free) != N + 1:
            raise ContractViolation(f"free must be a list of {N + 1} coordinate lists")
        free = [np.asarray(c, dtype=float).reshape(-1) for c in free]
    if horizon is not None:
        model = model.truncated(horizon)
        free = free[:horizon + 1] if free is not None else None
    return Scenario(name, model, free=free, q=q)


def _parse_continuous(doc, tol, name):
    if "grid" not in doc:
        raise ContractViolation("continuous model is missing field 'grid'")
    grid = np.asarray(doc["grid"], dtype=float).reshape(-1)
    F = np.asarray(doc.get("F"), dtype=float)
    if F.ndim != 2:
        raise ContractViolation("continuous model needs a 2-D matrix 'F'")
    m, n = F.shape
    H = np.asarray(doc.get("H"), dtype=float)
    if H.ndim not in (2, 3):
        raise ContractViolation("continuous model needs 'H' as a matrix or a sequence")
    p = H.shape[-2]
    count = grid.size
    model = ContinuousDescriptorModel(
        F=F, grid=grid,
        C_samples=_matrix_seq(doc, "C", count, (m, n)),
        H_samples=_matrix_seq(doc, "H", count, (p, n)),
        Q_samples=_matrix_seq(doc, "Q", count, (m, m)),
        R_samples=_matrix_seq(doc, "R", count, (p, p)),
        tol=tol,
    )
    y = np.zeros((count, p))
    if "y" in doc:
        y = np.asarray(doc["y"], dtype=float)
        if y.ndim == 1 and p == 1:
            y = y[:, None]
        if y.shape != (count, p):
            raise DimensionMismatch(f"y has shape {y.shape}, expected {(count, p)}")
    return ContinuousSpec(name, model, y)


def load_model(source: str, horizon: Optional[int] = None,
               tol: ToleranceConfig = DEFAULT_TOL):
    """Load ``builtin:NAME`` or a JSON file path."""
    if source.startswith("builtin:"):
        return _builtin(source[len("builtin:"):], horizon, tol)
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ContractViolation(f"cannot read model file {source!r}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"malformed JSON in {source!r}: {exc}") from exc
    return parse_model(doc, horizon, tol, name=path.stem)


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, Unbounded):
        return "inf"
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not np.isfinite(value):
        raise ContractViolation("non-finite float cannot be written to CSV")
    return repr(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def read_csv(path):
    """Header and rows of a CSV file, cells as strings."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ContractViolation(f"cannot read {path!r}: {exc}") from exc
    if not rows:
        raise ContractViolation(f"{path!r} is empty")
    return rows[0], rows[1:]


def _columns(header, rows, prefix, count, path):
    names = [f"{prefix}{i}" for i in range(1, count + 1)]
    missing = [c for c in names if c not in header]
    if missing:
        return None if len(missing) == count else _fail_missing(path, missing)
    idx = [header.index(c) for c in names]
    try:
        return np.array([[float(row[i]) for i in idx] for row in rows]).reshape(len(rows), count)
    except (ValueError, IndexError) as exc:
        raise ContractViolation(f"bad numeric cell in {path!r}: {exc}") from exc


def _fail_missing(path, missing):
    raise DimensionMismatch(f"{path!r} lacks columns {', '.join(missing)}")


def read_measurements(path, model: DiscreteDescriptorModel):
    """Measurements ``y`` from a CSV with columns ``y1..yp``.

    If the file also has ``x1..xn`` (a trajectory written by ``simulate``),
    the true states are returned as well, otherwise ``None``.
    """
    header, rows = read_csv(path)
    if len(rows) != model.N + 1:
        raise DimensionMismatch(f"{path!r} has {len(rows)} rows, model needs {model.N + 1}")
    y = _columns(header, rows, "y", model.p, path)
    if y is None:
        raise DimensionMismatch(f"{path!r} has no y1..y{model.p} columns")
    x = _columns(header, rows, "x", model.n, path)
    return y, x


def read_directions(path, n: int) -> List[np.ndarray]:
    """One direction per non-empty line, entries separated by commas or spaces."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ContractViolation(f"cannot read directions file {path!r}: {exc}") from exc
    out = []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            vec = np.array([float(tok) for tok in line.replace(",", " ").split()])
        except ValueError as exc:
            raise ContractViolation(f"{path}:{lineno}: not a numeric vector") from exc
        if vec.shape != (n,):
            raise DimensionMismatch(f"{path}:{lineno}: direction has length {vec.size}, "
                                    f"expected {n}")
        out.append(vec)
    if not out:
        raise ContractViolation(f"no directions in {path!r}")
    return out
