"""Plain-text configs, CSV exports and the binary matrix dump."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .spacetime import LatticeSpacetime, MetricPerturbation, make_cylinder, smooth_bump

# little-endian: Nx, Nt as int64 then dx, dt as float64
_HEADER = struct.Struct("<qqdd")


def parse_config(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; keys are case-sensitive."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def get_float(cfg: dict[str, str], key: str, default: float) -> float:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be a number, got {cfg[key]!r}") from exc


def get_int(cfg: dict[str, str], key: str, default: int) -> int:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key} must be an integer, got {cfg[key]!r}") from exc


def get_int_list(cfg: dict[str, str], key: str, default: list[int]) -> list[int]:
    if key not in cfg:
        return list(default)
    try:
        return [int(v) for v in cfg[key].split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{key} must be a comma-separated list of integers") from exc


def spacetime_from_config(cfg: dict[str, str]) -> LatticeSpacetime:
    """Grid keys ``Nx, Nt, dx, dt`` and ``metric`` (``flat`` or ``conformal``).

    A conformal metric uses ``omega = 1 + metric_amplitude * sin(2 pi x / L)
    * sin(pi t / T)``.
    """
    Nx = get_int(cfg, "Nx", 32)
    Nt = get_int(cfg, "Nt", 64)
    dx = get_float(cfg, "dx", 0.1)
    dt = get_float(cfg, "dt", 0.05)
    kind = cfg.get("metric", "flat")
    if kind == "flat":
        spec = "flat"
    elif kind == "conformal":
        amp = get_float(cfg, "metric_amplitude", 0.1)
        L, T = Nx * dx, (Nt - 1) * dt
        spec = ("conformal", lambda t, x: 1.0 + amp * np.sin(2 * np.pi * x / L) * np.sin(np.pi * t / T))
    else:
        raise ConfigError(f"unknown metric kind {kind!r}")
    try:
        return make_cylinder(Nx, Nt, dx, dt, spec)
    except Exception as exc:  # signature or CFL problems
        raise ConfigError(f"invalid grid: {exc}") from exc


def perturbation_from_config(cfg: dict[str, str], M: LatticeSpacetime) -> MetricPerturbation | None:
    """``patch = t0, x0, half_t, half_x, htt, htx, hxx`` (several separated by ``;``)."""
    if "patch" not in cfg:
        return None
    h = np.zeros(M.shape + (2, 2))
    for chunk in cfg["patch"].split(";"):
        try:
            t0, x0, ht, hx, a, b, c = (float(v) for v in chunk.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad patch {chunk!r}: need 7 numbers") from exc
        bump = smooth_bump(M, t0, x0, ht, hx)
        h[..., 0, 0] += a * bump
        h[..., 0, 1] += b * bump
        h[..., 1, 0] += b * bump
        h[..., 1, 1] += c * bump
    return MetricPerturbation(h)


# --------------------------------------------------------------------------
# exports


def write_region_csv(path: str | Path, region: np.ndarray) -> None:
    """0/1 grid, one time slice per row."""
    np.savetxt(path, np.asarray(region, dtype=int), fmt="%d", delimiter=",")


def read_region_csv(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=int, ndmin=2).astype(bool)


def write_coo_csv(path: str | Path, A) -> None:
    """Sparse or dense matrix as ``row,col,value`` lines of its nonzeros."""
    coo = sp.coo_matrix(A)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "value"])
        for k in order:
            w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])


def dump_matrix(path: str | Path, A: np.ndarray, M: LatticeSpacetime) -> None:
    """Header ``(Nx, Nt, dx, dt)`` then the matrix as row-major float64."""
    A = np.ascontiguousarray(A, dtype="<f8")
    if A.shape != (M.size, M.size):
        raise ValueError("matrix does not match the grid")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(M.Nx, M.Nt, M.dx, M.dt))
        fh.write(A.tobytes(order="C"))


def load_matrix(path: str | Path) -> tuple[np.ndarray, tuple[int, int, float, float]]:
    data = Path(path).read_bytes()
    Nx, Nt, dx, dt = _HEADER.unpack_from(data)
    n = Nx * Nt
    A = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if A.size != n * n:
        raise ValueError("file size does not match its header")
    return A.reshape(n, n).copy(), (Nx, Nt, dx, dt)
