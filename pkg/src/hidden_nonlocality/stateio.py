"""JSON state files.

Schema::

    {"dims": [dA, dB], "index_convention": "a*dB+b",
     "matrix": [[re, im], ...]}   # row-major, (dA*dB)^2 pairs

A single-party state (used for sigma_A / sigma_B) has ``"dims": [d]``.
Floats are written with ``repr`` precision, so a load/store round trip is
bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvalidState
from .qcore import BipartiteState, check_density_matrix

INDEX_CONVENTION = "a*dB+b"


def matrix_to_pairs(m: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(m, dtype=complex).ravel()]


def pairs_to_matrix(pairs, n: int) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.shape != (n * n, 2):
        raise DimensionMismatch(f"expected {n * n} [re, im] pairs, got array of shape {arr.shape}")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(n, n)


def state_to_dict(s: BipartiteState) -> dict:
    return {"dims": [s.dim_a, s.dim_b], "index_convention": INDEX_CONVENTION, "matrix": matrix_to_pairs(s.rho)}


def local_state_to_dict(rho: np.ndarray) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {"dims": [rho.shape[0]], "matrix": matrix_to_pairs(rho)}


def dumps_state(s: BipartiteState) -> str:
    return json.dumps(state_to_dict(s)) + "\n"


def _parse(obj: dict) -> tuple[list[int], np.ndarray]:
    if not isinstance(obj, dict) or "dims" not in obj or "matrix" not in obj:
        raise InvalidState("state file needs 'dims' and 'matrix' fields")
    dims = [int(d) for d in obj["dims"]]
    conv = obj.get("index_convention", INDEX_CONVENTION)
    if conv != INDEX_CONVENTION:
        raise InvalidState(f"unsupported index convention {conv!r}")
    return dims, pairs_to_matrix(obj["matrix"], int(np.prod(dims)))


def state_from_dict(obj: dict) -> BipartiteState:
    dims, m = _parse(obj)
    if len(dims) != 2:
        raise DimensionMismatch(f"bipartite state file needs two dims, got {dims}")
    return BipartiteState(m, dims[0], dims[1])


def local_state_from_dict(obj: dict) -> np.ndarray:
    dims, m = _parse(obj)
    if len(dims) != 1:
        raise DimensionMismatch(f"local state file needs one dim, got {dims}")
    return check_density_matrix(m, dims[0])


def load_state(path: str | Path) -> BipartiteState:
    return state_from_dict(json.loads(Path(path).read_text()))


def save_state(s: BipartiteState, path: str | Path) -> None:
    Path(path).write_text(dumps_state(s))


def load_local_state(path: str | Path) -> np.ndarray:
    return local_state_from_dict(json.loads(Path(path).read_text()))
