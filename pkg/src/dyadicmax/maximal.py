"""The generalized maximal operator and its truncations.

For a family of nonnegative coefficient functions, one per cube, the
operator collects at every atom x the terms |integral of f over Q| * a_Q(x)
across all cubes Q containing x, and combines them in little-ell-q: a sum of
q-th powers for finite q, a sup for q = inf.  Cube truncation keeps only the
subcubes of a fixed Q; depth truncation discards the top levels of the
forest.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .lattice import MU, DyadicModel, as_leaf_function

__all__ = [
    "CoefficientFamily",
    "MaximalOutput",
    "apply_maximal",
    "apply_truncated",
    "apply_depth_truncated",
    "classical_coefficients",
    "node_integrals",
    "read_coefficients",
    "write_coefficients",
]


class CoefficientFamily:
    """One nonnegative coefficient per cube: a scalar, or a value per atom.

    A scalar entry c means a_Q = c on every atom below Q; a vector entry
    resolves a_Q atom by atom (in the model's leaf order restricted to Q).
    Either way a_Q vanishes off Q, which the evaluation enforces by only
    writing to Q's leaf slice.
    """

    def __init__(self, model: DyadicModel, entries: Sequence[Union[float, np.ndarray]]):
        if len(entries) != model.n_nodes:
            raise ValueError(
                f"coefficient missing: {len(entries)} entries for {model.n_nodes} nodes"
            )
        self.model = model
        checked = []
        for k, entry in enumerate(entries):
            if np.ndim(entry) == 0:
                val = float(entry)
                if not (val >= 0 and math.isfinite(val)):
                    raise ValueError(f"coefficient for {model.ids[k]!r} must be finite >= 0")
                checked.append(val)
            else:
                vec = np.asarray(entry, dtype=float)
                width = model.leaf_hi[k] - model.leaf_lo[k]
                if vec.shape != (width,):
                    raise ValueError(
                        f"coefficient vector for {model.ids[k]!r} has shape {vec.shape}, "
                        f"cube has {width} atoms"
                    )
                if not np.all(np.isfinite(vec)) or np.any(vec < 0):
                    raise ValueError(f"coefficient for {model.ids[k]!r} must be finite >= 0")
                vec = vec.copy()
                vec.setflags(write=False)
                checked.append(vec)
        self._entries = checked

    def entry(self, k):
        """Coefficient of node index k: float or vector over its leaf slice."""
        return self._entries[k]

    @classmethod
    def constant(cls, model: DyadicModel, value: float = 1.0) -> "CoefficientFamily":
        return cls(model, [float(value)] * model.n_nodes)

    @classmethod
    def from_scalars(cls, model: DyadicModel, scalars) -> "CoefficientFamily":
        return cls(model, list(np.asarray(scalars, dtype=float)))

    @classmethod
    def from_mapping(cls, model: DyadicModel, mapping: Mapping) -> "CoefficientFamily":
        """Build from {node id: scalar or {leaf id: value}}; every node required."""
        entries = [None] * model.n_nodes
        for key, val in mapping.items():
            k = model.node(str(key))
            if isinstance(val, Mapping):
                lo, hi = model.leaf_lo[k], model.leaf_hi[k]
                vec = np.zeros(hi - lo)
                for leaf_id, v in val.items():
                    j = model.leaf_index.get(str(leaf_id))
                    if j is None or not (lo <= j < hi):
                        raise ValueError(
                            f"leaf {leaf_id!r} is not an atom of cube {key!r}"
                        )
                    vec[j - lo] = float(v)
                entries[k] = vec
            else:
                entries[k] = float(val)
        for k, entry in enumerate(entries):
            if entry is None:
                raise ValueError(f"coefficient missing for node {model.ids[k]!r}")
        return cls(model, entries)

    @classmethod
    def random(cls, model: DyadicModel, seed, *, vector_prob: float = 0.3,
               zero_prob: float = 0.1) -> "CoefficientFamily":
        """Random family: lognormal values, some vector-valued, some zeroed."""
        rng = np.random.default_rng(seed)
        entries = []
        for k in range(model.n_nodes):
            width = int(model.leaf_hi[k] - model.leaf_lo[k])
            if rng.random() < zero_prob:
                entries.append(0.0)
            elif width > 1 and rng.random() < vector_prob:
                entries.append(rng.lognormal(0.0, 1.0, width))
            else:
                entries.append(float(rng.lognormal(0.0, 1.0)))
        return cls(model, entries)

    def scaled(self, c: float) -> "CoefficientFamily":
        if c < 0:
            raise ValueError("scale factor must be >= 0")
        return CoefficientFamily(self.model, [e * c for e in self._entries])

    def to_mapping(self) -> dict:
        out = {}
        for k, entry in enumerate(self._entries):
            if np.ndim(entry) == 0:
                out[self.model.ids[k]] = float(entry)
            else:
                lo = self.model.leaf_lo[k]
                out[self.model.ids[k]] = {
                    self.model.leaf_ids[lo + j]: float(v) for j, v in enumerate(entry)
                }
        return out


@dataclass
class MaximalOutput:
    """Operator values per atom, with the exponent and truncation applied."""

    values: np.ndarray
    q: float
    truncation: Optional[tuple] = None  # None | ("cube", id) | ("depth", N)


def _check_q(q):
    if q == math.inf:
        return math.inf
    q = float(q)
    if not q > 1.0:
        raise ValueError(f"q must be in (1, inf], got {q}")
    return q


def node_integrals(model: DyadicModel, F: np.ndarray, measure: str = MU) -> np.ndarray:
    """Integrals over every cube for a batch of leaf functions.

    F has shape (m, n_leaves); the result has shape (m, n_nodes).  Uses a
    prefix sum over the DFS leaf order, so each row costs O(leaves + nodes).
    """
    weighted = F * model.leaf_masses(measure)[None, :]
    csum = np.concatenate(
        [np.zeros((F.shape[0], 1)), np.cumsum(weighted, axis=1)], axis=1
    )
    return csum[:, model.leaf_hi] - csum[:, model.leaf_lo]


def _combine_terms(model: DyadicModel, a: CoefficientFamily, integrals: np.ndarray,
                   q, nodes) -> np.ndarray:
    """Combine per-cube terms |I_Q| * a_Q into the ell-q output per atom.

    For finite q the q-th powers are accumulated after rescaling by the
    pointwise max term, which keeps q as large as 1e6 from overflowing.
    """
    m = integrals.shape[0]
    absint = np.abs(integrals)
    lo, hi = model.leaf_lo, model.leaf_hi
    peak = np.zeros((m, model.n_leaves))
    for k in nodes:
        t = absint[:, k, None] * np.atleast_1d(a.entry(k))[None, :]
        np.maximum(peak[:, lo[k]:hi[k]], t, out=peak[:, lo[k]:hi[k]])
    if q == math.inf:
        return peak
    acc = np.zeros((m, model.n_leaves))
    with np.errstate(invalid="ignore", divide="ignore"):
        for k in nodes:
            t = absint[:, k, None] * np.atleast_1d(a.entry(k))[None, :]
            block = peak[:, lo[k]:hi[k]]
            ratio = np.where(block > 0, t / np.where(block > 0, block, 1.0), 0.0)
            acc[:, lo[k]:hi[k]] += ratio ** q
    return peak * acc ** (1.0 / q)


def _apply_batch(model, a, F, q, nodes=None, measure=MU):
    if a.model is not model:
        if a.model.ids != model.ids or a.model.children != model.children:
            raise ValueError("coefficient family was built for a different tree")
    I = node_integrals(model, F, measure)
    if nodes is None:
        nodes = range(model.n_nodes)
    return _combine_terms(model, a, I, q, nodes)


def apply_maximal(model: DyadicModel, a: CoefficientFamily, f, q) -> MaximalOutput:
    """Evaluate the full maximal operator on f (signed f allowed)."""
    q = _check_q(q)
    f = as_leaf_function(model, f)
    vals = _apply_batch(model, a, f[None, :], q)[0]
    return MaximalOutput(values=vals, q=q, truncation=None)


def apply_truncated(model: DyadicModel, a: CoefficientFamily, f, q, Q) -> MaximalOutput:
    """Evaluate the operator truncated to the subcubes of Q; zero off Q."""
    q = _check_q(q)
    f = as_leaf_function(model, f)
    k = model.node(Q)
    vals = _apply_batch(model, a, f[None, :], q, nodes=model.subtree(k))[0]
    return MaximalOutput(values=vals, q=q, truncation=("cube", model.ids[k]))


def apply_depth_truncated(model: DyadicModel, a: CoefficientFamily, f, q,
                          n_start: int) -> MaximalOutput:
    """Evaluate the operator over levels n_start and deeper.

    n_start = 0 recovers the full operator; each increment discards one more
    top level of the forest.
    """
    q = _check_q(q)
    f = as_leaf_function(model, f)
    if not (0 <= n_start <= model.max_depth):
        raise ValueError(
            f"n_start must be in [0, {model.max_depth}], got {n_start}"
        )
    nodes = np.flatnonzero(model.depth >= n_start)
    vals = _apply_batch(model, a, f[None, :], q, nodes=nodes)[0]
    return MaximalOutput(values=vals, q=q, truncation=("depth", int(n_start)))


def classical_coefficients(model: DyadicModel, omega_leaf, alpha: float) -> CoefficientFamily:
    """Coefficients omega(Q)^(-alpha) of the classical weighted maximal operator.

    Cubes with omega(Q) = 0 get coefficient 0: they carry no mass and drop
    out of every estimate after the change of measure.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    omega_node = model.subtree_sums(omega_leaf)
    if np.any(np.asarray(omega_leaf) < 0):
        raise ValueError("omega masses must be >= 0")
    with np.errstate(divide="ignore"):
        scalars = np.where(omega_node > 0, omega_node ** (-float(alpha)), 0.0)
    return CoefficientFamily.from_scalars(model, scalars)


def write_coefficients(a: CoefficientFamily, path) -> None:
    Path(path).write_text(json.dumps(a.to_mapping(), indent=2) + "\n")


def read_coefficients(model: DyadicModel, path) -> CoefficientFamily:
    return CoefficientFamily.from_mapping(model, json.loads(Path(path).read_text()))
