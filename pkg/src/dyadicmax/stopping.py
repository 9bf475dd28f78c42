"""Stopping-cube decompositions and the Carleson embedding inequality.

Fixing r > 1 and a nonnegative f, the stopping children of a cube are its
maximal positive-mass descendants whose mu-average of f is at least r times
the cube's own average.  Iterating from the forest roots produces
generations of stopping cubes whose blocks partition the lattice; the block
averages are controlled, the stopping family packs like r/(r-1), and feeding
its masses into the Carleson embedding inequality yields the sufficiency
bound that the proof-chain trace walks end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .lattice import (MU, NU, DyadicModel, Exponents, as_leaf_function, average,
                      lp_norm)
from .maximal import CoefficientFamily, apply_depth_truncated, node_integrals, _combine_terms
from .constants import VerificationError, holder_conjugate, testing_constant

__all__ = [
    "StoppingDecomposition",
    "CarlesonSequence",
    "PackingReport",
    "CarlesonReport",
    "ProofTrace",
    "LinkCheck",
    "default_r",
    "stopping_children",
    "build_decomposition",
    "decomposition_to_dict",
    "partition_ok",
    "verify_packing",
    "carleson_embedding_check",
    "stopping_weights",
    "proof_trace",
]


def default_r(p: float) -> float:
    """The stopping ratio minimizing the final constant: (p + 1) / p."""
    return (float(p) + 1.0) / float(p)


def _check_r(r):
    r = float(r)
    if not r > 1.0:
        raise ValueError(f"stopping ratio r must be > 1, got {r}")
    return r


def _node_averages(model, f):
    """mu-averages of f on every node, 0 on null cubes by convention."""
    ints = node_integrals(model, f[None, :], MU)[0]
    return np.where(model.mu_node > 0, ints / np.where(model.mu_node > 0, model.mu_node, 1.0), 0.0)


def stopping_children(model: DyadicModel, f, Q, r) -> list:
    """Maximal strict descendants of Q whose average jumps by the factor r.

    Only positive-mass descendants qualify; a cube with zero average has no
    stopping children (all integrals below it vanish).  Returns node ids in
    document order.
    """
    r = _check_r(r)
    f = as_leaf_function(model, f, nonneg=True)
    k = model.node(Q)
    avg_q = average(model, f, Q, MU)
    if avg_q == 0.0:
        return []
    averages = _node_averages(model, f)
    threshold = r * avg_q
    found = []
    stack = list(model.children[k])[::-1]
    while stack:
        node = stack.pop()
        if model.mu_node[node] > 0 and averages[node] >= threshold:
            found.append(node)
            continue
        stack.extend(reversed(model.children[node]))
    return [model.ids[n] for n in sorted(found)]


@dataclass
class StoppingDecomposition:
    """Generations of stopping cubes and the blocks they own.

    The first generation is the forest roots (or the cubes at depth
    ``n_start`` when the truncated-depth variant is being traced).  The
    blocks E(Q) are disjoint and cover every node at depth >= n_start; each
    block member sits below its owner and above all deeper stopping cubes.
    """

    model: DyadicModel
    f: np.ndarray
    r: float
    n_start: int
    generations: list          # list of lists of node ids
    stopping: list             # all stopping-cube ids, generation order
    blocks: dict               # owner id -> list of member ids
    measure_used: str = MU
    owner_index: np.ndarray = field(default=None, repr=False)
    in_stopping: np.ndarray = field(default=None, repr=False)


def build_decomposition(model: DyadicModel, f, r, *, n_start: int = 0) -> StoppingDecomposition:
    """Iterate stopping generations until exhausted and carve the blocks.

    Terminates after at most ``depth`` generations since stopping cubes are
    strictly deeper than their parents in the stopping tree.
    """
    r = _check_r(r)
    f = as_leaf_function(model, f, nonneg=True)
    if not (0 <= n_start <= model.max_depth):
        raise ValueError(f"n_start must be in [0, {model.max_depth}], got {n_start}")

    averages = _node_averages(model, f)
    in_scope = model.depth >= n_start

    def children_of(k):
        # maximal positive-mass descendants above the r-threshold
        avg_q = averages[k]
        if avg_q == 0.0 or model.mu_node[k] == 0:
            return []
        threshold = r * avg_q
        found = []
        stack = list(model.children[k])[::-1]
        while stack:
            node = stack.pop()
            if model.mu_node[node] > 0 and averages[node] >= threshold:
                found.append(node)
                continue
            stack.extend(reversed(model.children[node]))
        return found

    first = [int(k) for k in np.flatnonzero(model.depth == n_start)]
    generations = []
    stopping = []
    in_stopping = np.zeros(model.n_nodes, dtype=bool)
    current = first
    while current:
        generations.append([model.ids[k] for k in sorted(current)])
        for k in current:
            in_stopping[k] = True
            stopping.append(k)
        nxt = []
        for k in current:
            nxt.extend(children_of(k))
        current = nxt

    # block owner: nearest stopping ancestor-or-self, propagated root-to-leaf
    owner = np.full(model.n_nodes, -1, dtype=np.int64)
    for k in model.dfs_order:
        if not in_scope[k]:
            continue
        if in_stopping[k]:
            owner[k] = k
        else:
            parent = model.parent[k]
            owner[k] = owner[parent] if parent >= 0 else -1

    blocks = {}
    for k in model.dfs_order:
        if in_scope[k] and owner[k] >= 0:
            blocks.setdefault(model.ids[owner[k]], []).append(model.ids[k])

    return StoppingDecomposition(
        model=model, f=f, r=r, n_start=int(n_start),
        generations=generations,
        stopping=[model.ids[k] for k in stopping],
        blocks=blocks,
        owner_index=owner, in_stopping=in_stopping,
    )


def decomposition_to_dict(decomp: StoppingDecomposition) -> dict:
    """Audit dump: generations by id, blocks as owner -> members."""
    return {
        "r": decomp.r,
        "n_start": decomp.n_start,
        "measure": decomp.measure_used,
        "generations": [list(gen) for gen in decomp.generations],
        "blocks": {owner: list(members)
                   for owner, members in decomp.blocks.items()},
    }


def partition_ok(decomp: StoppingDecomposition) -> bool:
    """Blocks are disjoint, cover the nodes at depth >= n_start, and nest.

    Every member must also sit inside its owner's subtree.
    """
    model = decomp.model
    seen = []
    for owner, members in decomp.blocks.items():
        k = model.node(owner)
        lo, hi = model.dfs_lo[k], model.dfs_hi[k]
        for m in members:
            pos = model.dfs_lo[model.node(m)]
            if not (lo <= pos < hi):
                return False
        seen.extend(members)
    in_scope = {model.ids[k] for k in np.flatnonzero(model.depth >= decomp.n_start)}
    return len(seen) == len(set(seen)) == len(in_scope) and set(seen) == in_scope


@dataclass
class PackingReport:
    """Cumulative and per-generation mass packing of a stopping family."""

    bound: float                     # r / (r - 1)
    worst_ratio: float
    worst_node: Optional[str]
    ratio: dict                      # node id -> subtree stopping mass / mu
    slack: dict                      # node id -> bound - ratio
    generation_bound_ok: bool        # sum over G*(Q) of mu <= mu(Q)/r for all Q in G
    generation_worst: float          # max of r * sum(G*(Q)) / mu(Q)
    ok: bool = True


def verify_packing(model: DyadicModel, decomp: StoppingDecomposition) -> PackingReport:
    """Check the mass of stopping cubes under every node against r/(r-1).

    Violations are reported, never raised: the bound is a consequence of the
    construction, so a violation flags an implementation bug.
    """
    r = decomp.r
    bound = r / (r - 1.0)
    stop_mass = np.where(decomp.in_stopping, model.mu_node, 0.0)
    # subtree accumulation, children before parents
    subtotal = stop_mass.copy()
    for k in model.dfs_order[::-1]:
        parent = model.parent[k]
        if parent >= 0:
            subtotal[parent] += subtotal[k]

    ratio = {}
    slack = {}
    worst = 0.0
    worst_node = None
    for k in range(model.n_nodes):
        if model.mu_node[k] <= 0:
            continue
        rk = subtotal[k] / model.mu_node[k]
        nid = model.ids[k]
        ratio[nid] = rk
        slack[nid] = bound - rk
        if rk > worst:
            worst = rk
            worst_node = nid

    # one-generation condition: each stopping parent's children pack below mu(Q)/r
    averages = _node_averages(model, decomp.f)
    gen_worst = 0.0
    gen_ok = True
    for qid in decomp.stopping:
        k = model.node(qid)
        if model.mu_node[k] <= 0 or averages[k] <= 0:
            continue
        kids = stopping_children(model, decomp.f, qid, r)
        mass = sum(model.mu_node[model.node(c)] for c in kids)
        g = r * mass / model.mu_node[k]
        gen_worst = max(gen_worst, g)
        if mass > model.mu_node[k] / r * (1 + 1e-9):
            gen_ok = False

    return PackingReport(
        bound=bound, worst_ratio=worst, worst_node=worst_node,
        ratio=ratio, slack=slack,
        generation_bound_ok=gen_ok, generation_worst=gen_worst,
        ok=(worst <= bound * (1 + 1e-9)) and gen_ok,
    )


@dataclass
class CarlesonSequence:
    """Nonnegative cube weights with their computed packing constant."""

    model: DyadicModel
    weights: np.ndarray          # per node, document order
    packing_constant: float

    @classmethod
    def from_weights(cls, model: DyadicModel, weights) -> "CarlesonSequence":
        w = np.asarray(weights, dtype=float)
        if w.shape != (model.n_nodes,):
            raise ValueError(f"need one weight per node, got shape {w.shape}")
        if np.any(w < 0):
            raise ValueError("Carleson weights must be >= 0")
        subtotal = w.copy()
        for k in model.dfs_order[::-1]:
            parent = model.parent[k]
            if parent >= 0:
                subtotal[parent] += subtotal[k]
        pos = model.mu_node > 0
        packing = float((subtotal[pos] / model.mu_node[pos]).max()) if np.any(pos) else 0.0
        return cls(model=model, weights=w, packing_constant=packing)

    @classmethod
    def from_mapping(cls, model: DyadicModel, mapping) -> "CarlesonSequence":
        w = np.zeros(model.n_nodes)
        for key, val in mapping.items():
            w[model.node(str(key))] = float(val)
        return cls.from_weights(model, w)

    def as_mapping(self) -> dict:
        return {self.model.ids[k]: float(v)
                for k, v in enumerate(self.weights) if v != 0.0}


def stopping_weights(decomp: StoppingDecomposition,
                     model: Optional[DyadicModel] = None) -> CarlesonSequence:
    """mu(Q) on the stopping cubes, 0 elsewhere; packs within r/(r-1)."""
    model = model or decomp.model
    w = np.where(decomp.in_stopping, model.mu_node, 0.0)
    return CarlesonSequence.from_weights(model, w)


@dataclass
class CarlesonReport:
    """One evaluation of the embedding inequality with its slack."""

    lhs: float
    bound: float
    packing_constant: float
    p: float
    slack: float
    ok: bool


def carleson_embedding_check(model: DyadicModel, w: CarlesonSequence, f, p,
                             *, rtol: float = 1e-9) -> CarlesonReport:
    """Test sum_Q (avg_Q f)^p w_Q <= (p')^p * A * |f|_p^p for the sequence.

    A failure is reported, not raised; the inequality is a theorem for any
    sequence with a finite packing constant.
    """
    p = float(p)
    if not (1.0 < p < math.inf):
        raise ValueError(f"p must be in (1, inf), got {p}")
    f = as_leaf_function(model, f, nonneg=True)
    averages = _node_averages(model, f)
    lhs = float(np.dot(averages ** p, w.weights))
    norm_p = lp_norm(model, f, p, MU) ** p
    bound = holder_conjugate(p) ** p * w.packing_constant * norm_p
    return CarlesonReport(
        lhs=lhs, bound=bound, packing_constant=w.packing_constant, p=p,
        slack=bound - lhs, ok=lhs <= bound * (1 + rtol),
    )


@dataclass
class LinkCheck:
    name: str
    lhs: float
    rhs: float
    ok: bool

    @property
    def slack(self):
        return self.rhs - self.lhs


@dataclass
class BlockRecord:
    owner: str
    norm_p: float        # |F_Q|_p,nu ^ p
    bound: float         # r^p B^p (avg_Q f)^p mu(Q)
    average: float


@dataclass
class ProofTrace:
    """Every intermediate quantity of the sufficiency chain, checked in order.

    Links, in the order they are asserted:
      lq_to_lp:   |(sum F_Q^q)^(1/q)|^p  <=  sum |F_Q|^p        (q >= p)
      block_bound: each |F_Q|^p <= r^p B^p (avg_Q f)^p mu(Q)
      carleson:   sum (avg_Q f)^p mu(Q) <= r/(r-1) (p')^p |f|^p
      final:      lhs <= r^(p+1)/(r-1) (p')^p B^p |f|^p
      optimal_r:  at r = (p+1)/p the final constant is (1+1/p)^(p+1) p (p')^p
    """

    decomposition: StoppingDecomposition
    p: float
    q: float
    r: float
    B: float
    lhs: float                  # |depth-truncated operator of f|_p,nu ^ p
    est1: float                 # sum over blocks of |F_Q|^p
    carleson_lhs: float
    carleson_bound: float
    final_bound: float
    optimal_bound: Optional[float]
    blocks: list                # BlockRecord per stopping cube
    reconstruction_rel_error: float
    average_control_excess: float   # max over blocks of avg_R / (r avg_Q) - 1
    links: list

    @property
    def ok(self):
        return all(link.ok for link in self.links)

    def failed_links(self):
        return [link.name for link in self.links if not link.ok]


def proof_trace(model: DyadicModel, a: CoefficientFamily, f, p, q, r=None,
                n_start: int = 0, *, B: Optional[float] = None,
                rtol: float = 1e-9, strict: bool = True) -> ProofTrace:
    """Numerically walk the sufficiency argument on one instance.

    Any failed link raises :class:`VerificationError` naming the link
    (``strict=False`` returns the trace instead); the chain is a theorem, so
    failures indicate bugs, not bad inputs.
    """
    exps = Exponents(p, q).require_ordered()
    p = exps.p
    f = as_leaf_function(model, f, nonneg=True)
    r = default_r(p) if r is None else _check_r(r)
    if B is None:
        B, _ = testing_constant(model, a, p, q)

    decomp = build_decomposition(model, f, r, n_start=n_start)
    averages = _node_averages(model, f)
    integrals = node_integrals(model, f[None, :], MU)

    lhs_vals = apply_depth_truncated(model, a, f, q, n_start).values
    lhs = lp_norm(model, lhs_vals, p, NU) ** p

    pc = holder_conjugate(p)
    blocks = []
    est1 = 0.0
    carleson_lhs = 0.0
    avg_excess = -math.inf
    block_ok = True
    worst_block = None
    if q == math.inf:
        recon = np.zeros(model.n_leaves)
    else:
        recon_pow = np.zeros(model.n_leaves)
    for qid in decomp.stopping:
        k = model.node(qid)
        members = np.asarray([model.node(m) for m in decomp.blocks[qid]],
                             dtype=np.int64)
        fq = _combine_terms(model, a, integrals, q, members)[0]
        norm_p = lp_norm(model, fq, p, NU) ** p
        bound = (r * averages[k]) ** p * B ** p * model.mu_node[k]
        blocks.append(BlockRecord(owner=qid, norm_p=norm_p, bound=bound,
                                  average=averages[k]))
        est1 += norm_p
        carleson_lhs += averages[k] ** p * model.mu_node[k]
        if norm_p > bound * (1 + rtol):
            block_ok = False
            worst_block = qid
        if q == math.inf:
            np.maximum(recon, fq, out=recon)
        else:
            recon_pow += fq ** q
        # average control over the block members, weak inequality convention
        for m in members:
            if model.mu_node[m] > 0:
                denom = r * averages[k]
                if denom > 0:
                    avg_excess = max(avg_excess, averages[m] / denom - 1.0)
                elif averages[m] > 0:
                    avg_excess = max(avg_excess, math.inf)

    if q != math.inf:
        recon = recon_pow ** (1.0 / q)
    scale = max(np.max(np.abs(lhs_vals)), 1e-300)
    recon_err = float(np.max(np.abs(recon - lhs_vals)) / scale)

    norm_f_p = lp_norm(model, f, p, MU) ** p
    carleson_bound = r / (r - 1.0) * pc ** p * norm_f_p
    final_bound = r ** (p + 1.0) / (r - 1.0) * pc ** p * B ** p * norm_f_p
    at_optimal = math.isclose(r, default_r(p), rel_tol=1e-12)
    optimal_bound = ((1.0 + 1.0 / p) ** (p + 1.0) * p * pc ** p * B ** p * norm_f_p
                     if at_optimal else None)

    links = [
        LinkCheck("lq_to_lp", lhs, est1, lhs <= est1 * (1 + rtol)),
        LinkCheck("block_bound",
                  max((b.norm_p for b in blocks), default=0.0),
                  max((b.bound for b in blocks), default=0.0),
                  block_ok),
        LinkCheck("carleson", carleson_lhs, carleson_bound,
                  carleson_lhs <= carleson_bound * (1 + rtol)),
        LinkCheck("final", lhs, final_bound, lhs <= final_bound * (1 + rtol)),
    ]
    if optimal_bound is not None:
        links.append(LinkCheck("optimal_r", lhs, optimal_bound,
                               lhs <= optimal_bound * (1 + rtol)))

    trace = ProofTrace(
        decomposition=decomp, p=p, q=q, r=r, B=B, lhs=lhs, est1=est1,
        carleson_lhs=carleson_lhs, carleson_bound=carleson_bound,
        final_bound=final_bound, optimal_bound=optimal_bound, blocks=blocks,
        reconstruction_rel_error=recon_err,
        average_control_excess=avg_excess if avg_excess > -math.inf else 0.0,
        links=links,
    )
    if strict and not trace.ok:
        name = trace.failed_links()[0]
        detail = f" (block {worst_block})" if name == "block_bound" else ""
        raise VerificationError(f"proof chain link failed: {name}{detail}", trace)
    return trace
