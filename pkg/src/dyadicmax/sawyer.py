"""Reduction of the three-measure weighted maximal estimate to two measures.

The classical weighted maximal operator integrates against a base measure
omega and is tested from L^p of a target measure that is absolutely
continuous with density w.  Substituting g = w^(p'/p) f and switching to the
deformed measure w^(-p'/p) omega turns that estimate into the two-measure
estimate for the generalized operator with coefficients omega(Q)^(-alpha),
term by term and norm by norm.  This module performs the substitution and
verifies the identities exactly on finite models.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .constants import VerificationError, holder_conjugate
from .lattice import (MU, NU, DyadicModel, RandomModelParams, as_leaf_function,
                      build_model, indicator, lp_norm, model_to_dict, random_model)
from .maximal import (CoefficientFamily, apply_maximal, apply_truncated,
                      classical_coefficients, node_integrals)

__all__ = [
    "SawyerInstance",
    "ReducedSystem",
    "ReductionReport",
    "ReductionError",
    "reduce_three_to_two",
    "verify_reduction",
    "truncation_restriction_gap",
    "random_instance",
    "read_instance",
    "write_instance",
]


class ReductionError(ValueError):
    """The instance admits no finite reduced measure."""


@dataclass
class SawyerInstance:
    """Tree shape with target measure nu, base measure omega, density w.

    The model's own mu masses are ignored here; only its shape and nu
    matter.  ``w`` is the density of the testing-side measure with respect
    to omega, ``alpha`` the exponent of the classical coefficients.
    """

    model: DyadicModel
    omega_leaf: np.ndarray
    w_leaf: np.ndarray
    alpha: float
    p: float

    def __post_init__(self):
        self.omega_leaf = as_leaf_function(self.model, self.omega_leaf, nonneg=True)
        self.w_leaf = as_leaf_function(self.model, self.w_leaf, nonneg=True)
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not (1.0 < self.p < math.inf):
            raise ValueError(f"p must be finite > 1, got {self.p}")

    @property
    def target_leaf(self):
        """Masses of the testing-side measure: w * omega per atom."""
        return self.w_leaf * self.omega_leaf


@dataclass
class ReducedSystem:
    """Output of the change of weight: measure, coefficients, substitution."""

    mu_leaf: np.ndarray
    coefficients: CoefficientFamily
    multiplier: np.ndarray    # g = multiplier * f, leafwise

    def transform(self, f):
        return np.asarray(f, dtype=float) * self.multiplier


def reduce_three_to_two(inst: SawyerInstance) -> ReducedSystem:
    """Change of weight sending the three-measure estimate to two measures.

    The reduced measure is w^(-p'/p) * omega per atom (0 where omega
    vanishes); atoms with positive omega but zero density would receive
    infinite mass and are rejected.
    """
    exponent = holder_conjugate(inst.p) / inst.p
    omega = inst.omega_leaf
    w = inst.w_leaf
    bad = (omega > 0) & (w == 0)
    if np.any(bad):
        leaf = inst.model.leaf_ids[int(np.flatnonzero(bad)[0])]
        raise ReductionError(
            f"leaf {leaf!r} has positive omega but zero density: "
            "reduced measure would be infinite"
        )
    with np.errstate(divide="ignore"):
        mu = np.where(omega > 0, np.where(w > 0, w, 1.0) ** (-exponent) * omega, 0.0)
        multiplier = np.where(w > 0, w ** exponent, 0.0)
    a = classical_coefficients(inst.model, omega, inst.alpha)
    return ReducedSystem(mu_leaf=mu, coefficients=a, multiplier=multiplier)


@dataclass
class ReductionReport:
    """Exactness diagnostics for one reduction, all relative errors."""

    integral_rel_error: float      # max over cubes: int_Q g dmu vs int_Q f domega
    operator_rel_error: float      # pointwise operator match
    norm_rel_error: float          # |g|_p,mu vs |f|_p,target
    ratio_lhs: Optional[float]     # operator-norm ratio, two-measure side
    ratio_rhs: Optional[float]     # same ratio, three-measure side
    ok: bool


def _rel_gap(x, y):
    scale = max(abs(x), abs(y), 1e-300)
    return abs(x - y) / scale


def verify_reduction(inst: SawyerInstance, f, q, *, rtol: float = 1e-12,
                     strict: bool = True) -> ReductionReport:
    """Check that the substitution preserves integrals, operators and norms.

    Identity (i): integrals of g against the reduced measure match integrals
    of f against omega on every cube, hence the generalized operator of g
    matches the classical weighted operator of f pointwise.  Identity (ii):
    the L^p norms agree.  Violations beyond ``rtol`` raise unless
    ``strict=False``.
    """
    f = as_leaf_function(inst.model, f, nonneg=True)
    reduced = reduce_three_to_two(inst)
    g = reduced.transform(f)

    model_two = inst.model.with_measures(mu_leaf=reduced.mu_leaf)
    model_three = inst.model.with_measures(mu_leaf=inst.omega_leaf)

    ints_two = node_integrals(model_two, g[None, :], MU)[0]
    ints_three = node_integrals(model_three, f[None, :], MU)[0]
    scale = max(np.max(np.abs(ints_two)), np.max(np.abs(ints_three)), 1e-300)
    integral_err = float(np.max(np.abs(ints_two - ints_three)) / scale)

    a = reduced.coefficients
    m_two = apply_maximal(model_two, a, g, q).values
    m_three = apply_maximal(model_three, a, f, q).values
    mscale = max(np.max(m_two), np.max(m_three), 1e-300)
    operator_err = float(np.max(np.abs(m_two - m_three)) / mscale)

    norm_two = lp_norm(model_two, g, inst.p, MU)
    target_model = inst.model.with_measures(mu_leaf=inst.target_leaf)
    norm_three = lp_norm(target_model, f, inst.p, MU)
    norm_err = _rel_gap(norm_two, norm_three)

    ratio_lhs = ratio_rhs = None
    if norm_two > 0 and norm_three > 0:
        ratio_lhs = lp_norm(inst.model, m_two, inst.p, NU) / norm_two
        ratio_rhs = lp_norm(inst.model, m_three, inst.p, NU) / norm_three

    ok = max(integral_err, operator_err, norm_err) <= rtol
    report = ReductionReport(
        integral_rel_error=integral_err,
        operator_rel_error=operator_err,
        norm_rel_error=norm_err,
        ratio_lhs=ratio_lhs, ratio_rhs=ratio_rhs, ok=ok,
    )
    if strict and not ok:
        raise VerificationError(
            f"reduction identity violated: integrals {integral_err:.3e}, "
            f"operator {operator_err:.3e}, norms {norm_err:.3e}", report)
    return report


def truncation_restriction_gap(model: DyadicModel, a: CoefficientFamily, Q,
                               q=math.inf) -> float:
    """Max gap between the truncation at Q and the restricted full operator.

    Compares the operator truncated to subcubes of Q, applied to 1_Q, with
    1_Q times the full operator of 1_Q.  For classical coefficients the two
    agree atom by atom (coefficients shrink along ancestors); the gap is
    measured, not assumed.
    """
    one_q = indicator(model, Q)
    truncated = apply_truncated(model, a, one_q, q, Q).values
    full = apply_maximal(model, a, one_q, q).values * one_q
    scale = max(np.max(truncated), np.max(full), 1e-300)
    return float(np.max(np.abs(truncated - full)) / scale)


# ---------------------------------------------------------------------------
# instance generation and files


def random_instance(seed: int, params: Optional[RandomModelParams] = None,
                    p: Optional[float] = None) -> SawyerInstance:
    """Deterministic random instance; densities are strictly positive."""
    params = params or RandomModelParams(zero_prob_mu=0.1, zero_prob_nu=0.1)
    model = random_model(params, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
    omega = rng.exponential(1.0, model.n_leaves)
    omega = np.where(rng.random(model.n_leaves) < 0.1, 0.0, omega)
    w = rng.lognormal(0.0, 1.0, model.n_leaves)
    alpha = float(rng.uniform(0.05, 1.0))
    p = float(p) if p is not None else float(rng.uniform(1.2, 4.0))
    return SawyerInstance(model=model, omega_leaf=omega, w_leaf=w, alpha=alpha, p=p)


def instance_to_dict(inst: SawyerInstance) -> dict:
    data = model_to_dict(inst.model)
    data["omega"] = {nid: float(v) for nid, v in zip(inst.model.leaf_ids, inst.omega_leaf)}
    data["w"] = {nid: float(v) for nid, v in zip(inst.model.leaf_ids, inst.w_leaf)}
    data["alpha"] = float(inst.alpha)
    data["p"] = float(inst.p)
    return data


def write_instance(inst: SawyerInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n")


def read_instance(path, *, p: Optional[float] = None) -> SawyerInstance:
    """Load a Sawyer instance file; ``p`` overrides the stored exponent."""
    data = json.loads(Path(path).read_text())
    model = build_model(data, min_children=1)
    omega = [float(data["omega"][nid]) for nid in model.leaf_ids]
    w = [float(data["w"][nid]) for nid in model.leaf_ids]
    return SawyerInstance(
        model=model, omega_leaf=np.asarray(omega), w_leaf=np.asarray(w),
        alpha=float(data["alpha"]),
        p=float(p) if p is not None else float(data.get("p", 2.0)),
    )
