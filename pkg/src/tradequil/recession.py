"""Equilibrium quality: degeneracy multiplicity and the recession level.

A converged equilibrium usually clears only a subset ``I`` of goods. The
prices of the remaining goods are left free by the clearing equations
(degeneracy of multiplicity ``n - |I|``); the share of their supply that
finds no consumer is the recession level ``R``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._numerics import as_matrix, as_vector
from .equilibrium_solver import (
    EquilibriumSolution,
    PriceVector,
    _demand_weights,
    excess_demand,
    is_equilibrium,
)
from .errors import DivisionGuardError, PreconditionError

# Relative share of price mass allowed off the clearing set before the
# supported-price precondition is considered violated.
_OFF_SUPPORT_TOL = 1e-8


@dataclass(frozen=True)
class RecessionReport:
    """Clearing set, degeneracy, real consumption, and recession level."""

    clearing_set: tuple
    multiplicity: int
    psi_bar: np.ndarray
    B0: np.ndarray
    p1: PriceVector
    R: float

    @property
    def I(self):
        return self.clearing_set

    def to_dict(self):
        return {
            "schema_version": 1,
            "I": [k + 1 for k in self.clearing_set],
            "multiplicity": self.multiplicity,
            "psi_bar": self.psi_bar.tolist(),
            "B0": self.B0.tolist(),
            "p1": self.p1.p.tolist(),
            "R": self.R,
        }

    CSV_HEADER = ("scenario", "goods", "clearing_set", "multiplicity", "R")

    def csv_row(self, scenario):
        return (
            str(scenario),
            str(len(self.psi_bar)),
            ";".join(str(k + 1) for k in self.clearing_set),
            str(self.multiplicity),
            repr(self.R),
        )


def real_consumption(C, y):
    """Demand actually realized at satisfaction ratios ``y``: sum_i y_i C_i."""
    C = as_matrix(C, "C")
    y = as_vector(y, "y")
    if y.shape[0] != C.shape[1]:
        raise ValueError(
            f"y has length {y.shape[0]}, expected {C.shape[1]} agents"
        )
    if np.any(y < 0) or not np.any(y > 0):
        raise ValueError("y must be nonnegative and nonzero")
    return C @ y


def modified_supply(C, B, y, clearing_set):
    """Supply with off-clearing rows replaced by realized demand.

    Rows in the clearing set keep their supply values; every other row of
    agent ``i`` becomes ``y_i * c_ki``, so incomes are unchanged for any
    price supported on the clearing set.
    """
    C = as_matrix(C, "C")
    B = as_matrix(B, "B")
    if C.shape != B.shape:
        raise ValueError(f"C shape {C.shape} != B shape {B.shape}")
    y = as_vector(y, "y")
    idx = sorted(int(k) for k in clearing_set)
    if not idx:
        raise PreconditionError("clearing set must be nonempty", condition="nonempty_I")
    n = C.shape[0]
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError(f"clearing set {idx} out of range for {n} goods")
    B0 = C * y[None, :]
    B0[idx, :] = B[idx, :]
    return B0


def _split_goods(clearing_set, n):
    idx = sorted(int(k) for k in clearing_set)
    if not idx:
        raise PreconditionError("clearing set must be nonempty", condition="nonempty_I")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValueError(f"clearing set {idx} out of range for {n} goods")
    off = [k for k in range(n) if k not in set(idx)]
    return idx, off


def generalized_price(p0, psi, clearing_set) -> PriceVector:
    """Rescale clearing-set prices to preserve clearing cost; ones elsewhere.

    ``p0`` must be supported on the clearing set (mass elsewhere beyond a
    1e-8 relative share is an error). On the set, prices are renormalized
    to sum to one and then scaled so that the supply cost over the set is
    unchanged; off the set the price is one, matching current prices.
    """
    p0 = p0.p if isinstance(p0, PriceVector) else as_vector(p0, "p0")
    psi = as_vector(psi, "psi")
    n = psi.shape[0]
    if p0.shape[0] != n:
        raise ValueError(f"p0 has length {p0.shape[0]}, expected {n}")
    idx, off = _split_goods(clearing_set, n)
    total = float(p0.sum())
    if total <= 0:
        raise ValueError("p0 must have positive total mass")
    if off and float(p0[off].sum()) > _OFF_SUPPORT_TOL * total:
        raise PreconditionError(
            f"p0 has {float(p0[off].sum()):.3e} of its mass off the clearing "
            "set; a supported price vector is required",
            condition="p0_supported_on_I",
        )
    if np.any(psi[idx] <= 0):
        bad = idx[int(np.argmax(psi[idx] <= 0))]
        raise DivisionGuardError(
            f"aggregate supply of clearing good {bad} is not positive",
            agent=bad,
        )
    on = p0[idx] / float(p0[idx].sum())  # renormalized: sum over I is one
    tau = float(psi[idx].sum()) / float(psi[idx] @ on)
    p1 = np.ones(n)
    p1[idx] = tau * on
    return PriceVector.clearing_cost(p1, psi, idx)


def recession_level(psi, psi_bar, clearing_set, p1) -> float:
    """Cost share of off-clearing supply that finds no consumer.

    With real consumption snapped to supply on the clearing set, the
    inner-product form ``<psi - psi_bar, p1>`` reduces exactly to the sum
    over the off-clearing goods because the generalized price is one
    there; both evaluations are computed and must agree to 1e-12.
    """
    psi = as_vector(psi, "psi")
    psi_bar = as_vector(psi_bar, "psi_bar")
    p1 = p1.p if isinstance(p1, PriceVector) else as_vector(p1, "p1")
    n = psi.shape[0]
    idx, off = _split_goods(clearing_set, n)
    if not off:
        return 0.0
    if np.any(psi[off] <= 0):
        bad = off[int(np.argmax(psi[off] <= 0))]
        raise DivisionGuardError(
            f"aggregate supply of good {bad} is not positive; the recession "
            "denominator needs positive supply",
            agent=bad,
        )
    snapped = psi_bar.copy()
    snapped[idx] = psi[idx]
    shortfall = psi - snapped  # exactly zero on the clearing set
    numerator = float(shortfall[off].sum())
    inner = float(shortfall @ p1)
    scale = max(1.0, abs(numerator))
    if abs(inner - numerator) > 1e-12 * scale:
        raise AssertionError(
            "inner-product and reduced recession forms disagree: "
            f"{inner!r} vs {numerator!r}"
        )
    return numerator / float(psi[off].sum())


def degeneracy_report(solution: EquilibriumSolution, C, B, tol=1e-6) -> RecessionReport:
    """Assemble the full degeneracy picture for a converged solution.

    Verifies the solution still passes the equilibrium check, rebuilds the
    satisfaction ratios from the clearing-supported price, and spot-checks
    that prices off the clearing set leave the modified-supply market
    unchanged (the degeneracy freedom that motivates the multiplicity).
    """
    C = as_matrix(C, "C")
    B = as_matrix(B, "B")
    check = is_equilibrium(C, B, solution.p0.p, tol=tol)
    if not check.ok:
        raise PreconditionError(
            "solution no longer passes the equilibrium check against C, B",
            condition="solution_is_equilibrium",
        )
    n = C.shape[0]
    idx, off = _split_goods(solution.clearing_set, n)

    # Price supported exactly on the clearing set; the solver leaves at
    # most a vanishing mass elsewhere.
    p_support = np.zeros(n)
    p_support[idx] = solution.p0.p[idx]
    total = p_support.sum()
    if total <= 0:
        raise PreconditionError(
            "solution price has no mass on the clearing set",
            condition="p0_supported_on_I",
        )
    p_support /= total

    y = _demand_weights(C, B, p_support)
    psi = B.sum(axis=1)
    psi_bar = real_consumption(C, y)
    B0 = modified_supply(C, B, y, idx)
    p1 = generalized_price(p_support, psi, idx)
    R = recession_level(psi, psi_bar, idx, p1)

    base = excess_demand(C, B0, p1.p)
    rng = np.random.default_rng(0)  # fixed seed: the report is deterministic
    freedom_tol = 1e-10 * max(1.0, float(np.abs(psi).max()))
    for _ in range(3):
        perturbed = p1.p.copy()
        if off:
            perturbed[off] *= rng.uniform(0.5, 2.0, size=len(off))
        drift = float(np.abs(excess_demand(C, B0, perturbed) - base).max())
        if drift > freedom_tol:
            raise PreconditionError(
                f"off-clearing prices moved the modified-supply market by "
                f"{drift:.3e}; the clearing equations are not degenerate here",
                condition="degeneracy_freedom",
            )

    return RecessionReport(
        clearing_set=tuple(idx),
        multiplicity=n - len(idx),
        psi_bar=psi_bar,
        B0=B0,
        p1=p1,
        R=R,
    )
