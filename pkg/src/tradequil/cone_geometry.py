"""Polyhedral-cone primitives.

Everything here works with finitely generated nonnegative cones
``{sum_i alpha_i a_i : alpha_i >= 0}``. The central objects are biorthogonal
dual systems (used as membership certificates), generating subsets, and the
full parametrization of the strictly positive solutions of ``C @ y = psi``
when ``psi`` lies in the interior of the cone spanned by the columns of
``C``.

Conventions: functions that take "a set of vectors" expect an array whose
*rows* are the vectors; the matrix ``C`` of a linear system keeps its
generators in *columns*.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._numerics import (
    as_matrix,
    as_vector,
    membership_tol,
    nnls_solve,
    numerical_rank,
    require_independent,
)
from .errors import (
    DegenerateTargetError,
    EmptyMatrixError,
    InfeasibleError,
    OutsideConeError,
    RankDeficiencyError,
)

# Cap on the number of column subsets examined while searching for a
# full-rank subcone; generous for the intended problem sizes (l <= ~20).
_MAX_SUBSETS = 2_000_000


class Membership(Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class ConeBasis:
    """A finitely generated cone: ``vectors`` rows are the generators."""

    vectors: np.ndarray
    rank: int

    @classmethod
    def from_vectors(cls, vectors):
        v = as_matrix(np.atleast_2d(np.asarray(vectors, dtype=float)), "generators")
        return cls(vectors=v, rank=numerical_rank(v))


@dataclass(frozen=True)
class BiorthogonalSystem:
    """Full primal basis and its dual with ``<primal_i, dual_j> = delta_ij``.

    The first ``base_size`` primal rows are the caller's vectors; the rest
    are coordinate axes chosen by greedy pivoting.
    """

    primal: np.ndarray
    dual: np.ndarray
    base_size: int

    def coefficients(self, b):
        """Dual products ``<f_i, b>`` for i = 1..n."""
        return self.dual @ as_vector(b, "b")


@dataclass(frozen=True)
class MembershipResult:
    verdict: Membership
    alpha: np.ndarray  # full dual certificate <f_i, b>, length n

    def __bool__(self):
        return self.verdict is not Membership.OUTSIDE


@dataclass(frozen=True)
class GammaPolytope:
    """Constraint data for the weight vector ``gamma`` of a solution family.

    ``gamma`` has one entry per family member, base member first. Interior
    points satisfy ``sum(gamma) == 1``, ``gamma[1:] > 0`` and the strict
    inequalities ``A @ gamma[1:] < b`` componentwise.
    """

    A: np.ndarray  # (r, nfree)
    b: np.ndarray  # (r,)

    @property
    def n_free(self):
        return self.A.shape[1]

    def contains(self, gamma, margin=0.0):
        gamma = as_vector(gamma, "gamma")
        if gamma.shape[0] != self.n_free + 1:
            raise ValueError(
                f"gamma must have length {self.n_free + 1}, got {gamma.shape[0]}"
            )
        if abs(gamma.sum() - 1.0) > 1e-12:
            return False
        free = gamma[1:]
        if self.n_free == 0:
            return True
        scale = 1.0 + float(np.abs(self.b).max(initial=0.0))
        return bool(
            np.all(free > margin) and np.all(self.A @ free < self.b - margin * scale)
        )


@dataclass(frozen=True)
class PositiveSolutionFamily:
    """All strictly positive solutions of ``C @ y = psi``.

    ``z`` stacks the extreme solutions as rows: ``z[0]`` is supported on the
    chosen independent column subset, ``z[1 + j]`` additionally uses free
    column ``free[j]`` with weight ``ystar[j]``. Strictly positive solutions
    are exactly ``z.T @ gamma`` for ``gamma`` interior to
    ``gamma_constraints``.
    """

    z: np.ndarray
    ystar: np.ndarray
    gamma_constraints: GammaPolytope
    base_point: np.ndarray
    subset: tuple
    free: tuple
    duals: np.ndarray = field(repr=False)

    def member(self, gamma):
        gamma = as_vector(gamma, "gamma")
        if gamma.shape[0] != self.z.shape[0]:
            raise ValueError(
                f"gamma must have length {self.z.shape[0]}, got {gamma.shape[0]}"
            )
        return self.z.T @ gamma


def biorthogonal_system(vectors):
    """Extend independent vectors to a basis and build the dual system.

    The extension picks coordinate axes greedily (largest residual after
    projection onto the current span), which keeps the primal matrix well
    conditioned. The dual rows ``f_j`` solve ``<a_i, f_j> = delta_ij``.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    v = require_independent(as_matrix(v, "vectors"), "input vectors")
    m, n = v.shape
    if m > n:
        raise ValueError(f"cannot have {m} independent vectors in dimension {n}")

    primal = np.empty((n, n))
    primal[:m] = v
    # Orthonormal basis of the current span, grown one axis at a time.
    q, _ = np.linalg.qr(v.T) if m else (np.empty((n, 0)), None)
    basis = q[:, :m]
    for k in range(m, n):
        residual = np.eye(n) - basis @ basis.T
        scores = np.linalg.norm(residual, axis=0)
        j = int(np.argmax(scores))
        primal[k] = np.zeros(n)
        primal[k, j] = 1.0
        newdir = residual[:, j] / scores[j]
        basis = np.column_stack([basis, newdir])

    dual = np.linalg.solve(primal, np.eye(n)).T
    defect = float(np.abs(primal @ dual.T - np.eye(n)).max())
    if defect > 1e-9:
        raise RankDeficiencyError(
            f"biorthogonality defect {defect:.3e} exceeds 1e-9; "
            "input vectors are too close to dependent",
            numerical_rank=numerical_rank(v),
            expected=m,
        )
    return BiorthogonalSystem(primal=primal, dual=dual, base_size=m)


def classify_membership(vectors, b, tol=None):
    """Classify ``b`` against the cone of the independent rows of ``vectors``.

    Returns a :class:`MembershipResult` whose ``alpha`` holds every dual
    product ``<f_i, b>``; for an interior verdict the first ``m`` entries
    are the (strictly positive) cone coordinates of ``b``.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    b = as_vector(b, "b")
    system = biorthogonal_system(v)
    if tol is None:
        tol = membership_tol(v)
    alpha = system.coefficients(b)
    m = system.base_size
    in_span = np.all(np.abs(alpha[m:]) <= tol)
    if not in_span:
        return MembershipResult(Membership.OUTSIDE, alpha)
    head = alpha[:m]
    if np.all(head > tol):
        return MembershipResult(Membership.INTERIOR, alpha)
    if np.all(head >= -tol):
        return MembershipResult(Membership.BOUNDARY, alpha)
    return MembershipResult(Membership.OUTSIDE, alpha)


def in_cone(vectors, b, tol=None):
    """Nonnegative-combination membership in a general finite cone.

    Unlike :func:`classify_membership` the rows of ``vectors`` need not be
    independent. Returns ``(member, coefficients)`` where ``coefficients``
    solve the nonnegative least-squares problem.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    b = as_vector(b, "b")
    if tol is None:
        tol = membership_tol(v)
    coeff, rnorm = nnls_solve(v.T, b)
    return bool(rnorm <= tol * (1.0 + np.linalg.norm(b))), coeff


def generating_set(cone):
    """Indices of a generating subset of the cone's vectors.

    No member of the result lies in the cone of the other members, and the
    generated cone is unchanged. Positively proportional duplicates keep the
    lowest index.
    """
    if isinstance(cone, ConeBasis):
        v = cone.vectors
    else:
        v = as_matrix(np.atleast_2d(np.asarray(cone, dtype=float)), "generators")
    t = v.shape[0]
    norms = np.linalg.norm(v, axis=1)
    tol = membership_tol(v)
    if np.all(norms <= tol):
        raise EmptyMatrixError("all generators are zero", which="generators")

    alive = [i for i in range(t) if norms[i] > tol]
    # Drop positively proportional duplicates first so ties resolve to the
    # lowest index rather than to elimination order.
    units = {i: v[i] / norms[i] for i in alive}
    kept = []
    for i in alive:
        if any(np.linalg.norm(units[i] - units[j]) <= tol for j in kept):
            continue
        kept.append(i)
    alive = kept

    changed = True
    while changed:
        changed = False
        for i in reversed(alive):
            others = [j for j in alive if j != i]
            if not others:
                continue
            member, _ = in_cone(v[others], v[i], tol)
            if member:
                alive.remove(i)
                changed = True
                break
    return tuple(alive)


def _independent_subsets(columns, r, indices=None):
    """Yield index tuples of r linearly independent columns, lexicographically."""
    n, l = columns.shape
    pool = range(l) if indices is None else indices
    count = 0
    for subset in itertools.combinations(pool, r):
        count += 1
        if count > _MAX_SUBSETS:
            raise InfeasibleError(
                f"column-subset enumeration exceeded {_MAX_SUBSETS} candidates"
            )
        if numerical_rank(columns[:, subset].T) == r:
            yield subset


def _find_interior_subset(C, psi, tol):
    """First independent r-subset of columns whose subcone has psi interior.

    Returns ``(subset, result)`` or ``(None, best)`` where ``best`` is the
    closest-to-interior candidate seen (used for error reporting).
    """
    r = numerical_rank(C)
    best = None
    for subset in _independent_subsets(C, r):
        res = classify_membership(C[:, subset].T, psi, tol=tol)
        if res.verdict is Membership.INTERIOR:
            return subset, res
        if res.verdict is Membership.BOUNDARY and best is None:
            best = (subset, res)
    return None, best


def positive_solution_family(C, psi, subset=None):
    """Parametrize the strictly positive solutions of ``C @ y = psi``.

    Requires ``psi`` interior to the cone of the columns of ``C`` and to the
    subcone of some full-rank column subset (searched automatically unless
    ``subset`` is given). Raises :class:`OutsideConeError` when ``psi`` is
    not in the cone and :class:`DegenerateTargetError` when it only touches
    the boundary of every candidate subcone.
    """
    C = as_matrix(C, "C")
    psi = as_vector(psi, "psi")
    n, l = C.shape
    if psi.shape[0] != n:
        raise ValueError(f"psi has length {psi.shape[0]}, expected {n}")
    tol = membership_tol(C.T)
    r = numerical_rank(C)

    if subset is not None:
        subset = tuple(int(i) for i in subset)
        res = classify_membership(C[:, subset].T, psi, tol=tol)
        if res.verdict is not Membership.INTERIOR:
            raise DegenerateTargetError(
                f"psi is not interior to the requested subcone {subset}",
                dual_index=_first_violated(res, len(subset)),
                certificate=res.alpha,
            )
    else:
        subset, best = _find_interior_subset(C, psi, tol)
        if subset is None:
            member, coeff = in_cone(C.T, psi, tol)
            if not member:
                # Farkas-style separating vector from the NNLS residual.
                residual = C @ coeff - psi
                raise OutsideConeError(
                    "psi lies outside the cone of the columns of C",
                    certificate=-residual,
                    dual_index=int(np.argmax(np.abs(residual))),
                )
            res = best[1] if best is not None else None
            raise DegenerateTargetError(
                "psi touches only the boundary of every full-rank subcone",
                dual_index=_first_violated(res, r) if res is not None else None,
                certificate=res.alpha if res is not None else None,
            )

    free = tuple(i for i in range(l) if i not in set(subset))
    system = biorthogonal_system(C[:, subset].T)
    F = system.dual[:r]  # rows f_1..f_r
    alpha = F @ psi  # <psi, f_k>, strictly positive

    nfree = len(free)
    z = np.zeros((nfree + 1, l))
    z[0, list(subset)] = alpha
    ystar = np.zeros(nfree)
    A = np.zeros((r, nfree))
    for j, i in enumerate(free):
        ci = F @ C[:, i]  # <C_i, f_k>
        positive = ci > tol
        if positive.any():
            ystar[j] = float(np.min(alpha[positive] / ci[positive]))
        else:
            ystar[j] = 1.0
        row = alpha - ci * ystar[j]
        # The binding ratio lands on exactly zero up to roundoff.
        row[(row < 0) & (row >= -tol)] = 0.0
        if np.any(row < 0):
            raise AssertionError("negative component in extreme solution")
        z[j + 1, list(subset)] = row
        z[j + 1, i] = ystar[j]
        A[:, j] = ci * ystar[j]

    polytope = GammaPolytope(A=A, b=alpha.copy())
    base_gamma = _interior_gamma(polytope)
    base_point = z.T @ base_gamma
    return PositiveSolutionFamily(
        z=z,
        ystar=ystar,
        gamma_constraints=polytope,
        base_point=base_point,
        subset=tuple(subset),
        free=free,
        duals=system.dual,
    )


def _first_violated(result, m):
    head = result.alpha[:m]
    bad = np.where(head <= membership_tol(result.alpha[None, :]))[0]
    return int(bad[0]) if bad.size else int(np.argmin(head))


def _interior_gamma(polytope):
    """A strictly interior gamma: uniform weights, shrunk toward the base
    vertex by bisection when the uniform point violates a constraint."""
    nfree = polytope.n_free
    if nfree == 0:
        return np.array([1.0])

    def at(t):
        gamma = np.empty(nfree + 1)
        gamma[1:] = t / (nfree + 1)
        gamma[0] = 1.0 - gamma[1:].sum()
        return gamma

    margin = 1e-12
    if polytope.contains(at(1.0), margin=margin):
        return at(1.0)
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if polytope.contains(at(mid), margin=margin):
            lo = mid
        else:
            hi = mid
    if lo == 0.0:
        raise InfeasibleError("gamma polytope has empty interior")
    return at(0.5 * lo)


def strictly_positive_solution(C, psi):
    """A strictly positive ``y`` with ``C @ y = psi``.

    First tries :func:`positive_solution_family`. When ``psi`` is interior
    to the full column cone but to no single full-rank subcone, splits
    ``psi = (psi1 + psi2) / 2`` with each half interior to a distinct
    subcone (perturbation toward a subcone barycenter, step size found by
    bisection) and averages the two family base points.
    """
    C = as_matrix(C, "C")
    psi = as_vector(psi, "psi")
    tol = membership_tol(C.T)
    try:
        return positive_solution_family(C, psi).base_point
    except OutsideConeError as exc:
        raise InfeasibleError(
            "no strictly positive solution: psi lies outside the column cone",
            detail={"dual_index": exc.dual_index, "certificate": exc.certificate},
        ) from exc
    except DegenerateTargetError:
        pass

    r = numerical_rank(C)
    gen = generating_set(C.T)
    subsets = [s for s in _independent_subsets(C, r, indices=gen)]
    touching = [
        s
        for s in subsets
        if classify_membership(C[:, s].T, psi, tol=tol).verdict
        is not Membership.OUTSIDE
    ]
    failed_duals = []
    for s1 in touching:
        bary = C[:, s1].mean(axis=1)
        direction = bary - psi
        if np.linalg.norm(direction) <= tol:
            continue
        split = _bisect_split(C, psi, direction, s1, subsets, tol)
        if split is None:
            continue
        t, s2 = split
        y1 = positive_solution_family(C, psi + t * direction, subset=s1).base_point
        y2 = positive_solution_family(C, psi - t * direction, subset=s2).base_point
        y = 0.5 * (y1 + y2)
        if np.all(y > 0):
            return y
    for s in subsets:
        res = classify_membership(C[:, s].T, psi, tol=tol)
        failed_duals.append(_first_violated(res, len(s)))
    raise InfeasibleError(
        "no strictly positive solution found for psi",
        detail={
            "failing_dual_per_subcone": failed_duals,
            "common_dual_index": max(set(failed_duals), key=failed_duals.count)
            if failed_duals
            else None,
        },
    )


def _bisect_split(C, psi, direction, s1, subsets, tol):
    """Largest step t with psi + t*dir interior to s1's subcone and
    psi - t*dir interior to some other subcone; None if no step works."""

    def host(t):
        point = psi - t * direction
        for s2 in subsets:
            if s2 == s1:
                continue
            res = classify_membership(C[:, s2].T, point, tol=tol)
            if res.verdict is Membership.INTERIOR:
                if (
                    classify_membership(
                        C[:, s1].T, psi + t * direction, tol=tol
                    ).verdict
                    is Membership.INTERIOR
                ):
                    return s2
        return None

    t = 1.0
    found = None
    while t > 1e-12:
        s2 = host(t)
        if s2 is not None:
            found = (t, s2)
            break
        t *= 0.5
    if found is None:
        return None
    # Push the step as high as it will go while both halves stay interior.
    lo, s2_lo = found
    hi = 1.0
    if lo < hi:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            s2 = host(mid)
            if s2 is not None:
                lo, s2_lo = mid, s2
            else:
                hi = mid
    return lo, s2_lo
