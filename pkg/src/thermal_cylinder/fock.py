"""Exact diagonalization of the P(phi)_2 Hamiltonian on a circle of length beta.

Mode ``n`` has momentum ``w_n = 2 pi n / beta`` and energy ``b_n = sqrt(w_n^2 + m^2)``.
The field mode is ``phi_n = (a_n + a_{-n}^dag) / sqrt(2 b_n beta)`` so that
``phi(t) = sum_n phi_n e^{i w_n t}`` has vacuum covariance ``1/(2b)`` per mode.
Wick ordering with respect to that covariance is normal ordering in ``a, a^dag``.

Truncation keeps modes ``|n| <= k_max`` and states with total occupation
``<= n_max``.  Basis states are ordered by total occupation, then
lexicographically in the occupation vector ``(nu_{-k_max}, ..., nu_{k_max})``
with larger entries first.
"""
from __future__ import annotations

import itertools
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import BasisError, DomainError, ParameterError, UnsupportedError
from .spectral import Polynomial

MAX_DENSE_STATES = 5000
MAX_DEGREE = 8


def _compositions(total: int, parts: int):
    # occupation vectors of given total, larger leading entries first
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


@dataclass(frozen=True)
class FockBasis:
    k_max: int
    n_max: int
    beta: float
    mass: float

    def __post_init__(self):
        if self.k_max < 0 or self.n_max < 1:
            raise ParameterError("need k_max >= 0 and n_max >= 1")
        if not (self.beta > 0 and self.mass > 0):
            raise ParameterError("beta and mass must be positive")

    @cached_property
    def modes(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    @cached_property
    def momenta(self) -> np.ndarray:
        return 2.0 * math.pi * self.modes / self.beta

    @cached_property
    def frequencies(self) -> np.ndarray:
        return np.hypot(self.momenta, self.mass)

    @cached_property
    def states(self) -> np.ndarray:
        n_modes = len(self.modes)
        rows = [s for total in range(self.n_max + 1) for s in _compositions(total, n_modes)]
        return np.asarray(rows, dtype=np.int64)

    @cached_property
    def index(self) -> dict[tuple, int]:
        return {tuple(s): i for i, s in enumerate(self.states)}

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    def mode_slot(self, n: int) -> int:
        if abs(n) > self.k_max:
            raise DomainError(f"mode {n} outside |n| <= {self.k_max}")
        return n + self.k_max

    def state_vector(self, occupation: dict[int, int]) -> np.ndarray:
        occ = [0] * len(self.modes)
        for n, v in occupation.items():
            occ[self.mode_slot(n)] = v
        vec = np.zeros(self.dim)
        vec[self.index[tuple(occ)]] = 1.0
        return vec

    @cached_property
    def _annihilators(self) -> list[sparse.csr_matrix]:
        ops = []
        for slot in range(len(self.modes)):
            rows, cols, vals = [], [], []
            for j, s in enumerate(self.states):
                if s[slot]:
                    t = s.copy()
                    t[slot] -= 1
                    rows.append(self.index[tuple(t)])
                    cols.append(j)
                    vals.append(math.sqrt(s[slot]))
            ops.append(sparse.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim)))
        return ops

    def annihilator(self, n: int) -> sparse.csr_matrix:
        return self._annihilators[self.mode_slot(n)]

    def creator(self, n: int) -> sparse.csr_matrix:
        """Truncated ``a_n^dag``: transitions above ``n_max`` are dropped."""
        return self.annihilator(n).T.tocsr()


@dataclass
class OperatorMatrix:
    matrix: sparse.spmatrix | np.ndarray
    basis: FockBasis
    hermitian: bool = True

    def dense(self) -> np.ndarray:
        m = self.matrix
        return m.toarray() if sparse.issparse(m) else np.asarray(m)

    @property
    def is_diagonal(self) -> bool:
        m = sparse.csr_matrix(self.matrix)
        return (m - sparse.diags(m.diagonal())).count_nonzero() == 0

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.matrix + other.matrix, self.basis, self.hermitian and other.hermitian)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.matrix - other.matrix, self.basis, self.hermitian and other.hermitian)

    def __mul__(self, c: float) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix * c, self.basis, self.hermitian)

    __rmul__ = __mul__

    def shifted(self, c: float) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix - c * sparse.identity(self.basis.dim, format="csr"),
                              self.basis, self.hermitian)


def build_free_hamiltonian(basis: FockBasis) -> OperatorMatrix:
    """``dGamma(b)``: diagonal with entries ``sum_n nu_n b_n``."""
    return OperatorMatrix(sparse.diags(basis.states @ basis.frequencies, format="csr"), basis)


def build_momentum(basis: FockBasis) -> OperatorMatrix:
    """``dGamma(D_t)``: diagonal with entries ``sum_n nu_n 2 pi n / beta``."""
    return OperatorMatrix(sparse.diags(basis.states @ basis.momenta, format="csr"), basis)


def _mode_weight(basis: FockBasis, n: int) -> float:
    return 1.0 / math.sqrt(2.0 * basis.frequencies[basis.mode_slot(n)] * basis.beta)


def build_field_mode(basis: FockBasis, n: int) -> OperatorMatrix:
    op = (basis.annihilator(n) + basis.creator(-n)) * _mode_weight(basis, n)
    # phi_n^dag = phi_{-n}; only n = 0 is hermitian on its own
    return OperatorMatrix(op.tocsr(), basis, hermitian=(n == 0))


def smeared_field(basis: FockBasis, k: int) -> OperatorMatrix:
    """``phi(delta_k) = sum_{|n|<=k} phi_n``: the point field with a sharp Fourier cutoff."""
    if not 0 <= k <= basis.k_max:
        raise DomainError(f"smearing cutoff must lie in [0, {basis.k_max}]")
    op = sum(build_field_mode(basis, n).matrix for n in range(-k, k + 1))
    return OperatorMatrix(sparse.csr_matrix(op), basis)


def _multiset_product(ops: list[sparse.csr_matrix], dim: int) -> sparse.csr_matrix:
    out = sparse.identity(dim, format="csr")
    for op in ops:
        out = op @ out
    return out


def build_interaction(basis: FockBasis, P: Polynomial) -> OperatorMatrix:
    """``int_0^beta :P(phi(t)): dt`` on the truncated Fock space.

    ``:phi(t)^j:`` integrated over the circle keeps the momentum-conserving
    normal-ordered monomials
    ``beta * C(j, r) * sum_{sum p = sum q} w(p) w(q) a^dag(p_1..p_r) a(q_1..q_{j-r})``
    with ``w(n) = (2 b_n beta)^{-1/2}``; tuples are summed as multisets with
    their multinomial multiplicities.
    """
    if P.degree > MAX_DEGREE:
        raise UnsupportedError(f"interaction degree {P.degree} > {MAX_DEGREE}")
    if P.degree % 2 and not P.is_zero:
        raise ParameterError("interaction polynomial must have even degree")
    dim = basis.dim
    modes = [int(n) for n in basis.modes]
    total = sparse.csr_matrix((dim, dim))
    cache_c: dict[tuple, sparse.csr_matrix] = {}

    def creators(ms):
        if ms not in cache_c:
            cache_c[ms] = _multiset_product([basis.creator(n) for n in ms], dim)
        return cache_c[ms]

    def multiplicity(ms):
        c = math.factorial(len(ms))
        for v in Counter(ms).values():
            c //= math.factorial(v)
        return c

    def weight(ms):
        return math.prod(_mode_weight(basis, n) for n in ms)

    for j, a_j in enumerate(P.coeffs):
        if a_j == 0.0:
            continue
        if j == 0:
            total = total + a_j * basis.beta * sparse.identity(dim, format="csr")
            continue
        for r in range(j + 1):
            by_sum: dict[int, list] = {}
            for q in itertools.combinations_with_replacement(modes, j - r):
                by_sum.setdefault(sum(q), []).append(q)
            for p in itertools.combinations_with_replacement(modes, r):
                for q in by_sum.get(sum(p), ()):
                    coef = (a_j * basis.beta * math.comb(j, r) * multiplicity(p) * multiplicity(q)
                            * weight(p) * weight(q))
                    total = total + coef * (creators(p) @ creators(q).T)
    return OperatorMatrix(sparse.csr_matrix(total), basis)


def build_hamiltonian(basis: FockBasis, P: Polynomial) -> OperatorMatrix:
    """``dGamma(b) + int :P(phi(t)): dt`` before subtracting the vacuum energy."""
    H = build_free_hamiltonian(basis)
    if P.is_zero:
        return H
    return H + build_interaction(basis, P)


def _check_dense(H: OperatorMatrix):
    if H.basis.dim > MAX_DENSE_STATES:
        raise UnsupportedError(f"{H.basis.dim} states exceed the dense limit of {MAX_DENSE_STATES}")
    m = H.dense()
    if np.max(np.abs(m - m.T.conj()), initial=0.0) > 1e-10:
        raise BasisError("operator is not hermitian")
    return m


@dataclass(frozen=True)
class GroundState:
    energy_0: float  # E_C: lowest eigenvalue before subtraction
    gap: float
    vector: np.ndarray
    energies: np.ndarray  # lowest levels with E_C subtracted


def ground_state(H: OperatorMatrix, tol: float = 1e-10, n_levels: int = 6) -> GroundState:
    """Lowest eigenpair; the returned energies have ``E_C = E_0`` subtracted."""
    m = _check_dense(H)
    w, v = np.linalg.eigh(m)
    gap = float(w[1] - w[0]) if w.size > 1 else math.inf
    if gap < 10.0 * tol:
        warnings.warn(f"near-degenerate vacuum (gap {gap:.3g}); truncation may be too small",
                      RuntimeWarning, stacklevel=2)
    vec = v[:, 0]
    # fix the overall phase: largest component positive
    vec = vec * np.sign(vec[np.argmax(np.abs(vec))])
    return GroundState(float(w[0]), gap, vec, w[:n_levels] - w[0])


@dataclass(frozen=True)
class JointEigensystem:
    energies: np.ndarray
    momenta: np.ndarray
    vectors: np.ndarray  # columns


def commutator_norm(A: OperatorMatrix, B: OperatorMatrix) -> float:
    """Frobenius norm of ``[A, B]`` (an upper bound on the operator norm)."""
    a, b = sparse.csr_matrix(A.matrix), sparse.csr_matrix(B.matrix)
    c = a @ b - b @ a
    return float(sparse.linalg.norm(c)) if c.nnz else 0.0


def joint_eigensystem(H: OperatorMatrix, P_op: OperatorMatrix, tol: float = 1e-10) -> JointEigensystem:
    """Simultaneous eigenbasis of ``H`` and the (diagonal) momentum operator."""
    if commutator_norm(H, P_op) > tol:
        raise BasisError("H and P do not commute")
    if not P_op.is_diagonal:
        raise BasisError("momentum operator must be diagonal in the Fock basis")
    m = _check_dense(H)
    p = np.asarray(sparse.csr_matrix(P_op.matrix).diagonal())
    keys = np.round(p / max(1.0, np.max(np.abs(p), initial=1.0)) * 1e9).astype(np.int64)
    energies = np.empty(m.shape[0])
    momenta = np.empty(m.shape[0])
    vectors = np.zeros_like(m)
    col = 0
    for key in np.unique(keys):
        idx = np.nonzero(keys == key)[0]
        w, v = np.linalg.eigh(m[np.ix_(idx, idx)])
        sl = slice(col, col + idx.size)
        energies[sl] = w
        momenta[sl] = p[idx[0]]
        vectors[idx, sl] = v
        col += idx.size
    order = np.argsort(energies, kind="stable")
    return JointEigensystem(energies[order], momenta[order], vectors[:, order])


@dataclass
class SpectrumReport:
    verdict: str
    min_h_minus_p: float
    min_h_plus_p: float
    tol: float
    details: dict = field(default_factory=dict)
    name: str = "spectrum_condition"

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {"name": self.name, "verdict": self.verdict,
                "statistic": min(self.min_h_minus_p, self.min_h_plus_p), "threshold": -self.tol,
                "details": {"min_h_minus_p": self.min_h_minus_p, "min_h_plus_p": self.min_h_plus_p,
                            **self.details}}


def spectrum_condition_check(H: OperatorMatrix, P_op: OperatorMatrix, tol: float = 1e-10) -> SpectrumReport:
    """``|P_C| <= H_C``: both ``H - P`` and ``H + P`` must be non-negative up to ``tol``.

    ``H`` must already have its vacuum energy subtracted.
    """
    h = _check_dense(H)
    p = P_op.dense()
    lo_minus = float(np.linalg.eigvalsh(h - p)[0])
    lo_plus = float(np.linalg.eigvalsh(h + p)[0])
    ok = lo_minus >= -tol and lo_plus >= -tol
    return SpectrumReport("PASS" if ok else "FAIL", lo_minus, lo_plus, tol)


def spectrum_margin(P: Polynomial, beta: float, mass: float, k_max: int, n_max: int) -> float:
    """``min(eig(H - P), eig(H + P))`` for one truncation, vacuum energy subtracted."""
    basis = FockBasis(k_max, n_max, beta, mass)
    H = build_hamiltonian(basis, P)
    gs = ground_state(H)
    rep = spectrum_condition_check(H.shifted(gs.energy_0), build_momentum(basis), tol=math.inf)
    return min(rep.min_h_minus_p, rep.min_h_plus_p)


def truncation_drift(P: Polynomial, beta: float, mass: float, k_max: int, n_max: int, step: int = 2) -> float:
    """Change of the spectrum-condition margin between ``n_max - step`` and ``n_max``."""
    a = spectrum_margin(P, beta, mass, k_max, n_max - step)
    b = spectrum_margin(P, beta, mass, k_max, n_max)
    return abs(a - b)


class CircleOracle:
    """Hamiltonian, momentum and vacuum of the truncated circle model, diagonalized once."""

    def __init__(self, P: Polynomial, beta: float, mass: float, k_max: int, n_max: int):
        self.P = P
        self.basis = FockBasis(k_max, n_max, beta, mass)
        self.H_raw = build_hamiltonian(self.basis, P)
        self.P_op = build_momentum(self.basis)
        self.vacuum = ground_state(self.H_raw)
        self.H = self.H_raw.shifted(self.vacuum.energy_0)
        self.eig = joint_eigensystem(self.H, self.P_op)

    @property
    def gap(self) -> float:
        return self.vacuum.gap

    def smeared_state(self, k: int) -> np.ndarray:
        return smeared_field(self.basis, k).matrix @ self.vacuum.vector

    def two_point(self, t, y, k: int) -> np.ndarray:
        return circle_two_point(self.eig, self.smeared_state(k), t, y)


def circle_two_point(eig: JointEigensystem, psi: np.ndarray, t, y) -> np.ndarray:
    """``<Omega| phi(delta_k) e^{-yH} e^{itP} phi(delta_k) |Omega>`` with ``psi = phi(delta_k) Omega``.

    Vectorized over ``t`` and ``y`` (broadcast); complex output whose imaginary
    part vanishes for real smearing.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("imaginary time y must be positive")
    t = np.asarray(t, dtype=float)
    w = np.abs(eig.vectors.T @ psi) ** 2
    phase = np.exp(-y[..., None] * eig.energies + 1j * t[..., None] * eig.momenta) if (t.ndim or y.ndim) \
        else np.exp(-y * eig.energies + 1j * t * eig.momenta)
    return phase @ w


def joint_spectral_support_check(eig: JointEigensystem, psi: np.ndarray, tol: float = 1e-9) -> SpectrumReport:
    """Spectral weight of ``psi`` outside ``{|p| <= E}``; PASS iff below 1e-10 of ``|psi|^2``."""
    w = np.abs(eig.vectors.T @ psi) ** 2
    outside = np.abs(eig.momenta) > eig.energies + tol
    mass_out = float(w[outside].sum())
    norm = float(w.sum())
    ok = mass_out <= 1e-10 * norm
    margin = float(np.min(eig.energies - np.abs(eig.momenta)))
    return SpectrumReport("PASS" if ok else "FAIL", margin, margin, tol,
                          {"weight_outside": mass_out, "norm": norm}, "joint_spectral_support")
