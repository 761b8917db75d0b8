"""Truncated bosonic Fock space over a discretized radial photon-momentum grid.

The one-photon space is represented by a finite set of momentum magnitudes
k_1 < ... < k_M with positive quadrature weights that absorb the radial
measure |k|^2 d|k| together with the angular integral (4 pi for isotropic
integrands).  Photons are scalar; the dispersion relation is omega(k) = k.

Occupation vectors n = (n_1, ..., n_M) with sum(n) <= n_max enumerate the
truncated Fock basis.  Ladder operators use the hard-cutoff convention:
creation out of the top occupation level annihilates the state, and every
algebraic identity (CCR, pull-through) is asserted on the safe subspace
sum(n) <= n_max - 1 where the truncation is invisible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

# Dense dimension cap.  Dense eigensolvers stay the oracle below this size.
DEFAULT_DIM_CAP = 5000


@dataclass(frozen=True)
class ModeGrid:
    """Radial quadrature grid for the one-photon momentum magnitude."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or weights.shape != nodes.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if not np.all(nodes > 0):
            raise ValueError("all nodes must be positive (no zero mode is stored)")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        if not np.all(weights > 0):
            raise ValueError("all weights must be positive")

    @property
    def n_modes(self) -> int:
        return len(self.nodes)

    def omega(self, k=None):
        """Dispersion law omega(k) = k."""
        return self.nodes.copy() if k is None else k

    def to_json(self) -> str:
        return json.dumps({"nodes": self.nodes.tolist(), "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ModeGrid":
        d = json.loads(text)
        return cls(np.asarray(d["nodes"]), np.asarray(d["weights"]))


def build_mode_grid(n_modes: int, k_max: float, scheme: str = "uniform") -> ModeGrid:
    """Discretize the ball |k| <= k_max into radial cells.

    Weights are the exact cell volumes (4 pi / 3)(b^3 - a^3), so their sum
    reproduces the ball volume exactly.  The uniform scheme uses equal radial
    cells with midpoint nodes; the geometric scheme refines toward k = 0
    (halving cell edges) to resolve infrared scaling.
    """
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    if k_max <= 0:
        raise ValueError(f"k_max must be positive, got {k_max}")

    if scheme == "uniform":
        edges = np.linspace(0.0, k_max, n_modes + 1)
        nodes = 0.5 * (edges[:-1] + edges[1:])
    elif scheme == "geometric":
        # edges k_max * 2^{-(n-1)}, ..., k_max/2, k_max plus the origin;
        # nodes form a geometric sequence with ratio 2.
        edges = np.concatenate(([0.0], k_max * 2.0 ** np.arange(-(n_modes - 1), 1)))
        inner = k_max * 2.0 ** np.arange(-(n_modes - 1), 1)
        nodes = inner / np.sqrt(2.0)
        if n_modes == 1:
            nodes = np.array([k_max / np.sqrt(2.0)])
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    weights = (4.0 * np.pi / 3.0) * (edges[1:] ** 3 - edges[:-1] ** 3)
    return ModeGrid(nodes, weights)


def _enumerate_states(n_modes: int, n_max: int) -> np.ndarray:
    """All occupation vectors with total <= n_max, vacuum first.

    Enumeration is by total occupation, then lexicographic, which is
    deterministic and complete.
    """
    states = []
    for total in range(n_max + 1):
        # multisets of modes of size `total`
        for combo in combinations_with_replacement(range(n_modes), total):
            occ = [0] * n_modes
            for m in combo:
                occ[m] += 1
            states.append(occ)
    return np.array(states, dtype=np.int64).reshape(len(states), n_modes)


@dataclass
class FockBasis:
    """Enumerated occupation basis with total-quantum cutoff."""

    grid: ModeGrid
    n_max: int
    states: np.ndarray = field(repr=False)
    index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return self.states.shape[0]

    @property
    def n_modes(self) -> int:
        return self.grid.n_modes

    def hf_diagonal(self) -> np.ndarray:
        """Field energy sum_i n_i omega(k_i) of each basis state."""
        return self.states @ self.grid.nodes

    def state_index(self, occupation) -> int:
        return self.index[tuple(int(x) for x in occupation)]

    def safe_mask(self) -> np.ndarray:
        """States with total occupation <= n_max - 1 (truncation-blind)."""
        return self.states.sum(axis=1) <= self.n_max - 1


def build_fock_basis(grid: ModeGrid, n_max: int, dim_cap: int = DEFAULT_DIM_CAP) -> FockBasis:
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    M = grid.n_modes
    D = sum(comb(M + j - 1, j) for j in range(n_max + 1))
    if D > dim_cap:
        raise ValueError(
            f"basis dimension D={D} exceeds the configured cap {dim_cap} "
            f"(n_modes={M}, n_max={n_max})"
        )
    states = _enumerate_states(M, n_max)
    assert states.shape[0] == D
    index = {tuple(int(x) for x in s): i for i, s in enumerate(states)}
    return FockBasis(grid=grid, n_max=n_max, states=states, index=index)


@dataclass
class OperatorMatrix:
    """Dense complex matrix tagged with the FockBasis it acts on.

    blocks > 1 marks an operator on C^blocks tensor Fock (particle levels
    times field states); the matrix is then blocks*D square.
    """

    mat: np.ndarray
    basis: FockBasis
    hermitian: bool = False
    blocks: int = 1

    def __post_init__(self):
        self.mat = np.asarray(self.mat, dtype=complex)
        expected = self.blocks * self.basis.dim
        if self.mat.shape != (expected, expected):
            raise ValueError(
                f"matrix shape {self.mat.shape} does not match basis dimension {expected}"
            )
        if self.hermitian:
            dev = np.max(np.abs(self.mat - self.mat.conj().T)) if self.dim else 0.0
            if dev > 1e-10:
                raise ValueError(f"hermitian flag set but max|A - A*| = {dev:.3e}")

    @property
    def dim(self) -> int:
        return self.basis.dim


def ladder_matrix(basis: FockBasis, mode: int, kind: str) -> OperatorMatrix:
    """Creation or annihilation operator for one mode, hard truncation.

    The annihilation matrix has entries sqrt(n_mode) connecting |n> to
    |n - e_mode>; creation is its conjugate transpose, so creating out of the
    truncated sector gives zero.
    """
    if not (0 <= mode < basis.n_modes):
        raise ValueError(f"mode {mode} out of range [0, {basis.n_modes - 1}]")
    if kind not in ("create", "annihilate"):
        raise ValueError(f"kind must be 'create' or 'annihilate', got {kind!r}")

    D = basis.dim
    a = np.zeros((D, D), dtype=complex)
    for i, occ in enumerate(basis.states):
        n = occ[mode]
        if n > 0:
            lower = occ.copy()
            lower[mode] -= 1
            j = basis.index[tuple(int(x) for x in lower)]
            a[j, i] = np.sqrt(n)
    mat = a.conj().T if kind == "create" else a
    return OperatorMatrix(mat=mat, basis=basis)


def field_hamiltonian(basis: FockBasis) -> OperatorMatrix:
    """Diagonal free-field Hamiltonian sum_i n_i omega(k_i)."""
    return OperatorMatrix(np.diag(basis.hf_diagonal().astype(complex)), basis, hermitian=True)


def pull_through_check(basis: FockBasis, f, mode: int) -> float:
    """Max deviation of a(k) f(H_f) = f(H_f + omega(k)) a(k) on the safe subspace.

    Both the annihilation identity and its creation mirror
    f(H_f) a*(k) = a*(k) f(H_f + omega(k)) are evaluated; the larger sup-norm
    deviation is returned.  Columns are restricted to states with total
    occupation <= n_max - 1 so the truncation cannot contribute.
    """
    if not (0 <= mode < basis.n_modes):
        raise ValueError(f"mode {mode} out of range [0, {basis.n_modes - 1}]")
    hf = basis.hf_diagonal()
    om = basis.grid.nodes[mode]
    fhf = np.asarray([f(x) for x in hf], dtype=complex)
    fshift = np.asarray([f(x + om) for x in hf], dtype=complex)

    a = ladder_matrix(basis, mode, "annihilate").mat
    adag = a.conj().T

    lhs_a = a * fhf[np.newaxis, :]          # a f(H_f)
    rhs_a = fshift[:, np.newaxis] * a       # f(H_f + omega) a
    lhs_c = fhf[:, np.newaxis] * adag       # f(H_f) a*
    rhs_c = adag * fshift[np.newaxis, :]    # a* f(H_f + omega)

    cols = basis.safe_mask()
    if not np.any(cols):
        return 0.0
    dev_a = np.max(np.abs((lhs_a - rhs_a)[:, cols]))
    dev_c = np.max(np.abs((lhs_c - rhs_c)[:, cols]))
    return float(max(dev_a, dev_c))
