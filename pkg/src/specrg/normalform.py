"""Generalized-normal-form Hamiltonians and their anisotropic norms.

A Hamiltonian is a collection of coupling functions w_{m,n}(r; k_1..k_{m+n})
with r in I = [0,1] standing for the field energy and each momentum slot
running over the radial grid nodes.  The operator it represents is

    H = sum_{m,n} W_{m,n},
    W_{m,n} = sum over node multi-indices of
              prod_i sqrt(mass_i) a*(k_i) w_{m,n}(H_f; k) prod_j sqrt(mass_j) a(k_j),

where mass_i = weight_i / (4 pi) is the radial quadrature measure k^2 dk
(the angular 4 pi is kept out of the slot measure so that the operator-norm
bound below carries the same constant as in the continuum), and w is
evaluated at the field energy of the intermediate state sitting between the
creation block and the annihilation block.  This placement is the one
consistent with pull-through bookkeeping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product as iproduct
from math import factorial

import numpy as np

from .fock import FockBasis, OperatorMatrix

FOUR_PI = 4.0 * np.pi

DEFAULT_R_POINTS = 33


def default_r_grid(n_points: int = DEFAULT_R_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_points)


def _interp_complex(x, xp, fp):
    """np.interp for complex ordinates, clamping x into [xp[0], xp[-1]]."""
    x = np.clip(x, xp[0], xp[-1])
    return np.interp(x, xp, fp.real) + 1j * np.interp(x, xp, fp.imag)


@dataclass
class CouplingFunction:
    """Discretized kernel w_{m,n}(r; k_1..k_{m+n}).

    values has shape (len(r_grid),) + (len(nodes),) * (m + n), the first m
    momentum axes being creation slots and the last n annihilation slots.
    dr_values holds the r-derivative on the same grid; when omitted it is
    produced by central differences.  An optional profile callable
    profile(r, k_1, ..., k_{m+n}) allows exact off-grid evaluation (used by
    the scaling transformation to avoid interpolation error).
    """

    m: int
    n: int
    r_grid: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    dr_values: np.ndarray | None = None
    profile: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.r_grid = np.asarray(self.r_grid, dtype=float)
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        expected = (len(self.r_grid),) + (len(self.nodes),) * self.order
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape}, expected {expected}")
        if self.dr_values is None:
            self.dr_values = np.gradient(self.values, self.r_grid, axis=0)
        else:
            self.dr_values = np.asarray(self.dr_values, dtype=complex)
            if self.dr_values.shape != expected:
                raise ValueError("dr_values shape mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("kernel values must be finite")

    @property
    def order(self) -> int:
        return self.m + self.n

    def copy(self) -> "CouplingFunction":
        return CouplingFunction(self.m, self.n, self.r_grid.copy(), self.nodes.copy(),
                                self.values.copy(), self.dr_values.copy(), self.profile)

    def at_r(self, r):
        """Kernel sampled at field energies r (clamped to I), shape r + slots."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        flat = self.values.reshape(len(self.r_grid), -1)
        out = np.empty((len(r), flat.shape[1]), dtype=complex)
        for col in range(flat.shape[1]):
            out[:, col] = _interp_complex(r, self.r_grid, flat[:, col])
        return out.reshape((len(r),) + self.values.shape[1:])

    def symmetry_deviation(self) -> float:
        """Max change under swapping two creation or two annihilation slots."""
        dev = 0.0
        if self.m >= 2:
            dev = max(dev, float(np.max(np.abs(self.values - np.swapaxes(self.values, 1, 2)))))
        if self.n >= 2:
            a = 1 + self.m
            dev = max(dev, float(np.max(np.abs(self.values - np.swapaxes(self.values, a, a + 1)))))
        return dev

    def symmetrize(self) -> "CouplingFunction":
        vals = 0.5 * (self.values + np.swapaxes(self.values, 1, 2)) if self.m >= 2 else self.values
        if self.n >= 2:
            a = 1 + self.m
            vals = 0.5 * (vals + np.swapaxes(vals, a, a + 1))
        return CouplingFunction(self.m, self.n, self.r_grid, self.nodes, vals, profile=self.profile)

    def to_json(self) -> str:
        return json.dumps({
            "m": self.m, "n": self.n,
            "r_grid": self.r_grid.tolist(),
            "nodes": self.nodes.tolist(),
            "shape": list(self.values.shape),
            "values_re": self.values.real.ravel().tolist(),
            "values_im": self.values.imag.ravel().tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "CouplingFunction":
        d = json.loads(text)
        shape = tuple(d["shape"])
        vals = (np.asarray(d["values_re"]) + 1j * np.asarray(d["values_im"])).reshape(shape)
        return cls(d["m"], d["n"], np.asarray(d["r_grid"]), np.asarray(d["nodes"]), vals)


def from_profile(m, n, r_grid, nodes, func) -> CouplingFunction:
    """Tabulate func(r, k_1, .., k_{m+n}) on the grid and keep it for rescaling."""
    r_grid = np.asarray(r_grid, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    order = m + n
    shape = (len(r_grid),) + (len(nodes),) * order
    vals = np.empty(shape, dtype=complex)
    for idx in iproduct(range(len(nodes)), repeat=order):
        ks = [nodes[i] for i in idx]
        col = np.asarray([func(r, *ks) for r in r_grid], dtype=complex)
        vals[(slice(None),) + idx] = col
    return CouplingFunction(m, n, r_grid, nodes, vals, profile=func)


def coupling_norm_mu(w: CouplingFunction, mu: float) -> float:
    """Anisotropic sup norm max_j sup |k_j|^-mu prod_i |k_i|^1/2 w.

    For m + n = 0 the empty momentum product degenerates to sup_r |w|.
    """
    if w.order == 0:
        return float(np.max(np.abs(w.values)))
    k = w.nodes
    order = w.order
    grids = np.meshgrid(*([k] * order), indexing="ij")
    root_prod = np.ones_like(grids[0])
    for g in grids:
        root_prod = root_prod * np.sqrt(g)
    kmin = grids[0]
    for g in grids[1:]:
        kmin = np.minimum(kmin, g)
    weight = kmin ** (-mu) * root_prod
    return float(np.max(weight[np.newaxis, ...] * np.abs(w.values)))


def coupling_norm_mu1(w: CouplingFunction, mu: float) -> float:
    dw = CouplingFunction(w.m, w.n, w.r_grid, w.nodes, w.dr_values,
                          dr_values=np.zeros_like(w.dr_values))
    return coupling_norm_mu(w, mu) + coupling_norm_mu(dw, mu)


@dataclass
class NormalFormHamiltonian:
    """Collection {w_{m,n}} for m+n <= M_max together with (mu, xi).

    masses optionally stores the radial quadrature measure per node (k^2 dk,
    the weights of a ModeGrid divided by 4 pi); the renormalization step needs
    it for contraction sums, plain norm bookkeeping does not.
    """

    terms: dict
    mu: float = 0.5
    xi: float = 0.5
    M_max: int = 2
    masses: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.xi < 1.0):
            raise ValueError("xi must lie in (0, 1)")
        for (m, n), w in self.terms.items():
            if (m, n) != (w.m, w.n):
                raise ValueError(f"term key {(m, n)} disagrees with kernel ({w.m}, {w.n})")
            if m + n > self.M_max:
                raise ValueError(f"term ({m},{n}) exceeds M_max={self.M_max}")
        if self.masses is not None:
            self.masses = np.asarray(self.masses, dtype=float)
            if self.masses.shape != self.nodes.shape:
                raise ValueError("masses must align with the kernel nodes")

    @property
    def r_grid(self) -> np.ndarray:
        return next(iter(self.terms.values())).r_grid

    @property
    def nodes(self) -> np.ndarray:
        return next(iter(self.terms.values())).nodes

    def copy(self) -> "NormalFormHamiltonian":
        return NormalFormHamiltonian({k: w.copy() for k, w in self.terms.items()},
                                     self.mu, self.xi, self.M_max,
                                     None if self.masses is None else self.masses.copy())


def hamiltonian_norm(H: NormalFormHamiltonian) -> float:
    """Banach norm sum_{m,n} xi^-(m+n) ||w_{m,n}||_{mu,1}."""
    total = 0.0
    for (m, n), w in H.terms.items():
        total += H.xi ** (-(m + n)) * coupling_norm_mu1(w, H.mu)
    return total


def split(H: NormalFormHamiltonian):
    """Decompose H into (E, T, W): scalar part, field part, interaction."""
    w00 = H.terms.get((0, 0))
    if w00 is None:
        raise ValueError("split requires the (0,0) term")
    if w00.r_grid[0] != 0.0:
        raise ValueError("r_grid must start at 0 to read off E = w_00(0)")
    E = complex(w00.values[0])
    T = CouplingFunction(0, 0, w00.r_grid, w00.nodes, w00.values - E,
                         dr_values=w00.dr_values)
    W = {key: w for key, w in H.terms.items() if key != (0, 0)}
    return E, T, W


def t_slope_deviation(H: NormalFormHamiltonian) -> float:
    """sup_r |T'(r) - 1|, the marginal-direction displacement."""
    _, T, _ = split(H)
    return float(np.max(np.abs(T.dr_values - 1.0)))


def interaction_norm(H: NormalFormHamiltonian) -> float:
    """||W||_{mu,xi}: the Banach norm of the m+n >= 1 part."""
    total = 0.0
    for (m, n), w in H.terms.items():
        if m + n >= 1:
            total += H.xi ** (-(m + n)) * coupling_norm_mu1(w, H.mu)
    return total


def slot_masses(basis: FockBasis) -> np.ndarray:
    """Radial measure k^2 dk per node: quadrature weight divided by 4 pi."""
    return basis.grid.weights / FOUR_PI


def assemble_term(w: CouplingFunction, basis: FockBasis) -> np.ndarray:
    """Dense matrix of one monomial W_{m,n} on the truncated basis.

    Works column by column: annihilate n photons (ordered tuples over the
    occupied modes), read the kernel at the field energy of the intermediate
    state, then create m photons.  Creation out of the truncated sector is
    dropped, matching the hard-cutoff ladder convention.
    """
    if len(w.nodes) != basis.n_modes or not np.allclose(w.nodes, basis.grid.nodes):
        raise ValueError("kernel nodes do not match the basis grid")
    D = basis.dim
    hf = basis.hf_diagonal()
    mass = slot_masses(basis)
    kern_at_hf = w.at_r(hf)  # (D,) + slots
    out = np.zeros((D, D), dtype=complex)
    if w.order == 0:
        out[np.arange(D), np.arange(D)] = kern_at_hf
        return out

    M = basis.n_modes
    root_mass = np.sqrt(mass)
    m, n = w.m, w.n

    def annihilations(occ, depth):
        """Yield (J tuple, intermediate occupation, ladder amplitude)."""
        if depth == 0:
            yield (), occ, 1.0
            return
        for J, mid, amp in annihilations(occ, depth - 1):
            for mode in range(M):
                if mid[mode] > 0:
                    nxt = mid.copy()
                    nxt[mode] -= 1
                    yield J + (mode,), nxt, amp * np.sqrt(mid[mode])

    def creations(occ, depth):
        if depth == 0:
            yield (), occ, 1.0
            return
        for I, top, amp in creations(occ, depth - 1):
            if top.sum() >= basis.n_max:
                continue
            for mode in range(M):
                nxt = top.copy()
                nxt[mode] += 1
                yield I + (mode,), nxt, amp * np.sqrt(nxt[mode])

    for col, occ in enumerate(basis.states):
        for J, mid, amp_a in annihilations(occ, n):
            t = basis.index[tuple(int(x) for x in mid)]
            for I, top, amp_c in creations(mid, m):
                row = basis.index[tuple(int(x) for x in top)]
                kern = kern_at_hf[(t,) + I + J]
                if kern == 0.0:
                    continue
                factor = 1.0
                for s in I + J:
                    factor *= root_mass[s]
                out[row, col] += amp_a * amp_c * factor * kern
    return out


def assemble_operator(H: NormalFormHamiltonian, basis: FockBasis) -> OperatorMatrix:
    """Dense matrix of the full normal-form Hamiltonian."""
    D = basis.dim
    total = np.zeros((D, D), dtype=complex)
    for w in H.terms.values():
        total += assemble_term(w, basis)
    herm = bool(np.max(np.abs(total - total.conj().T)) < 1e-10) if D else True
    return OperatorMatrix(total, basis, hermitian=herm)


def basic_bound_margin(w: CouplingFunction, rho: float, mu: float, basis: FockBasis):
    """Operator-norm bound of a cut-off monomial against its kernel norm.

    Returns (lhs, rhs) with lhs = ||chi_rho W_{m,n} chi_rho|| (spectral norm)
    and rhs = rho^(m+n+mu) / sqrt(m! n!) * ||w||_mu.
    """
    if w.order < 1:
        raise ValueError("basic bound applies to m+n >= 1")
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    mat = assemble_term(w, basis)
    chi = (basis.hf_diagonal() <= rho).astype(float)
    cut = chi[:, np.newaxis] * mat * chi[np.newaxis, :]
    lhs = float(np.linalg.norm(cut, 2))
    rhs = rho ** (w.order + mu) / np.sqrt(factorial(w.m) * factorial(w.n)) * coupling_norm_mu(w, mu)
    return lhs, rhs
