"""Desk-scale matter-field models: generalized spin-boson Hamiltonians,
complex dilation, the generalized Pauli-Fierz change of coupling, fiber
Hamiltonians at fixed total momentum, and mass renormalization.

The matter system is a finite N-level matrix standing in for a particle
Hamiltonian with isolated low-lying eigenvalues.  It couples linearly to the
scalar field through

    H = H_p (x) 1 + 1 (x) H_f + g Gamma (x) Phi(f),
    Phi(f) = sum_a sqrt(mass_a) f(k_a) (a_a + a*_a),   f(k) = chi(k)/sqrt(k),

with Gamma a Hermitian coupling matrix between levels (default: unit
off-diagonal entries) and chi the ultraviolet form factor.  This keeps every
spectral phenomenon the renormalization analysis addresses (ground state
below the unperturbed level, resonances with negative imaginary part,
mass shift of a freely moving dressed particle) while staying dense-solvable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dfield

import numpy as np

from .fock import FockBasis, ModeGrid, OperatorMatrix, build_fock_basis, field_hamiltonian, ladder_matrix
from .normalform import (CouplingFunction, NormalFormHamiltonian, FOUR_PI,
                         default_r_grid, from_profile, slot_masses)


def _gaussian_cutoff(kappa):
    return lambda k: np.exp(-(np.asarray(k) / kappa) ** 2)


@dataclass
class ModelSpec:
    """Particle levels, coupling strength, form factor, and profile choices.

    particle_levels must be strictly increasing.  gamma defaults to the full
    off-diagonal Hermitian matrix with unit entries; cutoff defaults to a
    Gaussian on scale kappa (analytic under k -> e^{-theta} k, as dilation
    needs); phi_profile defaults to the identity, the standard choice with
    phi'(0) = 1.
    """

    particle_levels: np.ndarray
    g: float
    kappa: float
    mass: float = 1.0
    gamma: np.ndarray | None = None
    cutoff: object = None
    phi_profile: object = None

    def __post_init__(self):
        self.particle_levels = np.asarray(self.particle_levels, dtype=float)
        if self.particle_levels.ndim != 1 or len(self.particle_levels) < 1:
            raise ValueError("particle_levels must be a nonempty 1-d array")
        if len(self.particle_levels) > 1 and not np.all(np.diff(self.particle_levels) > 0):
            raise ValueError("particle_levels must be strictly increasing")
        if self.g < 0:
            raise ValueError("g must be nonnegative")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        L = len(self.particle_levels)
        if self.gamma is None:
            self.gamma = np.ones((L, L), dtype=complex) - np.eye(L)
        else:
            self.gamma = np.asarray(self.gamma, dtype=complex)
            if self.gamma.shape != (L, L):
                raise ValueError("gamma must be L x L")
            if np.max(np.abs(self.gamma - self.gamma.conj().T)) > 1e-12:
                raise ValueError("gamma must be Hermitian")
        if self.cutoff is None:
            self.cutoff = _gaussian_cutoff(self.kappa)
        if abs(complex(self.cutoff(0.0)) - 1.0) > 1e-9:
            raise ValueError("form factor must satisfy chi(0) = 1")
        if self.phi_profile is None:
            self.phi_profile = lambda s: s
        h = 1e-5
        dphi0 = (self.phi_profile(h) - self.phi_profile(-h)) / (2.0 * h)
        if abs(dphi0 - 1.0) > 1e-6:
            raise ValueError(f"phi_profile must have phi'(0) = 1, measured {dphi0:.6f}")
        if L > 1:
            gap = float(np.min(np.diff(self.particle_levels)))
            if self.g > 0.1 * gap:
                warnings.warn(f"g = {self.g} is not small against the level gap {gap}")

    @property
    def n_levels(self) -> int:
        return len(self.particle_levels)

    @property
    def level_gap(self) -> float:
        if self.n_levels < 2:
            return np.inf
        return float(np.min(np.diff(self.particle_levels)))


def form_factor(spec: ModelSpec, k):
    """Coupling function f(k) = chi(k)/sqrt(k)."""
    k = np.asarray(k, dtype=float)
    return np.asarray(spec.cutoff(k), dtype=complex) / np.sqrt(k)


def field_operator(spec: ModelSpec, basis: FockBasis, fvals=None) -> np.ndarray:
    """Phi(f) = sum_a sqrt(mass_a) f(k_a) (a_a + a*_a) on the truncated basis."""
    mass = slot_masses(basis)
    if fvals is None:
        fvals = form_factor(spec, basis.grid.nodes)
    fvals = np.asarray(fvals, dtype=complex)
    D = basis.dim
    phi = np.zeros((D, D), dtype=complex)
    for a in range(basis.n_modes):
        am = ladder_matrix(basis, a, "annihilate").mat
        coef = np.sqrt(mass[a]) * fvals[a]
        phi += coef * am.conj().T + np.conj(coef) * am
    return phi


@dataclass
class CoupledModel:
    """Assembled matter-field model: H acts on C^L tensor Fock."""

    spec: ModelSpec
    basis: FockBasis
    H: np.ndarray
    Hp: np.ndarray
    Hf: np.ndarray
    Phi: np.ndarray

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def particle_vector(self, j: int, fock_vec=None) -> np.ndarray:
        """Embed level j tensor a Fock vector (default the vacuum)."""
        L = self.spec.n_levels
        D = self.basis.dim
        if fock_vec is None:
            fock_vec = np.zeros(D)
            fock_vec[0] = 1.0
        out = np.zeros(L * D, dtype=complex)
        out[j * D:(j + 1) * D] = fock_vec
        return out


def build_model(spec: ModelSpec, basis: FockBasis) -> CoupledModel:
    """H = H_p (x) 1 + 1 (x) H_f + g Gamma (x) Phi(f), particle index outer."""
    L = spec.n_levels
    D = basis.dim
    Hp = np.diag(spec.particle_levels).astype(complex)
    Hf = field_hamiltonian(basis).mat
    Phi = field_operator(spec, basis)
    H = (np.kron(Hp, np.eye(D)) + np.kron(np.eye(L), Hf)
         + spec.g * np.kron(spec.gamma, Phi))
    return CoupledModel(spec=spec, basis=basis, H=H, Hp=Hp, Hf=Hf, Phi=Phi)


# ---------------------------------------------------------------------------
# complex dilation
# ---------------------------------------------------------------------------

@dataclass
class DeformedOperator:
    """Dilated model H_theta; non-Hermitian for Im theta != 0."""

    theta: complex
    matrix: OperatorMatrix
    spec: ModelSpec

    def __post_init__(self):
        if abs(np.imag(self.theta)) >= np.pi / 4:
            raise ValueError("dilation angle must satisfy |Im theta| < pi/4")


def complex_dilate(spec: ModelSpec, basis: FockBasis, theta: complex) -> DeformedOperator:
    """Analytic continuation of the model in the dilation parameter.

    The field part becomes e^{-theta} H_f; the coupling function continues to
    f_theta(k) = e^{-3 theta/2} f(e^{-theta} k), the scaling action on a
    creation operator over the d^3k measure.  The finite matter system is
    dilation-invariant.
    """
    if abs(np.imag(theta)) >= np.pi / 4:
        raise ValueError("dilation angle must satisfy |Im theta| < pi/4")
    L = spec.n_levels
    D = basis.dim
    Hf = field_hamiltonian(basis).mat
    k = basis.grid.nodes
    scaled_k = np.exp(-theta) * k
    fvals = np.exp(-1.5 * theta) * np.asarray(spec.cutoff(scaled_k), dtype=complex) / np.sqrt(scaled_k)
    Phi_th = field_operator(spec, basis, fvals=fvals)
    H = (np.kron(np.diag(spec.particle_levels).astype(complex), np.eye(D))
         + np.exp(-theta) * np.kron(np.eye(L), Hf)
         + spec.g * np.kron(spec.gamma, Phi_th))
    herm = np.imag(theta) == 0 and np.max(np.abs(H - H.conj().T)) < 1e-10
    return DeformedOperator(theta=theta,
                            matrix=OperatorMatrix(H, basis, hermitian=bool(herm), blocks=L),
                            spec=spec)


def dilated_grid(grid: ModeGrid, theta: float) -> ModeGrid:
    """Covariantly rescaled grid {e^{-theta} k_i} with weights {e^{-3 theta} w_i}.

    For real theta, building the undeformed model on this grid reproduces the
    dilated matrix of complex_dilate exactly: the field diagonal picks up
    e^{-theta} and sqrt(mass') f(k') = sqrt(mass) f_theta(k) slot by slot.
    This gives a second, independent code path for the similarity claim.
    """
    s = float(theta)
    return ModeGrid(np.exp(-s) * grid.nodes, np.exp(-3.0 * s) * grid.weights)


# ---------------------------------------------------------------------------
# entry point for the renormalization flow
# ---------------------------------------------------------------------------

def ground_sector_hamiltonian(spec: ModelSpec, grid: ModeGrid, lam: float,
                              level: int = 0, r_grid=None, mu: float = 0.5,
                              xi: float = 0.5) -> NormalFormHamiltonian:
    """Normal-form kernels of the model decimated onto one particle level.

    Eliminating the other levels at second order in g (a Schur complement on
    the particle index with the free resolvent R_l(x) = (eps_l - lam + x)^-1)
    leaves, to O(g^3 max|Gamma_ll|) + O(g^4),

      w00(r)        = eps_j - lam + r
                      - g^2 sum_l |G_jl|^2 sum_a mass_a f(k_a)^2 R_l(r + k_a)
      w11(r; b; a)  = -g^2 sum_l |G_jl|^2 f(k_b) f(k_a) [R_l(r) + R_l(r+k_a+k_b)]
      w20(r; a, b)  = -g^2 sum_l |G_jl|^2 f(k_a) f(k_b)
                        (R_l(r+k_a) + R_l(r+k_b)) / 2        (w02 identical)

    plus first-order terms g Gamma_jj f(k) in the (1,0)/(0,1) slots when the
    kept level couples to itself.  All kernels carry exact profiles, so the
    first rescaling of the flow is interpolation-free.  The field energies of
    the kept sector must fit in I = [0,1]; a grid with n_max k_max > 1 will
    clamp and is warned about by the caller's assembly, not here.
    """
    if r_grid is None:
        r_grid = default_r_grid()
    j = level
    eps = spec.particle_levels
    others_eps = [eps[l] for l in range(spec.n_levels) if l != j]
    if others_eps and lam >= min(others_eps):
        raise ValueError("spectral parameter lam must sit below every decimated level")
    nodes = grid.nodes
    masses = grid.weights / FOUR_PI
    g = spec.g
    gj = np.abs(spec.gamma[j]) ** 2
    others = [l for l in range(spec.n_levels) if l != j]
    fvec = form_factor(spec, nodes).real  # cutoff real, f real

    def fofk(k):
        return float(spec.cutoff(k)) / np.sqrt(k)

    def w00(r):
        val = eps[j] - lam + r
        for l in others:
            if gj[l] == 0.0:
                continue
            val -= g * g * gj[l] * np.sum(masses * fvec ** 2 / (eps[l] - lam + r + nodes))
        return val

    def w11(r, kb, ka):
        tot = 0.0
        for l in others:
            if gj[l] == 0.0:
                continue
            tot += gj[l] * (1.0 / (eps[l] - lam + r)
                            + 1.0 / (eps[l] - lam + r + ka + kb))
        return -g * g * fofk(kb) * fofk(ka) * tot

    def wpair(r, ka, kb):
        tot = 0.0
        for l in others:
            if gj[l] == 0.0:
                continue
            tot += gj[l] * 0.5 * (1.0 / (eps[l] - lam + r + ka)
                                  + 1.0 / (eps[l] - lam + r + kb))
        return -g * g * fofk(ka) * fofk(kb) * tot

    terms = {
        (0, 0): from_profile(0, 0, r_grid, nodes, w00),
        (1, 1): from_profile(1, 1, r_grid, nodes, w11),
        (2, 0): from_profile(2, 0, r_grid, nodes, wpair),
        (0, 2): from_profile(0, 2, r_grid, nodes, wpair),
    }
    if abs(spec.gamma[j, j]) > 0:
        diag = spec.gamma[j, j]

        def w10(r, k, _c=diag):
            return g * _c * fofk(k)

        def w01(r, k, _c=diag):
            return g * np.conj(_c) * fofk(k)

        terms[(1, 0)] = from_profile(1, 0, r_grid, nodes, w10)
        terms[(0, 1)] = from_profile(0, 1, r_grid, nodes, w01)
    return NormalFormHamiltonian(terms, mu=mu, xi=xi, M_max=2, masses=masses)


# ---------------------------------------------------------------------------
# generalized Pauli-Fierz transform (scalarized)
# ---------------------------------------------------------------------------

def _phi_prime(phi, s, h: float = 1e-5):
    return (phi(s + h) - phi(s - h)) / (2.0 * h)


def pf_gauge_function(spec: ModelSpec, x: float, k):
    """f_x(k) = e^{-ikx} phi(sqrt(k) x) / sqrt(k), the transform generator."""
    k = np.asarray(k, dtype=float)
    phi = spec.phi_profile
    return np.exp(-1j * k * x) * np.vectorize(phi)(np.sqrt(k) * x) / np.sqrt(k)


def pf_coupling(spec: ModelSpec, x: float, k):
    """Transformed coupling phi_x(k) = e^{-ikx} - d/dx f_x(k).

    With the gradient evaluated analytically in x,
    phi_x(k) = e^{-ikx} [ 1 - phi'(sqrt(k) x) + i k phi(sqrt(k) x)/sqrt(k) ].
    For phi(s) = s this is i k x e^{-ikx}: one full power of k better than the
    raw infrared behaviour 1/sqrt(k) of the coupling function.
    """
    k = np.asarray(k, dtype=float)
    phi = spec.phi_profile
    s = np.sqrt(k) * x
    phivals = np.vectorize(phi)(s)
    dphivals = np.vectorize(lambda t: _phi_prime(phi, t))(s)
    return np.exp(-1j * k * x) * (1.0 - dphivals + 1j * k * phivals / np.sqrt(k))


def pf_correction_kernel(spec: ModelSpec, x: float, k):
    """Remaining gauge-energy kernel G(x): |d/dx f_x(k)| collected per mode.

    This is the piece whose square, integrated over the field measure, feeds
    the effective potential correction V_g - V of the transformed operator.
    """
    k = np.asarray(k, dtype=float)
    phi = spec.phi_profile
    s = np.sqrt(k) * x
    phivals = np.vectorize(phi)(s)
    dphivals = np.vectorize(lambda t: _phi_prime(phi, t))(s)
    return np.exp(-1j * k * x) * (-1j * k * phivals / np.sqrt(k) + dphivals)


def infrared_exponent(ks, vals, n_fit: int = 6) -> float:
    """Fitted power of the small-k behaviour of |vals| (log-log slope)."""
    ks = np.asarray(ks, dtype=float)
    mag = np.abs(np.asarray(vals))
    order = np.argsort(ks)
    ks, mag = ks[order], mag[order]
    keep = mag > 0
    ks, mag = ks[keep][:n_fit], mag[keep][:n_fit]
    if len(ks) < 2:
        return np.inf
    slope, _ = np.polyfit(np.log(ks), np.log(mag), 1)
    return float(slope)


def pauli_fierz_transform(spec: ModelSpec, x_grid, k_grid=None) -> dict:
    """Transformed-coupling report over a position grid.

    Returns the smallest admissible constant in the infrared bound
    |phi_x(k)| <= C min(1, sqrt(k) <x>), the per-x infrared exponents of the
    transformed coupling, and the untransformed control exponent.
    """
    if k_grid is None:
        k_grid = np.geomspace(1e-6, min(1.0, spec.kappa), 48)
    k_grid = np.asarray(k_grid, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    exps = []
    C = 0.0
    rows = []
    for x in x_grid:
        vals = pf_coupling(spec, float(x), k_grid)
        exps.append(infrared_exponent(k_grid, vals * np.asarray(spec.cutoff(k_grid))))
        envelope = np.minimum(1.0, np.sqrt(k_grid) * np.hypot(1.0, x))
        C = max(C, float(np.max(np.abs(vals) / envelope)))
        rows.append(np.abs(vals))
    f_untransformed = np.abs(form_factor(spec, k_grid))
    exp_raw = infrared_exponent(k_grid, f_untransformed)
    return {
        "x_grid": x_grid,
        "k_grid": k_grid,
        "coupling_magnitudes": np.asarray(rows),
        "bound_constant": C,
        "exponents": np.asarray(exps),
        "untransformed_exponent": exp_raw,
    }


# ---------------------------------------------------------------------------
# fiber Hamiltonians and mass renormalization
# ---------------------------------------------------------------------------

def fiber_hamiltonian(spec: ModelSpec, basis: FockBasis, P: float) -> OperatorMatrix:
    """H(P) = (P - P_f - g Phi)^2 / 2m + H_f, momenta scalarized along P."""
    if abs(P) >= 1.0 / 3.0:
        warnings.warn(f"|P| = {abs(P)} outside the controlled range |P| < 1/3")
    D = basis.dim
    Pf = np.diag((basis.states @ basis.grid.nodes).astype(complex))
    Phi = field_operator(spec, basis)
    A = P * np.eye(D) - Pf - spec.g * Phi
    H = A @ A / (2.0 * spec.mass) + field_hamiltonian(basis).mat
    herm = np.max(np.abs(H - H.conj().T)) < 1e-10
    return OperatorMatrix(H, basis, hermitian=bool(herm))


def mass_renormalization(spec: ModelSpec, basis: FockBasis, p_grid) -> dict:
    """Fit E(P) = a + b P^2 + c P^3 over ground energies; m_ren = 1/(2b)."""
    p_grid = np.asarray(p_grid, dtype=float)
    if len(p_grid) < 4:
        raise ValueError("p_grid needs at least 4 points for the cubic fit")
    if np.max(np.abs(p_grid)) >= 1.0 / 3.0:
        raise ValueError("p_grid must stay inside |P| < 1/3")
    energies = []
    for P in p_grid:
        H = fiber_hamiltonian(spec, basis, float(P))
        energies.append(float(np.min(np.linalg.eigvalsh(H.mat))))
    energies = np.asarray(energies)
    design = np.stack([np.ones_like(p_grid), p_grid ** 2, p_grid ** 3], axis=1)
    coef, res, _, _ = np.linalg.lstsq(design, energies, rcond=None)
    fit = design @ coef
    residual = float(np.max(np.abs(fit - energies)))
    scale = max(1.0, float(np.max(np.abs(energies))))
    if residual > 1e-4 * scale:
        raise RuntimeError(f"fiber energy fit is ill conditioned (residual {residual:.3e})")
    b = coef[1]
    if b <= 0:
        raise RuntimeError("fit produced a nonpositive quadratic coefficient")
    return {
        "p_grid": p_grid,
        "energies": energies,
        "coefficients": coef,
        "m_ren": float(1.0 / (2.0 * b)),
        "residual": residual,
    }
