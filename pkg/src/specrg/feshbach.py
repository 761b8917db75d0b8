"""Sharp and smooth Feshbach-Schur maps on finite matrices.

Both variants are driven through one formula.  With tau the part of H kept
undecimated (diagonal in the working basis, so it commutes with the cutoff),
W = H - tau, and a pair (chi, chibar) obeying chi^2 + chibar^2 = 1,

    F = tau + chi W chi - chi W chibar R chibar W chi,
    Q = chi - chibar R chibar W chi,
    Q# = chi - chi W chibar R chibar,

where R inverts H_tau_chibar = tau + chibar W chibar on the support of
chibar.  Sharp orthogonal projections satisfy chi^2 + chibar^2 = chi + chibar
= 1, so the sharp map is the special case.  The algebra gives the exact
identities H Q = chi F and Q# H = F chi, which are asserted for every
computed result, and the inverse representation
H^-1 = Q F^-1 Q# + chibar R chibar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fock import FockBasis, OperatorMatrix

RANK_THRESHOLD_FACTOR = 1e-8  # singular values below this times ||H|| count as null
INDETERMINATE_BAND = 10.0     # rank decisions within this factor are reported, not guessed


@dataclass
class ProjectionPair:
    """Diagonal cutoff pair with chi^2 + chibar^2 = 1."""

    chi: np.ndarray      # diagonal entries
    chibar: np.ndarray
    smooth: bool

    def __post_init__(self):
        self.chi = np.asarray(self.chi, dtype=float)
        self.chibar = np.asarray(self.chibar, dtype=float)
        if self.chi.shape != self.chibar.shape or self.chi.ndim != 1:
            raise ValueError("chi and chibar must be 1-d arrays of equal length")
        dev = np.max(np.abs(self.chi ** 2 + self.chibar ** 2 - 1.0))
        if dev > 1e-12:
            raise ValueError(f"chi^2 + chibar^2 = 1 violated by {dev:.3e}")
        if np.any(self.chi < 0) or np.any(self.chi > 1):
            raise ValueError("chi must take values in [0, 1]")
        if not self.smooth:
            if np.max(np.abs(self.chi * (1.0 - self.chi))) > 1e-12:
                raise ValueError("sharp pair requires chi to be an indicator")

    @property
    def dim(self) -> int:
        return len(self.chi)

    def chi_support(self) -> np.ndarray:
        return self.chi > 0.0

    def chibar_support(self) -> np.ndarray:
        return self.chibar > 0.0


def spectral_projection(basis: FockBasis, rho: float, smooth: bool = False,
                        taper: float | None = None) -> ProjectionPair:
    """Field-energy cutoff at scale rho, sharp indicator or cosine taper.

    The smooth variant interpolates chi from 1 to 0 on [rho - taper, rho]
    (default taper rho/4, i.e. the window [3 rho / 4, rho]) with a cosine
    profile; chibar = sqrt(1 - chi^2) makes the partition exact by
    construction.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    hf = basis.hf_diagonal()
    if rho > np.max(hf):
        import warnings
        warnings.warn(f"rho={rho} exceeds the spectral max of H_f; chi is the identity")
    if not smooth:
        chi = (hf <= rho).astype(float)
    else:
        width = rho / 4.0 if taper is None else float(taper)
        if not (0.0 < width <= rho):
            raise ValueError("taper width must lie in (0, rho]")
        lo = rho - width
        chi = np.ones_like(hf)
        ramp = (hf > lo) & (hf < rho)
        chi[ramp] = np.cos(0.5 * np.pi * (hf[ramp] - lo) / width)
        chi[hf >= rho] = 0.0
    chibar = np.sqrt(np.clip(1.0 - chi ** 2, 0.0, None))
    return ProjectionPair(chi=chi, chibar=chibar, smooth=smooth)


def projection_from_diagonal(chi: np.ndarray, smooth: bool) -> ProjectionPair:
    chi = np.asarray(chi, dtype=float)
    chibar = np.sqrt(np.clip(1.0 - chi ** 2, 0.0, None))
    return ProjectionPair(chi=chi, chibar=chibar, smooth=smooth)


@dataclass
class FeshbachResult:
    F: OperatorMatrix
    Q: OperatorMatrix
    Qsharp: OperatorMatrix
    Hchibar_inv: OperatorMatrix
    pair: ProjectionPair
    tau: np.ndarray  # the diagonal of the undecimated part


class NotInvertibleError(np.linalg.LinAlgError):
    def __init__(self, message, singular_value=None):
        super().__init__(message)
        self.singular_value = singular_value


def _chibar_block_inverse(tau, W, pair, sv_threshold):
    """Inverse of tau + chibar W chibar on the support of chibar, 0 elsewhere."""
    D = len(tau)
    sup = pair.chibar_support()
    if not np.any(sup):
        return np.zeros((D, D), dtype=complex)
    cb = pair.chibar[sup]
    block = np.diag(tau[sup]) + cb[:, np.newaxis] * W[np.ix_(sup, sup)] * cb[np.newaxis, :]
    svals = np.linalg.svd(block, compute_uv=False)
    smin = svals[-1] if len(svals) else np.inf
    if smin < sv_threshold:
        raise NotInvertibleError(
            f"chibar block is numerically singular (smallest singular value {smin:.3e})",
            singular_value=float(smin))
    inv_block = np.linalg.inv(block)
    out = np.zeros((D, D), dtype=complex)
    out[np.ix_(sup, sup)] = inv_block
    return out


def feshbach_map(Hmat: OperatorMatrix, tau_part: OperatorMatrix | None,
                 pair: ProjectionPair) -> FeshbachResult:
    """Decimate H onto the chi sector.

    tau_part defaults to the diagonal part of H in the working basis.  It
    must be diagonal so that it commutes with the cutoff pair.
    """
    H = Hmat.mat
    D = H.shape[0]
    if pair.dim != D:
        raise ValueError("projection pair dimension mismatch")
    if tau_part is None:
        tau = np.diag(H).copy()
    else:
        tmat = tau_part.mat
        if np.max(np.abs(tmat - np.diag(np.diag(tmat)))) > 1e-13 * max(1.0, np.max(np.abs(tmat))):
            raise ValueError("tau must be diagonal in the working basis")
        tau = np.diag(tmat).copy()
    W = H - np.diag(tau)
    hnorm = np.linalg.norm(H, 2)
    sv_threshold = 1e-13 * max(1.0, hnorm)

    R = _chibar_block_inverse(tau, W, pair, sv_threshold)
    chi, cb = pair.chi, pair.chibar

    Wchi = W * chi[np.newaxis, :]
    chiW = chi[:, np.newaxis] * W
    cbWchi = cb[:, np.newaxis] * Wchi
    chiWcb = chiW * cb[np.newaxis, :]

    F = np.diag(tau) + chi[:, np.newaxis] * Wchi - chiWcb @ (R @ cbWchi)
    Q = np.diag(chi).astype(complex) - cb[:, np.newaxis] * (R @ cbWchi)
    Qs = np.diag(chi).astype(complex) - (chiWcb @ R) * cb[np.newaxis, :]

    basis = Hmat.basis
    herm = Hmat.hermitian and np.max(np.abs(F - F.conj().T)) < 1e-10 * max(1.0, hnorm)
    return FeshbachResult(
        F=OperatorMatrix(F, basis, hermitian=herm),
        Q=OperatorMatrix(Q, basis),
        Qsharp=OperatorMatrix(Qs, basis),
        Hchibar_inv=OperatorMatrix(R, basis),
        pair=pair,
        tau=tau,
    )


def identity_defect(Hmat: OperatorMatrix, res: FeshbachResult) -> tuple[float, float]:
    """Norms of H Q - chi F and Q# H - F chi, the exactness certificates."""
    H, F = Hmat.mat, res.F.mat
    Q, Qs = res.Q.mat, res.Qsharp.mat
    chi = res.pair.chi
    d1 = np.linalg.norm(H @ Q - chi[:, np.newaxis] * F, 2)
    d2 = np.linalg.norm(Qs @ H - F * chi[np.newaxis, :], 2)
    return float(d1), float(d2)


def reconstruct_inverse(res: FeshbachResult, pair: ProjectionPair) -> OperatorMatrix:
    """H^-1 = Q F^-1 Q# + chibar R chibar, requiring F invertible."""
    F = res.F.mat
    svals = np.linalg.svd(F, compute_uv=False)
    scale = max(1.0, float(svals[0])) if len(svals) else 1.0
    if len(svals) == 0 or svals[-1] < 1e-13 * scale:
        raise NotInvertibleError(
            f"F is numerically singular (smallest singular value "
            f"{svals[-1] if len(svals) else 0.0:.3e})",
            singular_value=float(svals[-1]) if len(svals) else 0.0)
    Finv = np.linalg.inv(F)
    cb = pair.chibar
    inv = res.Q.mat @ Finv @ res.Qsharp.mat + cb[:, np.newaxis] * res.Hchibar_inv.mat * cb[np.newaxis, :]
    return OperatorMatrix(inv, res.F.basis)


def _null_dimension(mat: np.ndarray, threshold: float):
    """(rank-deficiency count, indeterminate flag, null vectors)."""
    u, s, vh = np.linalg.svd(mat)
    null = s < threshold
    borderline = (~null) & (s < INDETERMINATE_BAND * threshold)
    vectors = vh.conj().T[:, null]
    return int(np.sum(null)), bool(np.any(borderline)), vectors


def isospectral_check(Hmat: OperatorMatrix, pair: ProjectionPair, lam: complex) -> dict:
    """Compare the null structure of H - lambda with that of F(H - lambda).

    The report records null dimensions on both sides (singular-value
    thresholding at 1e-8 ||H||), eigenvector transport both ways, and
    invertibility flags.  Borderline singular values within a factor 10 of
    the threshold mark the verdict indeterminate instead of failing.
    """
    H = Hmat.mat - lam * np.eye(Hmat.dim)
    shifted = OperatorMatrix(H, Hmat.basis)
    res = feshbach_map(shifted, None, pair)
    hnorm = max(np.linalg.norm(H, 2), 1.0)
    thr = RANK_THRESHOLD_FACTOR * hnorm

    dim_h, ind_h, null_h = _null_dimension(H, thr)
    # F is block diagonal with respect to supp(chi); its action outside the
    # decimation sector is just tau and carries no spectral information about
    # the chi sector, so the null count is taken on the supp(chi) block.
    sup = pair.chi_support()
    dim_f, ind_f, null_f_block = _null_dimension(res.F.mat[np.ix_(sup, sup)], thr)
    null_f = np.zeros((Hmat.dim, null_f_block.shape[1]), dtype=complex)
    null_f[sup, :] = null_f_block

    transport_h_to_f = 0.0
    for i in range(null_h.shape[1]):
        psi = null_h[:, i]
        phi = pair.chi * psi
        transport_h_to_f = max(transport_h_to_f,
                               float(np.linalg.norm(res.F.mat @ phi)) / hnorm)
    transport_f_to_h = 0.0
    for i in range(null_f.shape[1]):
        phi = null_f[:, i]
        psi = res.Q.mat @ phi
        transport_f_to_h = max(transport_f_to_h,
                               float(np.linalg.norm(H @ psi)) / hnorm)

    d1, d2 = identity_defect(shifted, res)
    return {
        "lambda": [float(np.real(lam)), float(np.imag(lam))],
        "dim_null_H": dim_h,
        "dim_null_F": dim_f,
        "null_dims_equal": dim_h == dim_f,
        "indeterminate": ind_h or ind_f,
        "H_invertible": dim_h == 0,
        "F_invertible": dim_f == 0,
        "transport_residual_chi": transport_h_to_f,
        "transport_residual_Q": transport_f_to_h,
        "identity_defect_HQ": d1 / hnorm,
        "identity_defect_QsH": d2 / hnorm,
    }
