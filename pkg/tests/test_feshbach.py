"""Sharp and smooth decimation maps on finite matrices."""

import numpy as np
import pytest

from specrg.fock import ModeGrid, OperatorMatrix, build_fock_basis, build_mode_grid
from specrg.feshbach import (NotInvertibleError, ProjectionPair, feshbach_map,
                             identity_defect, isospectral_check,
                             projection_from_diagonal, reconstruct_inverse,
                             spectral_projection)


def _tagged(mat, hermitian=False):
    """Wrap an arbitrary square matrix for the map (one-mode stand-in basis)."""
    dim = mat.shape[0]
    grid = ModeGrid(np.array([1.0]), np.array([1.0]))
    basis = build_fock_basis(grid, dim - 1)
    return OperatorMatrix(mat, basis, hermitian=hermitian)


class TestProjectionPairs:
    def test_partition_identity_enforced(self):
        with pytest.raises(ValueError, match="violated"):
            ProjectionPair(chi=np.array([0.5]), chibar=np.array([0.5]), smooth=True)

    def test_sharp_requires_indicator(self):
        with pytest.raises(ValueError, match="indicator"):
            ProjectionPair(chi=np.array([0.5]), chibar=np.array([np.sqrt(0.75)]),
                           smooth=False)

    def test_rho_above_spectrum_gives_identity_cutoff(self):
        basis = build_fock_basis(build_mode_grid(2, 0.4, "uniform"), 2)
        with pytest.warns(UserWarning):
            pair = spectral_projection(basis, rho=10.0)
        assert np.all(pair.chi == 1.0)

    def test_rho_below_first_level_gives_vacuum_projector(self):
        basis = build_fock_basis(build_mode_grid(2, 0.4, "uniform"), 2)
        hf = basis.hf_diagonal()
        rho = 0.5 * np.min(hf[hf > 0])
        pair = spectral_projection(basis, rho=rho)
        expected = np.zeros(basis.dim)
        expected[0] = 1.0
        assert np.array_equal(pair.chi, expected)

    def test_smooth_partition_exact_by_construction(self):
        basis = build_fock_basis(build_mode_grid(3, 0.6, "uniform"), 2)
        pair = spectral_projection(basis, rho=0.5, smooth=True)
        assert np.max(np.abs(pair.chi ** 2 + pair.chibar ** 2 - 1.0)) == 0.0


class TestFeshbachMap:
    def test_two_by_two_schur_complement(self):
        a, b, d = 1.3, 0.4 - 0.2j, 2.7
        H = _tagged(np.array([[a, b], [np.conj(b), d]]))
        pair = projection_from_diagonal(np.array([1.0, 0.0]), smooth=False)
        res = feshbach_map(H, None, pair)
        assert res.F.mat[0, 0] == pytest.approx(a - abs(b) ** 2 / d)
        # outside the decimation sector F carries only tau
        assert res.F.mat[1, 1] == pytest.approx(d)

    def test_diagonal_hamiltonian_passes_through(self):
        H = _tagged(np.diag([1.0, 2.0, 3.0, 4.0]).astype(complex))
        pair = projection_from_diagonal(np.array([1.0, 1.0, 0.0, 0.0]), smooth=False)
        res = feshbach_map(H, None, pair)
        assert np.allclose(res.F.mat, H.mat)

    def test_identity_defects_vanish(self):
        rng = np.random.default_rng(11)
        A = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
        H = _tagged(A)
        chi = np.linspace(0.0, 1.0, 12)
        pair = projection_from_diagonal(chi, smooth=True)
        res = feshbach_map(H, None, pair)
        d1, d2 = identity_defect(H, res)
        scale = np.linalg.norm(A, 2)
        assert d1 < 1e-12 * scale and d2 < 1e-12 * scale

    def test_singular_chibar_block_raises(self):
        H = _tagged(np.diag([1.0, 0.0]).astype(complex))
        pair = projection_from_diagonal(np.array([1.0, 0.0]), smooth=False)
        with pytest.raises(NotInvertibleError):
            feshbach_map(H, None, pair)

    def test_low_spectrum_preserved_on_hermitian_matrix(self):
        rng = np.random.default_rng(5)
        basis = build_fock_basis(build_mode_grid(3, 1.0, "uniform"), 3)
        D = basis.dim
        hf = np.diag(basis.hf_diagonal())
        V = rng.standard_normal((D, D)) * 0.02
        mat = hf + (V + V.T) / 2.0
        H = OperatorMatrix(mat, basis, hermitian=True)
        pair = spectral_projection(basis, rho=0.5)
        # the map is isospectral through characteristic zeros: H - lam is
        # singular iff F(H - lam) is singular on the decimation sector
        lam = float(np.min(np.linalg.eigvalsh(mat)))
        rep = isospectral_check(H, pair, lam)
        assert rep["dim_null_H"] == rep["dim_null_F"] == 1
        rep_off = isospectral_check(H, pair, lam - 0.05)
        assert rep_off["dim_null_H"] == rep_off["dim_null_F"] == 0


class TestReconstructInverse:
    def test_diagonal_inverse(self):
        H = _tagged(np.diag([2.0, 4.0, 8.0]).astype(complex))
        pair = projection_from_diagonal(np.array([1.0, 0.0, 0.0]), smooth=False)
        res = feshbach_map(H, None, pair)
        inv = reconstruct_inverse(res, pair).mat
        assert np.allclose(inv, np.diag([0.5, 0.25, 0.125]))

    def test_two_by_two_matches_direct_inverse(self):
        mat = np.array([[1.5, 0.3], [0.3, 2.5]], dtype=complex)
        H = _tagged(mat)
        pair = projection_from_diagonal(np.array([1.0, 0.0]), smooth=False)
        res = feshbach_map(H, None, pair)
        inv = reconstruct_inverse(res, pair).mat
        assert np.allclose(inv, np.linalg.inv(mat), atol=1e-13)

    def test_random_well_conditioned(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
        mat = A + 8.0 * np.eye(64)  # push away from singularity
        H = _tagged(mat)
        chi = (rng.random(64) > 0.5).astype(float)
        pair = projection_from_diagonal(chi, smooth=False)
        res = feshbach_map(H, None, pair)
        inv = reconstruct_inverse(res, pair).mat
        direct = np.linalg.inv(mat)
        err = np.linalg.norm(inv - direct, 2) / np.linalg.norm(direct, 2)
        assert err < 1e-10


class TestIsospectralCheck:
    def test_diagonal_null_transport(self):
        H = _tagged(np.diag([0.3, 1.0, 2.0]).astype(complex))
        pair = projection_from_diagonal(np.array([1.0, 1.0, 0.0]), smooth=False)
        rep = isospectral_check(H, pair, 0.3)
        assert rep["dim_null_H"] == 1 and rep["dim_null_F"] == 1
        assert rep["null_dims_equal"]

    def test_resolvent_point(self):
        H = _tagged(np.diag([0.3, 1.0, 2.0]).astype(complex))
        pair = projection_from_diagonal(np.array([1.0, 1.0, 0.0]), smooth=False)
        rep = isospectral_check(H, pair, 0.5 + 0.1j)
        assert rep["dim_null_H"] == rep["dim_null_F"] == 0
        assert rep["H_invertible"] and rep["F_invertible"]

    def test_engineered_double_eigenvalue(self):
        rng = np.random.default_rng(13)
        diag = np.array([0.4, 0.4, 1.1, 1.9, 2.5, 3.2])
        A = rng.standard_normal((6, 6))
        Q, _ = np.linalg.qr(A)
        mat = Q @ np.diag(diag) @ Q.T
        H = _tagged(mat.astype(complex), hermitian=True)
        chi = (np.diag(mat).real < 1.5).astype(float)
        if chi.sum() in (0, 6):
            chi[0] = 1.0 - chi[0]
        pair = projection_from_diagonal(chi, smooth=False)
        rep = isospectral_check(H, pair, 0.4)
        assert rep["dim_null_H"] == 2
        assert rep["dim_null_F"] == 2
        assert rep["transport_residual_chi"] < 1e-8
        assert rep["transport_residual_Q"] < 1e-8

    def test_smooth_sharp_taper_convergence(self):
        rng = np.random.default_rng(17)
        basis = build_fock_basis(build_mode_grid(3, 1.0, "uniform"), 2)
        D = basis.dim
        hf = np.diag(basis.hf_diagonal())
        V = rng.standard_normal((D, D)) * 0.05
        mat = hf + (V + V.T) / 2.0
        H = OperatorMatrix(mat, basis, hermitian=True)
        rho = 0.9
        sharp = feshbach_map(H, None, spectral_projection(basis, rho)).F.mat
        diffs = []
        for taper in (rho / 2.0, rho / 8.0, rho / 32.0):
            pair = spectral_projection(basis, rho, smooth=True, taper=taper)
            smooth = feshbach_map(H, None, pair).F.mat
            diffs.append(np.linalg.norm(smooth - sharp, 2))
        assert diffs[0] > diffs[1] > diffs[2]
