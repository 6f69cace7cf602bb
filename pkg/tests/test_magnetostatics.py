import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrhomog.cellmesh import PARTICLE, CellSpec, build_cell
from mrhomog.effective import clausius_mossotti
from mrhomog.femcore import p1_gradients
from mrhomog.magnetostatics import (MaterialParams, compute_A2, compute_A4,
                                    compute_mu_tensors, maxwell_stress_tensor,
                                    solve_potentials)


def mu_tensors(mesh, **kw):
    mat = MaterialParams(**kw)
    return compute_mu_tensors(mesh, mat, solve_potentials(mesh, mat))


def test_uniform_permeability_gives_zero_potential(uniform_mu_result):
    for phi in uniform_mu_result.potentials.phi:
        assert np.abs(phi.nodal).max() <= 1e-12
    mu = uniform_mu_result.mu
    assert np.allclose(mu.mu_H, np.eye(2), atol=1e-12)
    f = uniform_mu_result.mesh.particle_area()
    assert np.allclose(mu.mu_HS, f * np.eye(2), atol=1e-12)


def test_potential_residuals(square_result, chain_result):
    for r in (square_result, chain_result):
        assert max(r.potentials.residuals) <= 1e-10


def test_potential_odd_under_reflection(square_result, mirror):
    mesh = square_result.mesh
    phi1, phi2 = (p.nodal for p in square_result.potentials.phi)
    ix = mirror(mesh, -1, 1)
    iy = mirror(mesh, 1, -1)
    # the permeability contrast amplifies roundoff to about 1e-10
    scale = 1e2 * np.abs(phi1).max()
    # phi^1 is odd in y1 and even in y2
    assert np.abs(phi1[ix] + phi1).max() <= 1e-10 * scale
    assert np.abs(phi1[iy] - phi1).max() <= 1e-10 * scale
    assert np.abs(phi2[iy] + phi2).max() <= 1e-10 * scale
    assert np.abs(phi2[ix] - phi2).max() <= 1e-10 * scale


@pytest.mark.parametrize("refine", [0, 2])
def test_dilute_limit_matches_clausius_mossotti(refine):
    spec = CellSpec(1.0, 1.0, 0.05)
    mesh = build_cell(spec.refined(refine) if refine else spec)
    mu = mu_tensors(mesh)
    cm = clausius_mossotti(mesh.particle_area(), 2e5, 1.0)
    assert mu.mu_H[0, 0] == pytest.approx(cm, rel=0.02)
    assert mu.mu_H[1, 1] == pytest.approx(cm, rel=0.02)


def test_mean_of_localisation_is_identity(square_result, chain_result):
    for r in (square_result, chain_result):
        _, area = p1_gradients(r.mesh)
        mean = np.einsum("e,eik->ik", area, r.A4.A2)
        assert np.allclose(mean, np.eye(2), atol=1e-10)


def test_energy_form_equals_average(square_result, chain_result):
    for r in (square_result, chain_result):
        mu = r.mu
        assert np.allclose(mu.mu_H_energy, mu.mu_H, rtol=1e-9, atol=1e-9 * np.abs(mu.mu_H).max())


def test_square_cell_is_isotropic(square_result):
    mu = square_result.mu
    assert mu.mu_H[0, 0] == pytest.approx(mu.mu_H[1, 1], rel=1e-3)
    assert abs(mu.mu_H[0, 1]) <= 1e-9
    assert mu.mu_HS[1, 1] == pytest.approx(0.47, rel=0.15)


def test_chain_cell_is_anisotropic(chain_result):
    mu = chain_result.mu
    assert abs(mu.mu_H[0, 1]) <= 1e-9 and abs(mu.mu_H[1, 0]) <= 1e-9
    # particles touch almost along y2, so the field concentrates in that direction
    assert mu.mu_H[1, 1] > 3 * mu.mu_H[0, 0]
    assert mu.mu_HS[1, 1] == pytest.approx(3.71, rel=0.15)


def test_monotone_in_particle_permeability(chain_mesh):
    values = [mu_tensors(chain_mesh, mu_particle=m).mu_H for m in (10.0, 1e3, 2e5)]
    for a, b in zip(values, values[1:]):
        assert np.all(np.linalg.eigvalsh(0.5 * (b - a + (b - a).T)) > 0)


def test_saturates_for_large_permeability(chain_mesh):
    a = mu_tensors(chain_mesh, mu_particle=2e5).mu_H
    b = mu_tensors(chain_mesh, mu_particle=1e6).mu_H
    assert np.abs(b - a).max() <= 1e-3 * np.abs(a).max()


def test_invalid_material():
    with pytest.raises(ValueError, match="positive"):
        MaterialParams(mu_particle=-1.0)
    with pytest.raises(ValueError, match="positive"):
        MaterialParams(mu_fluid=0.0)
    with pytest.raises(ValueError, match="nonnegative"):
        MaterialParams(alfven=-1.0)


def test_identity_localisation_gives_maxwell_stress():
    A4 = maxwell_stress_tensor(np.eye(2)[None])[0]
    d = np.eye(2)
    expected = (0.5 * (np.einsum("il,jm->mlij", d, d) + np.einsum("jl,im->mlij", d, d))
                - 0.5 * np.einsum("ml,ij->mlij", d, d))
    assert np.allclose(A4, expected)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_maxwell_stress_identities(vals):
    A = np.array(vals[:4]).reshape(1, 2, 2)
    Ht = np.array(vals[4:])
    T = maxwell_stress_tensor(A)[0]
    H = A[0] @ Ht
    stress = np.einsum("mlij,m,l->ij", T, Ht, Ht)
    scale = 1.0 + H @ H
    assert np.allclose(stress, np.outer(H, H) - 0.5 * (H @ H) * np.eye(2), atol=1e-12 * scale)
    assert np.allclose(T, np.swapaxes(T, 2, 3))
    # traceless in ij after symmetrising in ml
    tr = np.einsum("mlii->ml", T)
    assert np.allclose(tr + tr.T, 0.0, atol=1e-12 * scale)


def test_maxwell_stress_symmetries(square_result):
    T = square_result.A4.A4
    scale = np.abs(T).max()
    assert np.abs(T - np.swapaxes(T, 3, 4)).max() <= 1e-12 * scale
    tr = np.einsum("emlii->eml", T)
    assert np.abs(tr + np.swapaxes(tr, 1, 2)).max() <= 1e-12 * scale


def test_particle_field_nearly_uniform(square_result):
    # inside a highly permeable particle the field almost vanishes
    A2 = square_result.A4.A2
    part = square_result.mesh.regions == PARTICLE
    outer = np.abs(A2[~part]).max()
    assert np.abs(A2[part]).max() <= 1e-3 * outer


@settings(max_examples=10, deadline=None)
@given(mu1=st.floats(1e-2, 1e4), mu2=st.floats(1e-2, 1e4))
def test_effective_permeability_bounds(coarse_mesh, mu1, mu2):
    mu = mu_tensors(coarse_mesh, mu_particle=mu1, mu_fluid=mu2).mu_H
    f = coarse_mesh.particle_area()
    harmonic = 1.0 / (f / mu1 + (1 - f) / mu2)
    arithmetic = f * mu1 + (1 - f) * mu2
    ev = np.linalg.eigvalsh(0.5 * (mu + mu.T))
    assert ev.min() >= harmonic * (1 - 1e-9)
    assert ev.max() <= arithmetic * (1 + 1e-9)


def test_localisation_agrees_with_compute_A2(square_result):
    assert np.array_equal(compute_A2(square_result.potentials), square_result.A4.A2)
    again = compute_A4(square_result.potentials)
    assert np.array_equal(again.A4, square_result.A4.A4)


def test_independent_of_master_edge(square_mesh, chain_mesh):
    # a half-turn swaps which opposite edges act as masters
    from mrhomog.cellmesh import mesh_from_arrays
    for mesh in (square_mesh, chain_mesh):
        turned = mesh_from_arrays(-mesh.nodes, mesh.triangles, mesh.regions,
                                  mesh.width, mesh.height)
        assert not np.array_equal(turned.periodic_pairs, mesh.periodic_pairs)
        a = mu_tensors(mesh).mu_H
        b = mu_tensors(turned).mu_H
        assert np.abs(a - b).max() <= 1e-10 * np.abs(a).max()
