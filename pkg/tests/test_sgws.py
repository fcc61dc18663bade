import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from spectralweight.errors import ArgumentError
from spectralweight.mesh import TriangleMesh
from spectralweight.sgws import (
    SignatureMatrix,
    compute_signature,
    design_filter_bank,
    scaling_coefficient,
    scaling_kernel,
    wavelet_coefficient,
    wavelet_kernel,
)
from spectralweight.pipeline import synth_radius
from spectralweight.shapes import fibonacci_directions, icosphere, random_rotation, sphere_mesh
from spectralweight.spectral import eigensystem


def brute_force(eigs, resolution):
    """Re-sum both coefficient families vertex by vertex with scalar math."""
    lam = eigs.eigenvalues.tolist()
    X = eigs.eigenvectors
    lmax = lam[-1]
    lmin = lmax / 20.0
    out = []
    for L in range(1, resolution + 1):
        if L == 1:
            scales = [2.0 / lmin]
        else:
            r = (lmin / lmax) ** (1.0 / (L - 1))
            scales = [2.0 / lmin * r**k for k in range(L)]
        for t in scales:
            out.append([math.fsum(t * l * math.exp(-t * l) * X[j, i] ** 2 for i, l in enumerate(lam))
                        for j in range(eigs.vertex_count)])
        out.append([math.fsum(math.exp(-1) * math.exp(-((l / (0.6 * lmin)) ** 4)) * X[j, i] ** 2
                              for i, l in enumerate(lam))
                    for j in range(eigs.vertex_count)])
    return np.array(out)


# ---------------------------------------------------------------- filter bank


def test_kernel_values():
    assert_allclose(wavelet_kernel(1.0), math.exp(-1), rtol=1e-15)
    assert_allclose(wavelet_kernel(1.0), 0.367879, atol=5e-7)
    assert wavelet_kernel(0.0) == 0.0
    x = np.linspace(0, 10, 10001)
    assert x[np.argmax(wavelet_kernel(x))] == 1.0
    # gain makes the low-pass value at zero equal the band-pass peak
    assert_allclose(scaling_kernel(0.0, 3.0), math.exp(-1), rtol=1e-15)


@pytest.mark.parametrize("R, p", [(1, 2), (2, 5), (3, 9), (4, 14)])
def test_signature_size(R, p):
    bank = design_filter_bank(40.0, R)
    assert bank.signature_size == p
    assert len(bank.row_labels()) == p
    assert [len(s) for s in bank.levels] == list(range(1, R + 1))


def test_scales_log_spaced_in_range():
    lam = 37.0
    bank = design_filter_bank(lam, 4)
    for scales in bank.levels[1:]:
        s = np.array(scales)
        assert_allclose(s[0], 2 / (lam / 20), rtol=1e-12)
        assert_allclose(s[-1], 2 / lam, rtol=1e-12)
        assert np.all(np.diff(s) < 0)
        assert_allclose(np.diff(np.log(s)), np.diff(np.log(s))[0], rtol=1e-12)
    assert bank.gain > 0


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_bad_lambda_max(bad):
    with pytest.raises(ArgumentError):
        design_filter_bank(bad, 2)


# ---------------------------------------------------------------- coefficients


def test_matches_brute_force(sphere200_eigs):
    for R in (1, 2, 3):
        sig = compute_signature(sphere200_eigs, design_filter_bank(sphere200_eigs.lambda_max, R)).data
        ref = brute_force(sphere200_eigs, R)
        assert sig.shape == (design_filter_bank(1.0, R).signature_size, 200)
        assert_allclose(sig, ref, rtol=1e-12, atol=0)


def test_row_layout(sphere200_eigs):
    e = sphere200_eigs
    bank = design_filter_bank(e.lambda_max, 2)
    sig = compute_signature(e, bank).data
    (t1,), (t2a, t2b) = bank.levels
    for j in (0, 57, 199):
        expect = [
            wavelet_coefficient(e, t1, j),
            scaling_coefficient(e, j),
            wavelet_coefficient(e, t2a, j),
            wavelet_coefficient(e, t2b, j),
            scaling_coefficient(e, j, bank),
        ]
        assert_allclose(sig[:, j], expect, rtol=1e-12)
    assert_array_equal(sig[1], sig[4])


def test_small_scale_limit(sphere200_eigs):
    assert wavelet_coefficient(sphere200_eigs, 1e-300, 3) == pytest.approx(0.0, abs=1e-290)


def test_single_term_scaling(sphere200_eigs):
    bank = design_filter_bank(sphere200_eigs.lambda_max)
    e = sphere200_eigs.truncated(1)
    for j in (0, 100):
        assert_allclose(scaling_coefficient(e, j, bank), math.exp(-1) / e.mass.sum(), rtol=1e-6)


def test_index_and_scale_errors(sphere200_eigs):
    with pytest.raises(ArgumentError):
        wavelet_coefficient(sphere200_eigs, 1.0, 200)
    with pytest.raises(ArgumentError):
        scaling_coefficient(sphere200_eigs, -1)
    with pytest.raises(ArgumentError):
        wavelet_coefficient(sphere200_eigs, 0.0, 0)


def test_mismatched_bank(sphere200_eigs):
    bank = design_filter_bank(sphere200_eigs.lambda_max * (1 + 1e-5), 2)
    with pytest.raises(ArgumentError):
        compute_signature(sphere200_eigs, bank)


def test_entries_nonnegative_and_scaling_rows_positive(bumpy_mesh):
    e = eigensystem(bumpy_mesh, 120)
    sig = compute_signature(e, design_filter_bank(e.lambda_max, 3)).data
    assert np.all(np.isfinite(sig))
    assert np.all(sig >= 0)
    assert np.all(sig[[1, 4, 8]] > 0)


# ---------------------------------------------------------------- symmetry and invariance


@pytest.fixture(scope="module")
def icosphere3_signature():
    mesh = icosphere(3)
    e = eigensystem(mesh, 301)
    return mesh, e, compute_signature(e, design_filter_bank(e.lambda_max)).data


def test_antipodal_vertices_agree(icosphere3_signature):
    mesh, _, sig = icosphere3_signature
    v = mesh.vertices
    anti = np.array([np.argmin(np.linalg.norm(v + v[j], axis=1)) for j in range(len(v))])
    assert_allclose(np.linalg.norm(v[anti] + v, axis=1), 0, atol=1e-12)
    assert_allclose(sig[:, anti], sig, rtol=1e-6)


def test_scaling_row_uniform_on_icosahedron():
    # every vertex of the base icosahedron is equivalent under its symmetry group
    e = eigensystem(icosphere(0), 11)
    s = [scaling_coefficient(e, j) for j in range(12)]
    assert_allclose(s, s[0], rtol=1e-6)


def test_scaling_row_uniform_on_vertex_orbit(icosphere3_signature):
    # the 12 icosahedron corners remain one orbit after subdivision
    _, _, sig = icosphere3_signature
    assert_allclose(sig[1, :12], sig[1, 0], rtol=1e-6)
    assert_allclose(sig[4, :12], sig[4, 0], rtol=1e-6)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rigid_motion_invariance(seed):
    d = fibonacci_directions(250)
    bumps = [(np.array([0.0, 0.6, 0.8]), 0.05, 0.4)]
    mesh = TriangleMesh(d * synth_radius(d, (3.0, 1.5, 1.0), bumps)[:, None], sphere_mesh(250).faces)
    rng = np.random.default_rng(seed)
    moved = mesh.transformed(random_rotation(rng), rng.normal(size=3) * 30)
    a, b = eigensystem(mesh, 80), eigensystem(moved, 80)
    sa = compute_signature(a, design_filter_bank(a.lambda_max)).data
    sb = compute_signature(b, design_filter_bank(b.lambda_max)).data
    assert np.max(np.abs(sa - sb) / np.abs(sa).max(axis=0)) <= 1e-6


def test_deterministic(bumpy_mesh):
    runs = []
    for _ in range(2):
        e = eigensystem(bumpy_mesh, 100)
        runs.append(compute_signature(e, design_filter_bank(e.lambda_max)).data.tobytes())
    assert runs[0] == runs[1]


def test_identical_bumps_have_similar_apices():
    base = icosphere(4)
    v = base.vertices
    # two adjacent icosahedron corners; a half-turn about their edge midpoint swaps them
    a, b = 0, int(np.argmin(np.linalg.norm(v[:12] - v[0], axis=1) + 10 * (np.arange(12) == 0)))
    r = np.ones(len(v))
    for c in (v[a], v[b]):
        ang = np.arccos(np.clip(v @ c, -1, 1))
        r += 0.15 * np.exp(-0.5 * (ang / 0.2) ** 2)
    mesh = TriangleMesh(v * r[:, None], base.faces)
    e = eigensystem(mesh, 301)
    sig = compute_signature(e, design_filter_bank(e.lambda_max)).data
    assert np.max(np.abs(sig[:, a] - sig[:, b]) / sig[:, a]) <= 1e-3


def test_binary_round_trip(sphere200_eigs):
    sig = compute_signature(sphere200_eigs, design_filter_bank(sphere200_eigs.lambda_max))
    blob = sig.to_bytes("ab" * 32)
    assert blob[:6] == b"SWSIG1"
    assert_array_equal(SignatureMatrix.from_bytes(blob).data, sig.data)
