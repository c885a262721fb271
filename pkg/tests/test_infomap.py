import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from footprint_ergodic.infomap import (
    DeltaCloud,
    GaussianMixture,
    GridMap,
    load_map,
    map_coeffs,
    map_from_dict,
    normalize_map,
    read_pgm,
    reconstruct,
    total_mass,
    uniform_map,
    write_pgm,
)
from footprint_ergodic.spectral import SpectralBasis, Workspace

WS = Workspace((1.0, 1.0))


def two_gaussians(ws=WS):
    return GaussianMixture(ws, [0.6, 0.4], [[0.3, 0.4], [0.7, 0.7]],
                           [[0.01, 0.02], [0.015, 0.01]])


def brute_coeff(density, k, lengths=(1.0, 1.0), n=600):
    # independent midpoint quadrature with explicit cosines
    axes = [(np.arange(n) + 0.5) * L / n for L in lengths]
    W1, W2 = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([W1, W2], axis=-1)
    h = math.sqrt(np.prod([L if ko == 0 else L / 2 for ko, L in zip(k, lengths)]))
    F = np.cos(k[0] * np.pi * W1 / lengths[0]) * np.cos(k[1] * np.pi * W2 / lengths[1]) / h
    return float(np.sum(density(pts) * F) * np.prod(lengths) / n ** 2)


# -- normalization ------------------------------------------------------------------

def test_uniform_grid_normalizes_to_one():
    m = normalize_map(GridMap(WS, np.ones((100, 100))))
    assert np.allclose(m.cells, 1.0)


def test_gaussian_weight_rescaled():
    g = GaussianMixture(WS, [2.0], [[0.5, 0.5]], [[0.01, 0.01]])
    m = normalize_map(g)
    assert m.weights[0] == 1.0
    assert total_mass(m) == pytest.approx(1.0, abs=1e-6)
    # truncation mass is tiny for a centered narrow Gaussian, so scale is ~1
    assert m.scale == pytest.approx(1.0, abs=1e-4)


def test_truncated_gaussian_renormalized():
    g = GaussianMixture(WS, [1.0], [[0.0, 0.5]], [[0.04, 0.04]])
    m = normalize_map(g)
    assert m.scale == pytest.approx(2.0, rel=0.02)   # half the mass falls outside
    assert total_mass(m) == pytest.approx(1.0, abs=1e-6)


def test_delta_cloud_uniform_weights():
    m = normalize_map(DeltaCloud(WS, np.random.default_rng(0).uniform(size=(4, 2))))
    assert np.allclose(m.weights, 0.25)


def test_zero_mass_rejected():
    with pytest.raises(ValueError):
        normalize_map(GridMap(WS, np.zeros((40, 40))))


def test_negative_cells_rejected():
    with pytest.raises(ValueError):
        GridMap(WS, -np.ones((40, 40)))


# -- coefficients -------------------------------------------------------------------

def test_uniform_map_coeffs(unit_basis):
    phi = map_coeffs(uniform_map((1.0, 1.0)), unit_basis)
    assert phi[0] == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(phi[1:])) < 1e-6


def test_uniform_gmm_like_map_via_quadrature(unit_basis):
    # very wide Gaussian: compare against the brute quadrature oracle
    m = normalize_map(GaussianMixture(WS, [1.0], [[0.4, 0.6]], [[0.5, 0.3]]))
    phi = map_coeffs(m, unit_basis)
    for j in [0, 1, 10, 11, 23, 57]:
        k = tuple(unit_basis.indices[j])
        assert phi[j] == pytest.approx(brute_coeff(m.density, k), abs=1e-4)


def test_mixture_coeffs_match_oracle(unit_basis):
    m = normalize_map(two_gaussians())
    phi = map_coeffs(m, unit_basis)
    for j in [0, 3, 12, 45, 99]:
        k = tuple(unit_basis.indices[j])
        assert phi[j] == pytest.approx(brute_coeff(m.density, k), abs=2e-4)


def test_delta_cloud_coeffs_finite_sum(unit_basis):
    m = normalize_map(DeltaCloud(WS, [[0.25, 0.25], [0.75, 0.75]]))
    phi = map_coeffs(m, unit_basis)
    # k = (1, 0) is row-major index 10
    oracle = 0.5 * math.sqrt(2) * (math.cos(math.pi / 4) + math.cos(3 * math.pi / 4))
    assert phi[10] == pytest.approx(oracle, abs=1e-15)
    assert phi[0] == 1.0


def test_coarse_quadrature_rejected(unit_basis):
    with pytest.raises(ValueError):
        map_coeffs(normalize_map(two_gaussians()), unit_basis, quadrature=16)
    with pytest.raises(ValueError):
        map_coeffs(normalize_map(GridMap(WS, np.ones((20, 20)))), unit_basis)


def test_workspace_mismatch_rejected(unit_basis):
    m = normalize_map(GridMap(Workspace((2.0, 1.0)), np.ones((40, 40))))
    with pytest.raises(ValueError):
        map_coeffs(m, unit_basis)


def test_mass_consistency_all_kinds(unit_basis):
    maps = [normalize_map(two_gaussians()),
            normalize_map(GridMap(WS, np.random.default_rng(1).uniform(size=(50, 64)))),
            normalize_map(DeltaCloud(WS, np.random.default_rng(2).uniform(size=(9, 2))))]
    for m in maps:
        assert map_coeffs(m, unit_basis)[0] * unit_basis.normalizers[0] == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (40, 40), elements=st.floats(0.0, 5.0)),
       arrays(np.float64, (40, 40), elements=st.floats(0.0, 5.0)),
       st.floats(0.0, 1.0))
def test_coeffs_linear(a, b, alpha):
    basis = SpectralBasis.build((1.0, 1.0), (6, 6))
    A, B = GridMap(WS, a), GridMap(WS, b)
    mix = GridMap(WS, alpha * a + (1 - alpha) * b)
    lhs = map_coeffs(mix, basis)
    rhs = alpha * map_coeffs(A, basis) + (1 - alpha) * map_coeffs(B, basis)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


@settings(max_examples=20, deadline=None)
@given(arrays(np.float64, (64, 64), elements=st.floats(0.0, 1.0)))
def test_projection_idempotent(cells):
    if cells.sum() == 0:
        cells = cells + 1.0
    basis = SpectralBasis.build((1.0, 1.0), (10, 10))
    g = normalize_map(GridMap(WS, cells))
    phi = map_coeffs(g, basis)
    again = map_coeffs(reconstruct(phi, basis, 64), basis)
    assert np.max(np.abs(again - phi)) < 1e-6


# -- reconstruction ------------------------------------------------------------------

def test_reconstruct_uniform(unit_basis):
    phi = map_coeffs(uniform_map((1.0, 1.0)), unit_basis)
    r = reconstruct(phi, unit_basis, 50)
    assert np.max(np.abs(r.cells - 1.0)) < 1e-6


def test_reconstruct_zero(unit_basis):
    assert np.all(reconstruct(np.zeros(unit_basis.size), unit_basis, 8).cells == 0.0)


def test_reconstruct_allows_negative_ringing():
    b = SpectralBasis.build((1.0, 1.0), (4, 4))
    m = normalize_map(DeltaCloud(WS, [[0.1, 0.1]]))
    r = reconstruct(map_coeffs(m, b), b, 32)
    assert r.cells.min() < 0


def test_reconstruct_bad_resolution(unit_basis):
    with pytest.raises(ValueError):
        reconstruct(np.zeros(unit_basis.size), unit_basis, 1)


def test_reconstruction_error_shrinks_with_basis():
    m = normalize_map(two_gaussians())
    n = 80
    axes = [(np.arange(n) + 0.5) / n] * 2
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    truth = m.density(pts)
    errs = []
    for K in (4, 6, 10):
        b = SpectralBasis.build((1.0, 1.0), (K, K))
        errs.append(np.sqrt(np.mean((reconstruct(map_coeffs(m, b), b, n).cells - truth) ** 2)))
    assert errs[0] > errs[1] > errs[2]


# -- files ---------------------------------------------------------------------------

def test_map_from_dict_kinds(tmp_path):
    d = {"type": "gmm", "workspace": [1, 1],
         "components": [{"weight": 1, "mean": [0.5, 0.5], "std": 0.1},
                        {"weight": 1, "mean": [0.2, 0.3], "std": [0.05, 0.1]}]}
    g = map_from_dict(d)
    assert isinstance(g, GaussianMixture)
    assert g.variances[1] == pytest.approx([0.0025, 0.01])
    p = tmp_path / "m.json"
    import json
    p.write_text(json.dumps({"type": "grid", "workspace": [1, 1], "cells": [[1, 2], [3, 4]]}))
    assert isinstance(load_map(p), GridMap)
    c = map_from_dict({"type": "cloud", "workspace": [1, 1], "points": [[0.1, 0.2]]})
    assert isinstance(c, DeltaCloud)
    with pytest.raises(ValueError):
        map_from_dict({"type": "bogus", "workspace": [1, 1]})


def test_pgm_roundtrip(tmp_path):
    v = np.arange(12.0).reshape(3, 4)      # 3 cells along w1, 4 along w2
    p = tmp_path / "a.pgm"
    write_pgm(p, v, "test")
    text = p.read_text().splitlines()
    assert text[0] == "P2"
    assert any(line.startswith("#") for line in text)
    px = read_pgm(p)
    assert px.shape == (4, 3)              # rows are w2, columns w1
    # pixel (0, 0) is w = (0, L2): the highest w2 cell at w1 = 0
    assert px[0, 0] == round(v[0, 3] / 11 * 255)
    assert px[-1, 0] == 0 and px.max() == 255


def test_pgm_rejects_non_2d(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.zeros((2, 2, 2)))


def test_pgm_constant_image(tmp_path):
    write_pgm(tmp_path / "c.pgm", np.ones((4, 4)))
    assert np.all(read_pgm(tmp_path / "c.pgm") == 0)
