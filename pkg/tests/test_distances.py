import itertools
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from scipy.signal import peak_prominences
from scipy.sparse import csgraph
from scipy.spatial.transform import Rotation

from surfdist import hyperbolic as hyp
from surfdist import synthetic as syn
from surfdist._planar import signed_areas
from surfdist.distances import (
    CorrespondenceMap,
    CPParams,
    DegenerateAlignmentError,
    MobiusGrid,
    PeakWarp,
    RigidMotion,
    align_peak_deformation,
    area_preserving_correction,
    area_ratios,
    cp_distance,
    cw_distance,
    cwn_cost,
    cwn_cost_matrix,
    cwn_distance,
    detect_peaks,
    discrete_procrustes,
    farthest_point_order,
    match_peaks,
    read_correspondence,
    rigid_align,
    rigid_residuals,
    sample_surface,
)
from surfdist.distances.peaks import _prominence
from surfdist.flatten import flatten, recentre
from surfdist.mesh import normalize_mesh, vertex_areas

FAST = CPParams(n_samples=64, n_theta=16, max_iter=20)


@pytest.fixture(scope="module")
def pair():
    A = normalize_mesh(syn.family_shape("double", 0, n_rings=8))
    B = normalize_mesh(syn.family_shape("double", 2, n_rings=8))
    return A, B, flatten(A), flatten(B)


# ------------------------------------------------------------------ sampling


def test_sample_surface_basic(bumpy, bumpy_flat):
    s = sample_surface(bumpy_flat, bumpy, 40, interior_only=True)
    assert len(s) == 40 == len(set(s.vertices.tolist()))
    assert not np.any(bumpy_flat.boundary[s.vertices])
    assert s.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(s.weights > 0)
    inner = np.where(bumpy_flat.boundary, -np.inf, bumpy_flat.hyper_factor)
    assert s.vertices[0] == np.argmax(inner)


def test_sample_all_vertices(bumpy, bumpy_flat):
    n = int((~bumpy_flat.boundary).sum())
    s = sample_surface(bumpy_flat, bumpy, n, interior_only=True)
    np.testing.assert_array_equal(s.vertices, np.flatnonzero(~bumpy_flat.boundary))
    with pytest.raises(ValueError):
        sample_surface(bumpy_flat, bumpy, n + 1, interior_only=True)
    with pytest.raises(ValueError):
        sample_surface(bumpy_flat, bumpy, 0)


def test_farthest_point_order_oracle(cap):
    # [DERIVED] each pick maximises the graph distance to the previous picks
    order = farthest_point_order(cap, 12, 0)
    D = csgraph.dijkstra(cap.adjacency, directed=False, indices=order)
    for k in range(1, len(order)):
        dmin = D[:k].min(axis=0)
        assert dmin[order[k]] == pytest.approx(dmin.max(), rel=1e-12)


def test_pushed_samples_keep_weights(bumpy, bumpy_flat):
    s = sample_surface(bumpy_flat, bumpy, 20)
    m = hyp.MobiusTransform(0.4, 0.3 + 0.1j)
    p = s.pushed(m)
    np.testing.assert_array_equal(p.weights, s.weights)
    np.testing.assert_allclose(p.points, m(s.points))


# --------------------------------------------------------------------- peaks


def _path(n):
    i = np.arange(n - 1)
    A = sparse.coo_matrix((np.ones(n - 1), (i, i + 1)), shape=(n, n))
    return (A + A.T).tocsr()


@given(st.integers(0, 2**32 - 1), st.integers(5, 60))
def test_prominence_matches_scipy_on_a_line(seed, n):
    # [DERIVED] on a path graph, topographic prominence is scipy's prominence
    # for peaks with higher ground on both sides (scipy stops at array ends)
    x = np.random.default_rng(seed).permutation(n).astype(float)
    prom = _prominence(x, _path(n))
    inner = [
        i for i in range(1, n - 1)
        if x[i] > x[i - 1] and x[i] > x[i + 1] and x[:i].max() > x[i] and x[i + 1:].max() > x[i]
    ]
    if inner:
        ref = peak_prominences(x, inner)[0]
        np.testing.assert_allclose(prom[inner], ref)
    assert prom[np.argmax(x)] == x.max() - x.min()


def _fake_flat(mesh, h):
    z = mesh.vertices[:, 0] + 1j * mesh.vertices[:, 1]
    return SimpleNamespace(hyper_factor=h, faces=mesh.faces, disk_coords=z)


def test_detect_two_bumps(disk):
    xy = disk.vertices[:, :2]
    h = syn.bumps(xy, [(-0.5, 0), (0.5, 0)], [1.0, 0.6], [0.2, 0.2])
    peaks = detect_peaks(_fake_flat(disk, h))
    assert len(peaks) == 2
    assert peaks[0].value > peaks[1].value
    assert peaks[0].location.real < 0 < peaks[1].location.real
    assert detect_peaks(_fake_flat(disk, h), max_peaks=1)[0].vertex == peaks[0].vertex


def test_constant_density_has_no_peaks(disk):
    assert detect_peaks(_fake_flat(disk, np.ones(disk.n_vertices))) == []


def test_small_bumps_filtered(disk):
    xy = disk.vertices[:, :2]
    h = syn.bumps(xy, [(0, 0), (0.6, 0)], [1.0, 0.02], [0.3, 0.1])
    assert len(detect_peaks(_fake_flat(disk, h), min_prominence=0.05)) == 1


# ---------------------------------------------------------------- procrustes


@given(st.integers(0, 2**32 - 1))
def test_rigid_align_recovers_motion(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(20, 3))
    R = syn.random_rotation(rng)
    t = rng.normal(size=3)
    motion, resid = rigid_align(X, X @ R.T + t)
    np.testing.assert_allclose(motion.rotation, R, atol=1e-9)
    np.testing.assert_allclose(motion.translation, t, atol=1e-9)
    assert resid < 1e-9


@given(st.integers(0, 2**32 - 1))
def test_weighted_alignment_matches_scipy(seed):
    # [DERIVED] scipy's Wahba solver on centred point sets
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(2, 15, 3))
    w = rng.random(15) + 0.1
    motion, resid = rigid_align(X, Y, w)
    Xc = X - w @ X / w.sum()
    Yc = Y - w @ Y / w.sum()
    rot, _ = Rotation.align_vectors(Yc, Xc, weights=w)
    r = Xc @ rot.as_matrix().T - Yc
    ref = np.sqrt(np.sum(w * np.sum(r * r, axis=1)))
    assert resid == pytest.approx(ref, rel=1e-9, abs=1e-12)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_batched_residuals_match_single(seed, refl):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(12, 3))
    Ys = rng.normal(size=(4, 12, 3))
    w = rng.random(12)
    batch = rigid_residuals(X, Ys, w, refl)
    single = [rigid_align(X, Y, w, refl)[1] for Y in Ys]
    np.testing.assert_allclose(batch, single, rtol=1e-9, atol=1e-12)


def test_reflection_only_helps_when_allowed(rng):
    X = rng.normal(size=(10, 3))
    Y = X * [1, 1, -1]
    assert rigid_align(X, Y, allow_reflection=True)[1] < 1e-10
    assert rigid_align(X, Y)[1] > 0.1


def test_degenerate_alignment():
    X = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(DegenerateAlignmentError):
        rigid_align(X, X)


def test_motion_roundtrip(rng):
    m = RigidMotion(syn.random_rotation(rng), rng.normal(size=3))
    back = RigidMotion.from_list(m.as_list())
    np.testing.assert_array_equal(back.rotation, m.rotation)
    assert m.angle_to(m) == pytest.approx(0.0, abs=1e-7)


def test_discrete_procrustes_label_mismatch():
    with pytest.raises(ValueError):
        discrete_procrustes(np.zeros((4, 3)), np.zeros((5, 3)))


# ------------------------------------------------------------ cWn and cW


def _brute_cwn(VA, VB, w, step, n_theta):
    out = np.empty((len(VA), len(VB)))
    for i, j in itertools.product(range(len(VA)), range(len(VB))):
        out[i, j] = min(
            np.sum(w[:, None] * np.abs(VA[i] - np.roll(VB[j], -k * step, axis=1))) for k in range(n_theta)
        )
    return out


def test_cwn_kernel_matches_brute_force(rng):
    from surfdist.distances.conformal import _cwn_matrix

    VA = rng.random((4, 3, 12))
    VB = rng.random((5, 3, 12))
    w = rng.random(3)
    np.testing.assert_allclose(_cwn_matrix(VA, VB, w, 3, 4), _brute_cwn(VA, VB, w, 3, 4), rtol=1e-12)


def test_cwn_self_distance_zero(pair):
    A, _, fA, _ = pair
    s = sample_surface(fA, A, 30, interior_only=True)
    val, plan = cwn_distance(fA, fA, s, s, n_theta=16, n_radial=6, n_angular=16)
    assert val == pytest.approx(0.0, abs=1e-14)
    assert cwn_cost(s.points[3], s.points[3], 0.5, fA, fA, 16, 6, 16) == 0.0


def test_cwn_rotation_grid_must_divide():
    with pytest.raises(ValueError):
        from surfdist.distances.conformal import _shift_step

        _shift_step(64, 10)


def test_cwn_mobius_invariant(pair):
    # the density is pushed forward exactly, so the cost matrix is unchanged
    A, B, fA, fB = pair
    sA = sample_surface(fA, A, 20, interior_only=True)
    sB = sample_surface(fB, B, 20, interior_only=True)
    m = hyp.MobiusTransform(1.0, 0.3 - 0.2j)
    C0 = cwn_cost_matrix(fA, fB, sA, sB, 0.5, 16, 6, 16)
    C1 = cwn_cost_matrix(recentre(fA, m), fB, sA.pushed(m), sB, 0.5, 16, 6, 16)
    np.testing.assert_allclose(C1, C0, rtol=1e-9, atol=1e-12)


def test_cwn_symmetric(pair):
    A, B, fA, fB = pair
    sA = sample_surface(fA, A, 20, interior_only=True)
    sB = sample_surface(fB, B, 20, interior_only=True)
    ab = cwn_distance(fA, fB, sA, sB, 0.5, 16, 6, 16)[0]
    ba = cwn_distance(fB, fA, sB, sA, 0.5, 16, 6, 16)[0]
    assert ab == pytest.approx(ba, rel=1e-12)


def test_cw_properties(pair):
    A, B, fA, fB = pair
    sA = sample_surface(fA, A, 16, interior_only=True)
    sB = sample_surface(fB, B, 16, interior_only=True)
    assert cw_distance(fA, fA, sA, sA, MobiusGrid(4, (0.0,), 4)) == pytest.approx(0.0, abs=1e-12)
    coarse = cw_distance(fA, fB, sA, sB, MobiusGrid(4, (0.0, 0.3), 4))
    fine = cw_distance(fA, fB, sA, sB, MobiusGrid(4, (0.0, 0.3), 8))
    assert 0 < fine <= coarse
    with pytest.raises(ValueError):
        cw_distance(fA, fB, sA, sB, [])


# ------------------------------------------------------------------ deformation


def test_warp_inverse_and_boundary():
    warp = PeakWarp(np.array([0.2 + 0.1j, -0.3j]), np.array([0.1, 0.05j]), 0.3)
    assert warp.lipschitz_bound() < 1
    z = 0.9 * np.exp(1j * np.linspace(0, 6, 40)) * np.linspace(0, 1, 40)
    np.testing.assert_allclose(warp.inverse(warp(z)), z, atol=1e-12)
    c = np.exp(1j * np.linspace(0, 6, 9))
    np.testing.assert_allclose(warp(c), c, atol=1e-15)


def test_align_peaks_hits_targets_and_keeps_anchor():
    src = np.array([0.5 + 0.1j, -0.5 + 0.2j])
    dst = np.array([0.53 + 0.08j, -0.48 + 0.23j])
    warp = align_peak_deformation(src, dst, anchors=[0j])
    assert warp.lipschitz_bound() < 1
    np.testing.assert_allclose(warp(src), dst, atol=1e-12)
    assert abs(warp(0j)) < 1e-15
    # the warped disk mesh stays embedded
    mesh = syn.unit_disk(8)
    z = mesh.vertices[:, 0] + 1j * mesh.vertices[:, 1]
    assert np.all(signed_areas(warp(z), mesh.faces) > 0)


def test_align_peaks_drops_pairs_that_would_fold():
    # a large move right next to a fixed anchor cannot be injective
    warp = align_peak_deformation([0.05, 0.6j], [0.3, 0.62j], match_radius=2.0, anchors=[0j])
    assert warp.lipschitz_bound() < 1
    assert abs(warp(0.6j) - 0.62j) < 1e-12
    assert abs(warp(0.05) - 0.3) > 0.1


def test_match_peaks_greedy_oracle():
    src = np.array([0.0, 0.5])
    dst = np.array([0.45, 0.05, 0.9j])
    pairs = match_peaks(src, dst, radius=1.0)
    assert sorted(pairs) == [(0, 1), (1, 0)]
    assert match_peaks(src, dst, radius=0.01) == []


def test_area_correction_reduces_residual(cap, cap_flat):
    disk = normalize_mesh(syn.unit_disk(10))
    fd = flatten(disk)
    # a map from the planar disk to the cap through the two flattenings
    res0 = np.max(np.abs(area_ratios(fd.disk_coords, disk.faces, disk.face_areas, cap, cap_flat) - 1))
    out = area_preserving_correction(
        fd.disk_coords, disk.faces, disk.face_areas, cap, cap_flat, boundary=fd.boundary, tol=0.05
    )
    assert out.history[0] == pytest.approx(res0)
    assert all(b <= a for a, b in zip(out.history, out.history[1:]))
    assert out.residual < 0.5 * res0
    np.testing.assert_allclose(np.abs(out.images[fd.boundary]), 1.0, atol=1e-12)


# ------------------------------------------------------------------ cP


def test_cp_self_distance(pair):
    A, _, fA, _ = pair
    val, motion, cmap = cp_distance(A, A, fA, fA, FAST)
    assert val <= 1e-6
    assert motion.angle_to(RigidMotion.identity()) < 1e-4


def test_cp_rigid_invariance(rng):
    # the triple-bump pattern has no symmetry, so the motion itself is recovered
    A = normalize_mesh(syn.family_shape("triple", 1, n_rings=8))
    R = syn.random_rotation(rng)
    moved = A.transformed(R, rng.normal(size=3))
    val, motion, _ = cp_distance(A, moved, params=FAST)
    assert val <= 1e-3
    assert motion.angle_to(RigidMotion(R, np.zeros(3))) < 1e-2


def test_cp_map_value_is_weighted_procrustes(pair):
    A, B, fA, fB = pair
    val, motion, cmap = cp_distance(A, B, fA, fB, FAST)
    P = cmap.image_points(B)
    ref_motion, ref = rigid_align(A.vertices, P, vertex_areas(A))
    assert cmap.value == pytest.approx(ref, rel=1e-12)
    np.testing.assert_allclose(motion.rotation, ref_motion.rotation, atol=1e-12)
    assert val > 0
    assert cmap.source_id == A.specimen_id and cmap.target_id == B.specimen_id
    assert np.isfinite(cmap.residual)


def test_cp_exactly_symmetric(pair):
    A, B, fA, fB = pair
    assert cp_distance(A, B, fA, fB, FAST)[0] == cp_distance(B, A, fB, fA, FAST)[0]


def test_cp_bidirectional_never_worse(pair):
    A, B, fA, fB = pair
    one = cp_distance(A, B, fA, fB, CPParams(**{**FAST.__dict__, "bidirectional": False}))[0]
    both = cp_distance(A, B, fA, fB, FAST)[0]
    assert both <= one


def test_cp_requires_unit_area(pair):
    A, B, _, _ = pair
    with pytest.raises(ValueError, match="unit area"):
        cp_distance(A.transformed(np.eye(3), scale=2.0), B, params=FAST)


def test_correspondence_identity_and_csv(tmp_path, cap):
    ident = CorrespondenceMap.identity(cap)
    np.testing.assert_allclose(ident.image_points(cap), cap.vertices, atol=1e-15)
    p = tmp_path / "map.csv"
    ident.to_csv(p)
    back = read_correspondence(p)
    np.testing.assert_array_equal(back.faces, ident.faces)
    np.testing.assert_array_equal(back.barycentric, ident.barycentric)
    assert back.method == "identity" and back.value == 0.0
    with pytest.raises(ValueError):
        CorrespondenceMap("a", "b", [0], [[1, 0, 0]], residual=float("nan"))
