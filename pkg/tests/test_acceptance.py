"""End-to-end acceptance checks, one test per criterion.

Each test attaches its measured numbers with ``record_property`` and the
terminal summary prints one PASS/FAIL line per criterion.  Expensive
fixtures are module scoped so criteria 6 and 7 share one corpus run.
"""

import hashlib
import itertools
import time

import numpy as np
import pytest
from scipy import stats

from surfdist import hyperbolic as hyp
from surfdist import synthetic as syn
from surfdist.analysis import (
    DistanceMatrix,
    LabeledCollection,
    heatmap_export,
    heatmap_figure,
    loo_classify,
    mantel,
    pairwise_matrix,
    propagate_landmarks,
    seriate,
)
from surfdist.distances import CorrespondenceMap, CPParams, cp_distance, cwn_distance, sample_surface
from surfdist.flatten import angle_distortion, flatten
from surfdist.mesh import (
    LandmarkSet,
    geodesic_diameter,
    landmark_positions,
    normalize_mesh,
    surface_distance,
)
from surfdist.transport import solve_kantorovich

pytestmark = pytest.mark.slow

CWN_CORPUS = {"n_samples": 64}


def measured(record_property, text):
    record_property("measured", text)


@pytest.fixture(scope="module")
def corpus():
    meshes, labels = syn.family_corpus(levels=4)
    return LabeledCollection.from_meshes(meshes, [[lab] for lab in labels], ["family"])


def _directional(log, ids):
    pos = {k: i for i, k in enumerate(ids)}
    D = np.zeros((len(ids), len(ids)))
    for a, b, v, err in log:
        assert not err, err
        D[pos[a], pos[b]] = v
    return D


@pytest.fixture(scope="module")
def cp_run(corpus):
    log = []
    t = time.perf_counter()
    D = pairwise_matrix(corpus, "cP", {}, jobs=1, log=log)
    return D, _directional(log, corpus.ids), time.perf_counter() - t


@pytest.fixture(scope="module")
def cwn_run(corpus):
    log = []
    t = time.perf_counter()
    D = pairwise_matrix(corpus, "cWn", CWN_CORPUS, jobs=1, log=log)
    return D, _directional(log, corpus.ids), time.perf_counter() - t


# ----------------------------------------------------------------------------


def test_criterion_01_mobius_algebra(record_property):
    t = time.perf_counter()
    rng = np.random.default_rng(1)

    def point(k, rmax=0.9):
        return rmax * np.sqrt(rng.random(k)) * np.exp(2j * np.pi * rng.random(k))

    d_ref = abs(hyp.hyperbolic_distance(0, 0.5) - np.log(3.0))
    worst_inv = 0.0
    worst_group = 0.0
    for _ in range(1000):
        m = hyp.MobiusTransform(2 * np.pi * rng.random(), point(1)[0])
        z, w = point(2)
        worst_inv = max(worst_inv, abs(hyp.hyperbolic_distance(m(z), m(w)) - hyp.hyperbolic_distance(z, w)))
    for _ in range(200):
        a, b, c = (hyp.MobiusTransform(2 * np.pi * rng.random(), point(1)[0]) for _ in range(3))
        z = point(4)
        worst_group = max(
            worst_group,
            np.max(np.abs(hyp.compose(a, hyp.compose(b, c))(z) - hyp.compose(hyp.compose(a, b), c)(z))),
            np.max(np.abs(hyp.compose(a, hyp.inverse(a))(z) - z)),
            np.max(np.abs(hyp.compose(hyp.IDENTITY, a)(z) - a(z))),
        )
    elapsed = time.perf_counter() - t
    measured(record_property, f"|d(0,.5)-ln3|={d_ref:.1e} invariance={worst_inv:.1e} group={worst_group:.1e} t={elapsed:.2f}s")
    assert d_ref <= 1e-12
    assert worst_inv <= 1e-10
    assert worst_group <= 1e-10
    assert elapsed < 1.0


def test_criterion_02_transport_oracle(record_property):
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(50):
        n = 1 + k % 8
        C = rng.random((n, n))
        plan = solve_kantorovich(np.full(n, 1 / n), np.full(n, 1 / n), C)
        brute = min(C[np.arange(n), p].sum() for p in itertools.permutations(range(n))) / n
        worst = max(worst, abs(plan.total_cost - brute))
    elapsed = time.perf_counter() - t
    measured(record_property, f"max |simplex - brute| = {worst:.1e} over 50 instances, t={elapsed:.1f}s")
    # agreement to rounding: the two sums add the same terms in different orders
    assert worst <= 1e-14
    assert elapsed < 10.0


def test_criterion_03_flattening_conformality(record_property):
    t = time.perf_counter()
    dist, bd = [], []
    for n in (6, 12, 24):
        mesh = syn.spherical_cap(n, height=0.4)
        flat = flatten(mesh)
        dist.append(float(angle_distortion(mesh, flat.disk_coords).mean()))
        bd.append(float(np.max(np.abs(np.abs(flat.disk_coords[flat.boundary]) - 1))))
    elapsed = time.perf_counter() - t
    measured(record_property, f"mean angle distortion {['%.4f' % d for d in dist]}, boundary dev {max(bd):.1e}, t={elapsed:.1f}s")
    assert dist[0] > dist[1] > dist[2]
    assert max(bd) <= 1e-9
    assert elapsed < 30.0


def test_criterion_04_normalization(corpus, record_property):
    meshes = [corpus.mesh(i) for i in range(len(corpus))] + [syn.hemisphere(12), syn.spherical_cap(12, 0.3)]
    worst_mass = worst_id = 0.0
    for m in meshes:
        flat = flatten(normalize_mesh(m))
        worst_mass = max(worst_mass, abs(flat.mass.sum() - 1.0))
        hyper = hyp.hyperbolic_vertex_mass(flat)
        worst_id = max(worst_id, abs(hyper.sum() - flat.mass.sum()))
    measured(record_property, f"|int f - 1| <= {worst_mass:.1e}, |sum hyper deta - sum f dxdy| <= {worst_id:.1e} on {len(meshes)} meshes")
    assert worst_mass <= 1e-6
    assert worst_id <= 1e-9


C5_SHAPES = [
    ("single", 0, 18),
    ("double", 1, 18),
    ("triple", 2, 24),
    ("hemisphere", 0, 26),
    ("triple", 3, 36),
]


def _c5_mesh(fam, level, rings):
    if fam == "hemisphere":
        return normalize_mesh(syn.hemisphere(rings))
    return normalize_mesh(syn.family_shape(fam, level, n_rings=rings))


def test_criterion_05_self_and_rigid_invariance(record_property):
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = {"cP_self": 0.0, "cP_rigid": 0.0, "cWn_self": 0.0, "cWn_rigid": 0.0}
    sizes = []
    for fam, level, rings in C5_SHAPES:
        S = _c5_mesh(fam, level, rings)
        sizes.append(S.n_vertices)
        fS = flatten(S)
        sS = sample_surface(fS, S, 256, interior_only=True)
        worst["cP_self"] = max(worst["cP_self"], cp_distance(S, S, fS, fS)[0])
        worst["cWn_self"] = max(worst["cWn_self"], cwn_distance(fS, fS, sS, sS)[0])
        for _ in range(5):
            M = S.transformed(syn.random_rotation(rng), rng.normal(size=3))
            fM = flatten(M)
            sM = sample_surface(fM, M, 256, interior_only=True)
            worst["cP_rigid"] = max(worst["cP_rigid"], cp_distance(S, M, fS, fM)[0])
            worst["cWn_rigid"] = max(worst["cWn_rigid"], cwn_distance(fS, fM, sS, sM)[0])
    elapsed = time.perf_counter() - t
    measured(record_property, " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" sizes={sizes} t={elapsed:.0f}s")
    assert min(sizes) >= 1000 and max(sizes) <= 5000
    assert worst["cP_self"] <= 1e-6 and worst["cP_rigid"] <= 1e-3
    assert worst["cWn_self"] <= 1e-6 and worst["cWn_rigid"] <= 1e-3
    assert elapsed < 600


def _audit(raw, D):
    hi = np.maximum(raw, raw.T)
    off = ~np.eye(len(raw), dtype=bool)
    asym = float(np.max(np.abs(raw - raw.T)[off] / hi[off]))
    V = D.values
    slack = min(
        (V[a, b] + V[b, c] - V[a, c]) / max(V[a, b], V[b, c], V[a, c])
        for a, b, c in itertools.permutations(range(len(V)), 3)
    )
    return asym, slack


def test_criterion_06_metric_audit(cp_run, cwn_run, record_property):
    out = {}
    for name, (D, raw, elapsed) in (("cP", cp_run), ("cWn", cwn_run)):
        out[name] = _audit(raw, D) + (elapsed,)
    measured(record_property, " ".join(
        f"{k}: asym={a:.2e} tri_slack={s:+.3f} t={e:.0f}s" for k, (a, s, e) in out.items()
    ) + f" (cWn n={CWN_CORPUS['n_samples']})")
    for asym, slack, _ in out.values():
        assert asym <= 0.05
        assert slack >= -0.05


def test_criterion_07_taxonomy(cp_run, corpus, record_property):
    D = cp_run[0]
    res = loo_classify(D, corpus.labels("family"), "family")
    again = loo_classify(DistanceMatrix(D.ids, D.values, "cP"), corpus.labels("family"), "family")
    measured(record_property, f"LOO nearest-neighbour success {res.success_rate:.1f}% on {D.n} shapes")
    assert res.as_dict() == again.as_dict()
    assert res.success_rate >= 90.0


def test_criterion_08_mantel_calibration(record_property):
    rng = np.random.default_rng(8)
    P = 999

    def rand(n=20):
        X = rng.random((n, 2))
        return DistanceMatrix([f"s{i}" for i in range(n)], np.linalg.norm(X[:, None] - X[None], axis=2))

    sig = np.array([mantel(rand(), rand(), P, seed=k).significance for k in range(200)])
    ks = stats.kstest(sig, "uniform")
    A = rand()
    same = mantel(A, A, P, seed=0).significance
    measured(record_property, f"KS p={ks.pvalue:.3f} over 200 trials; D2=D1 significance={same} (1/(P+1)={1 / (P + 1)})")
    assert ks.pvalue > 0.01
    assert same == 1 / (P + 1)


@pytest.mark.parametrize("family", ["triple", "double"])
def test_criterion_09_landmark_propagation(family, record_property):
    S = normalize_mesh(syn.family_shape(family, 1))
    T = normalize_mesh(syn.smooth_deformation(S, 0.05))
    rng = np.random.default_rng(0)
    # interior faces, away from the free boundary
    centre = np.linalg.norm(S.vertices[S.faces].mean(axis=1)[:, :2], axis=1)
    faces = rng.choice(np.flatnonzero(centre < 0.6 * np.abs(S.vertices[:, :2]).max()), 10, replace=False)
    planted = LandmarkSet([f"L{i}" for i in range(10)], faces, rng.dirichlet(np.ones(3), 10))

    _, _, cmap = cp_distance(S, T)
    out = propagate_landmarks(cmap, planted, S, T)
    diam = geodesic_diameter(T)
    err = [
        surface_distance(T, (f, b), (g, c)) / diam
        for f, b, g, c in zip(planted.faces, planted.barycentric, out.faces, out.barycentric)
    ]
    ident = propagate_landmarks(CorrespondenceMap.identity(S), planted, S, S)
    id_err = float(np.max(np.abs(landmark_positions(S, ident) - landmark_positions(S, planted))))
    measured(record_property, f"{family}: max geodesic error {100 * max(err):.2f}% of diameter (mean {100 * np.mean(err):.2f}%), identity {id_err:.1e}")
    assert max(err) <= 0.02
    assert id_err <= 1e-9


def test_criterion_10_performance(record_property):
    A = normalize_mesh(syn.family_shape("double", 2, n_rings=40))
    B = normalize_mesh(syn.family_shape("triple", 2, n_rings=40))
    t = time.perf_counter()
    cp_distance(A, B)
    t_cp = time.perf_counter() - t
    t = time.perf_counter()
    fA, fB = flatten(A), flatten(B)
    sA = sample_surface(fA, A, 256, interior_only=True)
    sB = sample_surface(fB, B, 256, interior_only=True)
    cwn_distance(fA, fB, sA, sB)
    t_cwn = time.perf_counter() - t
    measured(record_property, f"cP {t_cp:.1f}s, cWn(n=256) {t_cwn:.1f}s on {A.n_vertices}/{B.n_vertices} vertices")
    assert t_cp <= 60
    assert t_cwn <= 600


def _artefacts(tmp, tag, jobs):
    meshes = [syn.family_shape(f, lv, n_rings=7) for f in ("single", "triple") for lv in (0, 1)]
    col = LabeledCollection.from_meshes(meshes, [[m.specimen_id.rstrip("01")] for m in meshes], ["family"])
    small = {"n_samples": 24, "n_theta": 16, "max_iter": 20}
    out = {}
    mats = {}
    for metric in ("cP", "cWn"):
        D = pairwise_matrix(col, metric, small, jobs=jobs)
        mats[metric] = D
        D.to_csv(tmp / f"{tag}_{metric}.csv")
        out[f"{metric}.csv"] = (tmp / f"{tag}_{metric}.csv").read_bytes()
    res = loo_classify(mats["cP"], col.labels("family"), "family")
    res.to_json(tmp / f"{tag}_classify.json")
    out["classify.json"] = (tmp / f"{tag}_classify.json").read_bytes()
    out["mantel"] = repr(mantel(mats["cP"], mats["cWn"], 999, seed=0).as_dict()).encode()
    order = seriate(mats["cP"])
    heatmap_export(mats["cP"], mats["cWn"], order, tmp / f"{tag}.ppm")
    heatmap_figure(mats["cP"], mats["cWn"], order, tmp / f"{tag}.png")
    out["ppm"] = (tmp / f"{tag}.ppm").read_bytes()
    out["png"] = (tmp / f"{tag}.png").read_bytes()
    return out


def test_criterion_11_determinism(tmp_path, record_property):
    runs = [_artefacts(tmp_path, "a", 1), _artefacts(tmp_path, "b", 1), _artefacts(tmp_path, "c", 2)]
    digests = [{k: hashlib.sha256(v).hexdigest()[:12] for k, v in r.items()} for r in runs]
    same = all(d == digests[0] for d in digests)
    measured(record_property, f"{len(digests[0])} artefacts identical across jobs=1,1,2: {same}")
    assert same, digests
