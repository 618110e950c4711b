"""Pairwise distance matrices over a labelled collection of surfaces."""

from __future__ import annotations

import csv
import logging
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..flatten import flatten
from ..mesh import LandmarkSet, TriMesh, landmark_positions, load_mesh, normalize_mesh, read_landmarks

logger = logging.getLogger(__name__)

METRICS = ("cP", "cWn", "cW", "ODLP")
JOBS_ENV = "SURFDIST_JOBS"


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric matrix of distances between named specimens.

    Construction averages ``values`` with its transpose and zeroes the
    diagonal; the largest raw discrepancy ``|D_ij - D_ji|`` is kept in
    ``raw_asymmetry``.  ``failures`` lists pairs that could not be
    computed (their cells are NaN).
    """

    ids: tuple[str, ...]
    values: np.ndarray
    metric: str = ""
    raw_asymmetry: float = 0.0
    failures: tuple[tuple[str, str, str], ...] = ()

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        if len(set(ids)) != len(ids):
            raise ValueError("specimen ids must be unique")
        D = np.array(self.values, dtype=np.float64)
        if D.shape != (len(ids), len(ids)):
            raise ValueError(f"matrix shape {D.shape} does not match {len(ids)} ids")
        fin = np.isfinite(D) & np.isfinite(D.T)
        asym = float(np.max(np.abs(D - D.T)[fin], initial=0.0))
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
        if np.any(D[np.isfinite(D)] < 0):
            raise ValueError("distances must be nonnegative")
        D.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", D)
        object.__setattr__(self, "raw_asymmetry", max(float(self.raw_asymmetry), asym))
        object.__setattr__(self, "failures", tuple(tuple(f) for f in self.failures))

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def complete(self) -> bool:
        return not self.failures and bool(np.all(np.isfinite(self.values)))

    def upper(self) -> np.ndarray:
        return self.values[np.triu_indices(self.n, 1)]

    def reorder(self, ids: Sequence[str]) -> "DistanceMatrix":
        pos = {k: i for i, k in enumerate(self.ids)}
        if sorted(ids) != sorted(self.ids):
            raise ValueError("id sets differ")
        idx = [pos[k] for k in ids]
        return DistanceMatrix(tuple(ids), self.values[np.ix_(idx, idx)], self.metric, self.raw_asymmetry, self.failures)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([self.metric or ""] + list(self.ids))
            for i, row in zip(self.ids, self.values.tolist()):
                w.writerow([i] + ["%.17g" % x for x in row])


def read_matrix(path, metric: str | None = None) -> DistanceMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    ids = rows[0][1:]
    if [r[0] for r in rows[1:]] != ids:
        raise ValueError(f"{path}: row ids do not match column ids")
    vals = np.array([[float(x) for x in r[1:]] for r in rows[1:]]).reshape(len(ids), len(ids))
    return DistanceMatrix(tuple(ids), vals, metric or rows[0][0])


@dataclass(frozen=True)
class Specimen:
    id: str
    mesh_path: str
    labels: tuple[str, ...] = ()
    landmarks_path: str | None = None


@dataclass(frozen=True)
class LabeledCollection:
    """Specimens with taxonomic labels at one or more named levels."""

    specimens: tuple[Specimen, ...]
    levels: tuple[str, ...] = ()
    _meshes: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        ids = [s.id for s in self.specimens]
        if len(set(ids)) != len(ids):
            raise ValueError("specimen ids must be unique")
        for s in self.specimens:
            if len(s.labels) != len(self.levels):
                raise ValueError(f"{s.id}: expected {len(self.levels)} labels, got {len(s.labels)}")
            if any(not lab for lab in s.labels):
                raise ValueError(f"{s.id}: empty label")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.specimens)

    def __len__(self):
        return len(self.specimens)

    def labels(self, level: str | int = 0) -> dict[str, str]:
        k = level if isinstance(level, int) else self.levels.index(level)
        return {s.id: s.labels[k] for s in self.specimens}

    def mesh(self, i: int) -> TriMesh:
        if i not in self._meshes:
            s = self.specimens[i]
            self._meshes[i] = load_mesh(s.mesh_path, specimen_id=s.id)
        return self._meshes[i]

    @classmethod
    def from_meshes(cls, meshes: Sequence[TriMesh], labels: Sequence[Sequence[str]] | None = None,
                    levels: Sequence[str] = ()) -> "LabeledCollection":
        labels = labels or [()] * len(meshes)
        specs = tuple(Specimen(m.specimen_id, "", tuple(lab)) for m, lab in zip(meshes, labels))
        col = cls(specs, tuple(levels))
        col._meshes.update(dict(enumerate(meshes)))
        return col


def read_manifest(path) -> LabeledCollection:
    """CSV ``id,mesh_path,label1,...``; the header names the label levels.

    A column named ``landmarks`` (anywhere after ``mesh_path``) gives a
    landmark file per specimen.  Relative paths resolve against the
    manifest's directory.
    """
    base = Path(path).parent
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or [h.strip() for h in rows[0][:2]] != ["id", "mesh_path"]:
        raise ValueError(f"{path}: manifest must start with columns id,mesh_path")
    head = [h.strip() for h in rows[0]]
    lm_col = head.index("landmarks") if "landmarks" in head else None
    level_cols = [k for k in range(2, len(head)) if k != lm_col]
    specs = []
    for r in rows[1:]:
        r = [x.strip() for x in r]
        mp = str(base / r[1]) if not os.path.isabs(r[1]) else r[1]
        lm = None
        if lm_col is not None and r[lm_col]:
            lm = r[lm_col] if os.path.isabs(r[lm_col]) else str(base / r[lm_col])
        specs.append(Specimen(r[0], mp, tuple(r[k] for k in level_cols), lm))
    return LabeledCollection(tuple(specs), tuple(head[k] for k in level_cols))


# ------------------------------------------------------------- pair worker

_STATE: dict = {}


def _prepare(meshes, metric, params):
    from ..distances import sample_surface

    meshes = [normalize_mesh(m) for m in meshes]
    flats = [flatten(m) for m in meshes]
    samples = None
    if metric in ("cWn", "cW"):
        n = params.get("n_samples", 256) if metric == "cWn" else params.get("cw_samples", 64)
        samples = [sample_surface(f, m, min(n, int((~f.boundary).sum())), interior_only=True)
                   for f, m in zip(flats, meshes)]
    return meshes, flats, samples


def _init_worker(meshes, metric, params):
    _STATE["data"] = _prepare(meshes, metric, params)
    _STATE["metric"] = metric
    _STATE["params"] = params


def _cp_params(params: dict):
    from ..distances import CPParams

    return CPParams(**{k: v for k, v in params.items() if k in CPParams.__dataclass_fields__})


def _pair_value(i: int, j: int) -> tuple[int, int, float, str, np.ndarray | None]:
    from ..distances import MobiusGrid, cp_distance, cw_distance, cwn_distance, disk_images

    meshes, flats, samples = _STATE["data"]
    metric, params = _STATE["metric"], _STATE["params"]
    try:
        if metric == "cP":
            v, _, cmap = cp_distance(meshes[i], meshes[j], flats[i], flats[j], _cp_params(params))
            return i, j, float(v), "", disk_images(cmap, meshes[j], flats[j])
        elif metric == "cWn":
            v = cwn_distance(flats[i], flats[j], samples[i], samples[j], params.get("R", 0.5),
                             params.get("n_theta", 64), params.get("n_radial", 16), params.get("n_angular", 64))[0]
        elif metric == "cW":
            v = cw_distance(flats[i], flats[j], samples[i], samples[j], MobiusGrid())
        else:
            raise ValueError(f"unknown metric {metric!r}")
        return i, j, float(v), "", None
    except Exception as exc:  # recorded per pair, never fatal for the matrix
        return i, j, float("nan"), f"{type(exc).__name__}: {exc}", None


def compose_refine(meshes, flats, values: np.ndarray, images: dict, params: dict, max_sweeps: int = 3) -> int:
    """Improve cP values using maps composed through a third specimen.

    For every ordered pair ``(i, j)`` the composition ``i -> k -> j`` with
    the smallest uncorrected value is area-corrected from that starting
    point, and it replaces the current map if its corrected value is
    lower.  ``values`` holds directional values and ``images`` the disk
    images of the current maps; both are updated in place, and ``values``
    is finally symmetrised by taking the smaller direction.  Returns the number of accepted
    replacements.  The sweep order is fixed, so the result is
    deterministic.
    """
    from ..distances import compose_images, map_value, refine_map

    cp = _cp_params(params)
    N = len(meshes)
    accepted = 0
    for _ in range(max_sweeps):
        changed = 0
        for i in range(N):
            for j in range(N):
                if i == j or (i, j) not in images:
                    continue
                best, best_z = values[i, j], None
                for k in range(N):
                    if k in (i, j) or (i, k) not in images or (k, j) not in images:
                        continue
                    if values[i, k] + values[k, j] >= best:
                        continue
                    z = compose_images(images[i, k], images[k, j], meshes[k], flats[k])
                    v = map_value(meshes[i], meshes[j], flats[j], z, cp.allow_reflection)
                    if v < best:
                        best, best_z = v, z
                if best_z is None:
                    continue
                cmap, z = refine_map(meshes[i], meshes[j], flats[j], best_z, cp)
                if cmap.value < values[i, j]:
                    logger.debug("cP %d -> %d: %.6g improved to %.6g by composition", i, j, values[i, j], cmap.value)
                    values[i, j] = cmap.value
                    images[i, j] = z
                    changed += 1
        accepted += changed
        if not changed:
            break
    values[...] = np.minimum(values, values.T)
    return accepted


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get(JOBS_ENV, "1")))
    except ValueError:
        return 1


def odlp_matrix(ids: Sequence[str], landmark_sets: Sequence[LandmarkSet], meshes: Sequence[TriMesh]) -> "DistanceMatrix":
    """Discrete Procrustes distances between landmark configurations (matched by label)."""
    from ..distances import discrete_procrustes

    labels = landmark_sets[0].labels
    pts = [landmark_positions(m, lm.subset(labels)) for m, lm in zip(meshes, landmark_sets)]
    N = len(ids)
    D = np.zeros((N, N))
    for i in range(N):
        for j in range(i + 1, N):
            D[i, j] = D[j, i] = discrete_procrustes(pts[i], pts[j])
    return DistanceMatrix(tuple(ids), D, "ODLP")


def pairwise_matrix(
    collection: LabeledCollection,
    metric: str = "cP",
    params: dict | None = None,
    jobs: int | None = None,
    both_directions: bool = True,
    log: list | None = None,
) -> DistanceMatrix:
    """All pairwise distances of ``collection`` under ``metric``.

    ``both_directions`` evaluates ``d(i, j)`` and ``d(j, i)`` and averages
    them (the raw asymmetry is recorded); otherwise only ``i < j`` is
    computed.  Results are assembled by pair index, so they do not depend
    on ``jobs`` or on completion order.  ``log`` receives one
    ``(id_i, id_j, value, error)`` tuple per evaluated pair.

    For cP the pairwise values are then improved by
    :func:`compose_refine` unless ``params["compose"]`` is false; the
    logged values are the refined ones.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")
    N = len(collection)
    if N < 2:
        raise ValueError("need at least two specimens")
    params = dict(params or {})
    ids = collection.ids
    meshes = [collection.mesh(i) for i in range(N)]
    if metric == "ODLP":
        sets = []
        for s, m in zip(collection.specimens, meshes):
            if not s.landmarks_path:
                raise ValueError(f"{s.id}: ODLP needs a landmark file")
            sets.append(read_landmarks(s.landmarks_path, m))
        return odlp_matrix(ids, sets, meshes)
    pairs = [(i, j) for i in range(N) for j in range(N) if i != j and (both_directions or i < j)]
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1:
        _init_worker(meshes, metric, params)
        results = [_pair_value(i, j) for i, j in pairs]
    else:
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(jobs, ctx, initializer=_init_worker, initargs=(meshes, metric, params)) as ex:
            results = list(ex.map(_pair_value, *zip(*pairs), chunksize=1))
    D = np.zeros((N, N))
    failures = []
    for i, j, v, err, _ in results:
        D[i, j] = v
        if not both_directions:
            D[j, i] = v
        if err:
            failures.append((ids[i], ids[j], err))
            logger.warning("%s %s-%s failed: %s", metric, ids[i], ids[j], err)
    if metric == "cP" and params.get("compose", True) and N > 2 and not failures:
        images = {(i, j): z for i, j, _, _, z in results}
        meshes_n, flats_n = (_STATE["data"][:2] if jobs == 1 else _prepare(meshes, metric, params)[:2])
        n = compose_refine(meshes_n, flats_n, D, images, params)
        logger.info("cP composition refinement replaced %d maps", n)
    if log is not None:
        for i, j, _, err, _ in results:
            log.append((ids[i], ids[j], D[i, j], err))
    return DistanceMatrix(ids, D, metric, failures=tuple(failures))
