"""Matrix correlation, nearest-neighbour classification and seriation."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .matrix import DistanceMatrix


class ConstantMatrixError(ValueError):
    pass


@dataclass(frozen=True)
class MantelResult:
    r: float
    significance: float
    permutations: int
    seed: int
    null: np.ndarray  # permuted statistics, in generation order

    def as_dict(self) -> dict:
        return {"r": self.r, "significance": self.significance, "permutations": self.permutations, "seed": self.seed}


def _aligned(D1: DistanceMatrix, D2: DistanceMatrix) -> tuple[np.ndarray, np.ndarray]:
    if set(D1.ids) != set(D2.ids) or len(D1.ids) != len(D2.ids):
        raise ValueError("distance matrices have different ids")
    return D1.values, D2.reorder(D1.ids).values


def _centred_upper(D: np.ndarray) -> np.ndarray:
    x = D[np.triu_indices(len(D), 1)]
    x = x - x.mean()
    nrm = np.sqrt(x @ x)
    if not nrm > 0:
        raise ConstantMatrixError("correlation undefined for a constant matrix")
    return x / nrm


def mantel(
    D1: DistanceMatrix,
    D2: DistanceMatrix,
    permutations: int = 10000,
    seed: int = 0,
    chunk: int = 256,
) -> MantelResult:
    """One-sided Mantel test of positive association.

    ``r`` is the Pearson correlation of the strict upper triangles.  The
    rows and columns of ``D2`` are permuted jointly; the significance is
    ``(1 + #{r_perm >= r}) / (permutations + 1)``.  Matrices are aligned by
    id first.
    """
    if permutations < 99:
        raise ValueError("use at least 99 permutations")
    A, B = _aligned(D1, D2)
    n = len(A)
    if n < 3:
        raise ValueError("Mantel test needs at least 3 specimens")
    a = _centred_upper(A)
    b = _centred_upper(B)
    r = float(a @ b)
    iu, ju = np.triu_indices(n, 1)
    rng = np.random.default_rng(seed)
    null = np.empty(permutations)
    done = 0
    # b's centring and norm are permutation-invariant, so permuting the
    # centred full matrix is enough
    Bc = np.zeros_like(B)
    Bc[iu, ju] = b
    Bc = Bc + Bc.T
    while done < permutations:
        k = min(chunk, permutations - done)
        P = np.stack([rng.permutation(n) for _ in range(k)])
        vals = Bc[P[:, iu], P[:, ju]]
        null[done:done + k] = vals @ a
        done += k
    # compare with a tiny relative slack so exact ties are not lost to rounding
    hits = int(np.count_nonzero(null >= r - 1e-12 * max(1.0, abs(r))))
    sig = (1 + hits) / (permutations + 1)
    return MantelResult(r, sig, permutations, seed, null)


@dataclass(frozen=True)
class Classification:
    level: str
    success_rate: float
    assignments: list[dict]
    confusion: dict[str, dict[str, int]]

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "success_rate": self.success_rate,
            "assignments": self.assignments,
            "confusion": self.confusion,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def loo_classify(D: DistanceMatrix, labels: dict[str, str], level: str = "label") -> Classification:
    """Leave-one-out nearest-neighbour classification.

    Each specimen takes the label of its closest other specimen (smallest
    matrix index on ties).  The success rate is in percent.
    """
    if D.n < 2:
        raise ValueError("need at least two specimens")
    missing = [i for i in D.ids if not labels.get(i)]
    if missing:
        raise ValueError(f"missing labels for {missing}")
    V = np.array(D.values, dtype=np.float64)
    np.fill_diagonal(V, np.inf)
    nn = np.argmin(np.where(np.isnan(V), np.inf, V), axis=1)
    truth = [labels[i] for i in D.ids]
    pred = [truth[k] for k in nn]
    correct = sum(t == p for t, p in zip(truth, pred))
    classes = sorted(set(truth))
    confusion = {t: {p: 0 for p in classes} for t in classes}
    for t, p in zip(truth, pred):
        confusion[t][p] += 1
    assignments = [
        {"id": i, "true": t, "assigned": p, "nearest": D.ids[k], "distance": float(D.values[j, k])}
        for j, (i, t, p, k) in enumerate(zip(D.ids, truth, pred, nn.tolist()))
    ]
    return Classification(level, 100.0 * correct / D.n, assignments, confusion)


def seriate(D: DistanceMatrix) -> list[str]:
    """Order specimens by the Fiedler vector of a Gaussian affinity graph.

    The kernel width is the median off-diagonal distance.  The sign is
    fixed so the first specimen's coordinate is nonpositive and ties keep
    the input order.
    """
    n = D.n
    if n <= 2:
        return list(D.ids)
    V = D.values
    off = V[np.triu_indices(n, 1)]
    sigma = float(np.median(off))
    if not sigma > 0:
        return list(D.ids)
    W = np.exp(-((V / sigma) ** 2))
    np.fill_diagonal(W, 0.0)
    L = np.diag(W.sum(1)) - W
    _, vecs = eigh(L)
    f = vecs[:, 1]
    if f[0] > 0:
        f = -f
    order = np.argsort(f, kind="stable")
    return [D.ids[i] for i in order]


def label_counts(labels: dict[str, str]) -> dict[str, int]:
    return dict(sorted(Counter(labels.values()).items()))
