"""Artifact correction by independent component analysis.

PCA whitening (on top of a cyclic Jacobi eigensolver), symmetric FastICA
with a tanh contrast, kurtosis diagnostics and component removal.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from orgsim import container
from orgsim.errors import ConvergenceError, FormatError, InvalidArgument, RankError
from orgsim.signal.eeg import EEGRecording

SYMMETRY_TOL = 1e-10
OFF_DIAGONAL_TOL = 1e-12
MAX_SWEEPS = 100
EIGEN_FLOOR = 1e-12
CLUSTER_TOL = 1e-10
KURTOSIS_THRESHOLD = 5.0


@lru_cache(maxsize=16)
def _round_robin(n: int):
    """Disjoint (p, q) pairings covering every pair once per sweep (circle method)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = sorted((min(p, q), max(p, q)) for p, q in pairs if p < n and q < n)
        if pairs:
            arr = np.array(pairs)
            rounds.append((arr[:, 0], arr[:, 1]))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm(a: np.ndarray) -> float:
    return float(np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2)))


def jacobi_eigh(a):
    """Eigen-decompose a symmetric matrix with cyclic Jacobi rotations.

    Each sweep visits every off-diagonal pair once, in round-robin order so
    that the rotations of a round touch disjoint rows and can be applied as
    one orthogonal matrix. Sweeps stop when the off-diagonal Frobenius norm
    is at most 1e-12 (relative to the matrix norm once that exceeds 1) or
    after 100 sweeps.

    Returns ``(w, v)`` with eigenvalues descending and eigenvectors in the
    columns of ``v``, each with its largest entry positive. Within clusters
    of eigenvalues closer than 1e-10 (relative) the basis is canonicalized,
    so a near-multiple of the identity comes back unrotated.
    """
    a = np.array(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("matrix has non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
        raise InvalidArgument("matrix is not symmetric")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    a_orig = a.copy()
    v = np.eye(n)
    tol = OFF_DIAGONAL_TOL * max(1.0, float(np.linalg.norm(a)))
    rounds = _round_robin(n)
    for _ in range(MAX_SWEEPS):
        if _off_norm(a) <= tol:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            with np.errstate(over="ignore"):  # subnormal apq: tau -> inf, t -> 0
                tau = np.where(active, (a[q, q] - a[p, p]) / (2.0 * np.where(active, apq, 1.0)), 0.0)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            j = np.eye(n)
            j[p, p] = c
            j[q, q] = c
            j[p, q] = s
            j[q, p] = -s
            a = j.T @ a @ j
            a = 0.5 * (a + a.T)
            a[p, q] = 0.0
            a[q, p] = 0.0
            v = v @ j
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    w, v = _canonical_clusters(a_orig, w, v)
    lead = np.argmax(np.abs(v), axis=0)
    v = v * np.where(v[lead, np.arange(n)] < 0, -1.0, 1.0)
    return w, v


def _pivoted_basis(block: np.ndarray) -> np.ndarray:
    """Orthonormal basis of span(block) built from projected coordinate axes.

    Column-pivoted Gram-Schmidt on the projector: each step takes the axis
    whose residual projection is longest (lowest index on ties), so no step
    divides by a near-zero norm. Columns come back in axis order.
    """
    n, k = block.shape
    r = block @ block.T
    q = np.zeros((n, k))
    picked = []
    for i in range(k):
        norms = np.sum(r ** 2, axis=0)
        norms[picked] = -1.0
        j = int(np.argmax(norms))
        col = r[:, j].copy()
        for _ in range(2):  # re-orthogonalize once for stability
            col -= q[:, :i] @ (q[:, :i].T @ col)
        q[:, i] = col / np.linalg.norm(col)
        r -= np.outer(q[:, i], q[:, i] @ r)
        picked.append(j)
    return q[:, np.argsort(picked, kind="stable")]


def _canonical_clusters(a, w, v):
    """Pick a reproducible basis inside each (near-)repeated eigenvalue cluster.

    Eigenvectors of a repeated eigenvalue are only defined up to a rotation
    of their eigenspace, and Jacobi picks one by rounding noise. Project the
    coordinate axes onto the eigenspace and orthonormalize them with
    pivoting; for a multiple of the identity this returns the identity.
    """
    gap = CLUSTER_TOL * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    start = 0
    n = w.size
    w, v = w.copy(), v.copy()
    while start < n:
        stop = start + 1
        while stop < n and w[stop - 1] - w[stop] <= gap:
            stop += 1
        if stop - start > 1:
            block = v[:, start:stop]
            basis = _pivoted_basis(block)
            v[:, start:stop] = basis
            w[start:stop] = np.einsum("ij,ij->j", basis, a @ basis)
        start = stop
    return w, v


@dataclass(frozen=True)
class WhiteningTransform:
    mean: np.ndarray  # per-channel
    matrix: np.ndarray  # components x channels
    dewhitening: np.ndarray  # channels x components

    @property
    def n_components(self) -> int:
        return self.matrix.shape[0]

    def apply(self, data) -> np.ndarray:
        return self.matrix @ (np.asarray(data, dtype=np.float64) - self.mean[:, None])

    def invert(self, whitened) -> np.ndarray:
        return self.dewhitening @ whitened + self.mean[:, None]


def _check_data(data, n_components):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidArgument("data must be channels x samples")
    channels, samples = data.shape
    if samples <= channels:
        raise InvalidArgument(f"need more samples ({samples}) than channels ({channels})")
    k = channels if n_components is None else int(n_components)
    if not 1 <= k <= channels:
        raise InvalidArgument(f"n_components must be in [1, {channels}], got {k}")
    return data, k


def whiten(data, n_components=None):
    """PCA whitening: project onto the leading eigenvectors and rescale to unit variance."""
    data, k = _check_data(data, n_components)
    mean = data.mean(axis=1)
    centred = data - mean[:, None]
    cov = centred @ centred.T / (data.shape[1] - 1)
    w, v = jacobi_eigh(cov)
    usable = int(np.sum(w > EIGEN_FLOOR))
    if usable < k:
        raise RankError(f"data has rank {usable}, below the requested {k} components")
    w, v = w[:k], v[:, :k]
    transform = WhiteningTransform(mean, (v / np.sqrt(w)).T, v * np.sqrt(w))
    return transform.matrix @ centred, transform


@dataclass(frozen=True)
class ICAModel:
    unmixing: np.ndarray  # components x components, acts on whitened data
    whitening: WhiteningTransform
    n_iter: int = 0

    @property
    def n_components(self) -> int:
        return self.unmixing.shape[0]

    def sources(self, data) -> np.ndarray:
        return self.unmixing @ self.whitening.apply(data)

    def mixing(self) -> np.ndarray:
        """channels x components map from sources back to (centred) channels."""
        return self.whitening.dewhitening @ self.unmixing.T


def _inv_sqrt_decorrelate(w: np.ndarray) -> np.ndarray:
    s, u = jacobi_eigh(w @ w.T)
    return (u / np.sqrt(s)) @ u.T @ w


def fastica(data, n_components=None, tol=1e-6, max_iter=500, seed=0) -> ICAModel:
    """Symmetric fixed-point FastICA with g = tanh.

    Converged when every unmixing row turns by at most ``tol``
    (``max |1 - |<w_new, w_old>||``).
    """
    data, k = _check_data(data, n_components)
    z, transform = whiten(data, k)
    n = z.shape[1]
    rng = np.random.default_rng(seed)
    w = _inv_sqrt_decorrelate(rng.standard_normal((k, k)))
    delta = np.inf
    for it in range(1, max_iter + 1):
        g = np.tanh(w @ z)
        w_new = (g @ z.T) / n - (1.0 - g ** 2).mean(axis=1)[:, None] * w
        w_new = _inv_sqrt_decorrelate(w_new)
        delta = float(np.max(np.abs(np.abs(np.sum(w_new * w, axis=1)) - 1.0)))
        w = w_new
        if delta <= tol:
            return ICAModel(w, transform, it)
    raise ConvergenceError(f"FastICA did not converge in {max_iter} iterations (delta={delta:.3g})",
                           delta, ICAModel(w, transform, max_iter))


def component_kurtosis(model: ICAModel, data) -> np.ndarray:
    s = model.sources(data)
    s = s - s.mean(axis=1, keepdims=True)
    m2 = np.mean(s ** 2, axis=1)
    m4 = np.mean(s ** 4, axis=1)
    return m4 / m2 ** 2 - 3.0


def select_by_kurtosis(model: ICAModel, data, threshold: float = KURTOSIS_THRESHOLD) -> list:
    """Indices of components whose excess kurtosis exceeds ``threshold``."""
    return [int(i) for i in np.flatnonzero(component_kurtosis(model, data) > threshold)]


def remove_components(rec: EEGRecording, model: ICAModel, indices) -> EEGRecording:
    """Zero the selected sources and map back to channel space."""
    indices = sorted({int(i) for i in indices})
    if any(i < 0 or i >= model.n_components for i in indices):
        raise InvalidArgument(f"component indices {indices} outside [0, {model.n_components})")
    if rec.n_channels != model.whitening.mean.size:
        raise InvalidArgument("recording channel count differs from the fitted model")
    s = model.sources(rec.data)
    s[indices] = 0.0
    return rec.with_data(model.whitening.invert(model.unmixing.T @ s))


# -- persistence (section "ICA0" of the PORG container) --------------------------

SECTION_TAG = "ICA0"


def ica_section(model: ICAModel):
    arrays = {
        "mean": model.whitening.mean,
        "whitening": model.whitening.matrix,
        "dewhitening": model.whitening.dewhitening,
        "unmixing": model.unmixing,
    }
    config = {"n_components": model.n_components, "n_iter": model.n_iter}
    return SECTION_TAG, container.encode_payload(config, arrays)


def ica_from_payload(payload: bytes) -> ICAModel:
    config, arrays = container.decode_payload(payload)
    try:
        wt = WhiteningTransform(arrays["mean"], arrays["whitening"], arrays["dewhitening"])
        model = ICAModel(arrays["unmixing"], wt, int(config.get("n_iter", 0)))
    except KeyError as exc:
        raise FormatError(f"ICA0 section lacks array {exc}") from exc
    if model.n_components != config.get("n_components"):
        raise FormatError("ICA0 component count disagrees with its arrays")
    return model


def save_ica(model: ICAModel, path) -> None:
    container.write_container(path, [ica_section(model)])


def load_ica(path) -> ICAModel:
    for tag, payload in container.read_container(path):
        if tag == SECTION_TAG:
            return ica_from_payload(payload)
    raise FormatError(f"{path} has no {SECTION_TAG} section")
