"""Unsupervised clustering with mixture-density Mercer kernels.

An ensemble of M soft k-means models gives each point a responsibility
vector per member.  Two points are similar when the members agree they
come from the same component:

    S(xi, xj) = sum_m sum_c P_m(c | xi) P_m(c | xj)
    K(xi, xj) = S(xi, xj) / sqrt(S(xi, xi) S(xj, xj))

Spectral and spatial kernels are blended as ``mu*Kx + (1-mu)*Ky``, the
blend is clustered with kernel k-means, and the labels are smoothed by
iterated conditional modes on a random-field energy whose unary term is
the ensemble responsibility and whose pairwise term is the kernel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from caextract.raster import FeatureGrid, LabelGrid

logger = logging.getLogger(__name__)

RESPONSIBILITY_FLOOR = 1e-6
_TAU_FLOOR = 1e-12


class DegenerateDataError(ValueError):
    """Fewer distinct points than requested clusters."""


# ---------------------------------------------------------------------------
# Ensemble of soft k-means density estimates
# ---------------------------------------------------------------------------

def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(len(X))]]
    closest = _sq_dists(X, centers[0][None])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            break
        idx = rng.choice(len(X), p=closest / total)
        centers.append(X[idx])
        closest = np.minimum(closest, _sq_dists(X, X[idx][None])[:, 0])
    return np.array(centers)


def lloyd_kmeans(X: np.ndarray, k: int, rng: np.random.Generator,
                 max_iters: int = 100) -> np.ndarray:
    """Plain k-means with k-means++ seeding; returns the ``(k, d)`` centers."""
    distinct = np.unique(X, axis=0)
    if len(distinct) < k:
        raise DegenerateDataError(f"{len(distinct)} distinct points cannot form {k} clusters")
    C = _kmeans_pp(X, k, rng)
    if len(C) < k:
        # seeding can only stall on duplicates; top up from unused distinct points
        extra = [p for p in distinct if not any(np.array_equal(p, c) for c in C)]
        C = np.vstack([C, extra[: k - len(C)]])
    labels = None
    for _ in range(max_iters):
        d = _sq_dists(X, C)
        new = d.argmin(1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            members = X[labels == j]
            if len(members):
                C[j] = members.mean(0)
            else:
                C[j] = X[d.min(1).argmax()]
    return C


@dataclass
class MixtureMember:
    centers: np.ndarray
    tau: float
    seed: int

    @property
    def k(self) -> int:
        return len(self.centers)

    def responsibilities(self, X: np.ndarray) -> np.ndarray:
        """Softmax of ``-d^2 / tau`` over the member's components."""
        logits = -_sq_dists(np.atleast_2d(X), self.centers) / self.tau
        logits -= logits.max(1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(1, keepdims=True)

    def hard(self, X: np.ndarray) -> np.ndarray:
        return _sq_dists(np.atleast_2d(X), self.centers).argmin(1)


@dataclass
class MixtureEnsemble:
    """M independently seeded soft k-means models over the same features."""

    members: list[MixtureMember] = field(default_factory=list)

    @property
    def M(self) -> int:
        return len(self.members)

    @property
    def seeds(self) -> list[int]:
        return [m.seed for m in self.members]

    def responsibilities(self, X: np.ndarray) -> np.ndarray:
        """Concatenated responsibility vectors, shape ``(n, sum_m C_m)``."""
        return np.hstack([m.responsibilities(X) for m in self.members])

    def embedding(self, X: np.ndarray) -> np.ndarray:
        """Unit-normalized responsibility vectors; their dot product is the kernel."""
        R = self.responsibilities(X)
        return R / np.linalg.norm(R, axis=1, keepdims=True)


def fit_ensemble(sample: np.ndarray, M: int = 8, k_range: tuple[int, int] = (2, 2),
                 seed: int = 0) -> MixtureEnsemble:
    """Fit M soft k-means members.

    Member ``m`` uses ``k = k_min + (m mod (k_max - k_min + 1))`` and seed
    ``seed + m``. Its softmax temperature is the mean squared distance of
    the sample to the nearest center.
    """
    X = np.atleast_2d(np.asarray(sample, dtype=np.float64))
    k_min, k_max = k_range
    if len(X) == 0:
        raise ValueError("empty sample")
    if M < 1 or k_min < 2 or k_max < k_min:
        raise ValueError(f"need M >= 1 and 2 <= k_min <= k_max, got M={M}, k_range={k_range}")
    members = []
    for m in range(M):
        k = k_min + m % (k_max - k_min + 1)
        rng = np.random.default_rng(seed + m)
        C = lloyd_kmeans(X, k, rng)
        tau = max(float(_sq_dists(X, C).min(1).mean()), _TAU_FLOOR)
        members.append(MixtureMember(centers=C, tau=tau, seed=seed + m))
    return MixtureEnsemble(members)


def mixture_kernel(ensemble: MixtureEnsemble, xi, xj) -> float:
    """Normalized agreement between two feature vectors."""
    r = ensemble.responsibilities(np.vstack([xi, xj]))
    s_ij = r[0] @ r[1]
    return float(s_ij / np.sqrt((r[0] @ r[0]) * (r[1] @ r[1])))


def _symmetric_unit(G: np.ndarray) -> np.ndarray:
    G = 0.5 * (G + G.T)
    np.fill_diagonal(G, 1.0)
    return G


def gram_matrix(ensemble: MixtureEnsemble, X: np.ndarray) -> np.ndarray:
    """Mixture-density Gram matrix over the rows of ``X``."""
    E = ensemble.embedding(np.atleast_2d(X))
    return _symmetric_unit(E @ E.T)


def composite_gram(spectral_gram: np.ndarray, spatial_gram: np.ndarray,
                   mu: float) -> np.ndarray:
    """Elementwise ``mu * Kx + (1 - mu) * Ky``."""
    Kx = np.asarray(spectral_gram, dtype=np.float64)
    Ky = np.asarray(spatial_gram, dtype=np.float64)
    if Kx.shape != Ky.shape or Kx.ndim != 2 or Kx.shape[0] != Kx.shape[1]:
        raise ValueError(f"gram shapes differ or are not square: {Kx.shape} vs {Ky.shape}")
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    if mu == 1.0:
        return Kx.copy()
    if mu == 0.0:
        return Ky.copy()
    return mu * Kx + (1.0 - mu) * Ky


# ---------------------------------------------------------------------------
# Kernel k-means
# ---------------------------------------------------------------------------

def _cluster_distances(K: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Squared feature-space distance of every point to every cluster mean."""
    n = len(K)
    diag = np.diag(K)
    D = np.full((n, k), np.inf)
    for c in range(k):
        idx = np.flatnonzero(labels == c)
        if len(idx) == 0:
            continue
        cross = K[:, idx].sum(1) / len(idx)
        within = K[np.ix_(idx, idx)].sum() / len(idx) ** 2
        D[:, c] = diag - 2.0 * cross + within
    return np.maximum(D, 0.0)


def kernel_kmeans_objective(K: np.ndarray, labels: np.ndarray) -> float:
    """Sum of squared feature-space distances to the assigned cluster means."""
    labels = np.asarray(labels)
    total = float(np.trace(K))
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        total -= K[np.ix_(idx, idx)].sum() / len(idx)
    return max(total, 0.0)


@dataclass
class KernelKMeansResult:
    labels: np.ndarray
    objective: float
    iterations: int
    history: list[float]


def kernel_kmeans(gram: np.ndarray, k: int, seed: int = 0, max_iters: int = 100,
                  return_result: bool = False):
    """Lloyd iterations in the kernel-induced feature space.

    Seeds are picked k-means++ style from pairwise kernel distances
    ``K_ii + K_jj - 2 K_ij``. Identical points collapse: seeding stops once
    every remaining distance is zero, so fewer than ``k`` labels may be used.
    An empty cluster is re-seeded with the point farthest from its mean.
    """
    K = np.asarray(gram, dtype=np.float64)
    n = len(K)
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    diag = np.diag(K)
    pair = np.maximum(diag[:, None] + diag[None, :] - 2.0 * K, 0.0)

    seeds = [int(rng.integers(n))]
    closest = pair[seeds[0]].copy()
    while len(seeds) < k:
        total = closest.sum()
        if total <= 1e-12:
            break
        nxt = int(rng.choice(n, p=closest / total))
        seeds.append(nxt)
        closest = np.minimum(closest, pair[nxt])
    labels = pair[seeds].argmin(0)

    history = [kernel_kmeans_objective(K, labels)]
    it = 0
    for it in range(1, max_iters + 1):
        D = _cluster_distances(K, labels, k)
        new = D.argmin(1)
        # empty clusters: give each one the currently worst-fitted point
        for c in range(len(seeds)):
            if not np.any(new == c):
                fit = D[np.arange(n), new]
                far = int(fit.argmax())
                if fit[far] > 1e-12:
                    new[far] = c
        obj = kernel_kmeans_objective(K, new)
        if np.array_equal(new, labels) or obj > history[-1]:
            break
        labels = new
        history.append(obj)
    result = KernelKMeansResult(labels=labels, objective=history[-1],
                                iterations=it, history=history)
    return result if return_result else labels


# ---------------------------------------------------------------------------
# Random-field refinement (ICM)
# ---------------------------------------------------------------------------

@dataclass
class SvrfParams:
    beta: float = 1.0
    mu: float = 0.5
    icm_iters: int = 10

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")


def field_energy(labels: np.ndarray, log_unary: np.ndarray, right_w: np.ndarray,
                 down_w: np.ndarray, beta: float) -> float:
    """Unnormalized log-posterior; every neighboring pair counts once."""
    h, w = labels.shape
    rows, cols = np.indices((h, w))
    unary = log_unary[rows, cols, labels].sum()
    same_r = labels[:, :-1] == labels[:, 1:]
    same_d = labels[:-1, :] == labels[1:, :]
    pair = (right_w * same_r).sum() + (down_w * same_d).sum()
    return float(unary + beta * pair)


def icm(labels: np.ndarray, log_unary: np.ndarray, right_w: np.ndarray,
        down_w: np.ndarray, beta: float, max_sweeps: int = 10,
        energies: list[float] | None = None) -> np.ndarray:
    """Raster-order iterated conditional modes.

    Args:
        labels: initial ``(h, w)`` labels.
        log_unary: ``(h, w, k)`` log observation potentials.
        right_w: ``(h, w-1)`` pair weights between (r, c) and (r, c+1).
        down_w: ``(h-1, w)`` pair weights between (r, c) and (r+1, c).
        beta: pairwise strength.
        max_sweeps: sweep cap.
        energies: if given, receives the energy before and after each sweep.

    A label changes only on a strict score improvement, so the energy never
    decreases and only labels present in the input are considered.
    """
    y = np.array(labels, dtype=np.int64)
    h, w = y.shape
    allowed = np.unique(y)
    unary = log_unary[:, :, allowed]
    if energies is not None:
        energies.append(field_energy(y, log_unary, right_w, down_w, beta))
    for _ in range(max_sweeps):
        changed = 0
        for r in range(h):
            for c in range(w):
                score = unary[r, c].copy()
                if beta:
                    if c > 0:
                        score[allowed == y[r, c - 1]] += beta * right_w[r, c - 1]
                    if c < w - 1:
                        score[allowed == y[r, c + 1]] += beta * right_w[r, c]
                    if r > 0:
                        score[allowed == y[r - 1, c]] += beta * down_w[r - 1, c]
                    if r < h - 1:
                        score[allowed == y[r + 1, c]] += beta * down_w[r, c]
                best = int(score.argmax())
                current = int(np.flatnonzero(allowed == y[r, c])[0])
                if score[best] > score[current]:
                    y[r, c] = allowed[best]
                    changed += 1
        if energies is not None:
            energies.append(field_energy(y, log_unary, right_w, down_w, beta))
        if not changed:
            break
    return y


def match_components(labels: np.ndarray, member: MixtureMember, X: np.ndarray,
                     k: int) -> np.ndarray:
    """For each cluster, the member component it overlaps most (ties -> lowest)."""
    hard = member.hard(X)
    matched = np.zeros(k, dtype=np.int64)
    for c in range(k):
        sel = hard[labels == c]
        if len(sel):
            matched[c] = np.bincount(sel, minlength=member.k).argmax()
    return matched


def observation_potential(labels: np.ndarray, X: np.ndarray, ensemble: MixtureEnsemble,
                          k: int) -> np.ndarray:
    """Ensemble-mean responsibility of each cluster's matched component, ``(n, k)``."""
    O = np.zeros((len(X), k))
    for member in ensemble.members:
        P = member.responsibilities(X)
        O += P[:, match_components(labels, member, X, k)]
    return O / ensemble.M


def _pair_weights(E: np.ndarray, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    G = E.reshape(h, w, -1)
    right = (G[:, :-1] * G[:, 1:]).sum(-1)
    down = (G[:-1, :] * G[1:, :]).sum(-1)
    return right, down


def svrf_refine(labels: LabelGrid, features: FeatureGrid, ensemble: MixtureEnsemble,
                params: SvrfParams, spatial_ensemble: MixtureEnsemble | None = None,
                energies: list[float] | None = None) -> LabelGrid:
    """Smooth a clustering with ICM on the random-field energy.

    ``ensemble`` models spectral features. With ``spatial_ensemble`` the
    unary and pairwise terms are ``mu``-blends of the spectral and spatial
    versions; without it only spectral features are used.
    """
    h, w = labels.labels.shape
    k = labels.k
    flat = labels.labels.ravel()
    Xs = features.flat("spectral")
    O = observation_potential(flat, Xs, ensemble, k)
    right, down = _pair_weights(ensemble.embedding(Xs), h, w)
    if spatial_ensemble is not None:
        mu = params.mu
        Xy = features.flat("spatial")
        O = mu * O + (1 - mu) * observation_potential(flat, Xy, spatial_ensemble, k)
        r2, d2 = _pair_weights(spatial_ensemble.embedding(Xy), h, w)
        right = mu * right + (1 - mu) * r2
        down = mu * down + (1 - mu) * d2
    log_unary = np.log(np.maximum(O, RESPONSIBILITY_FLOOR)).reshape(h, w, k)
    refined = icm(labels.labels, log_unary, right, down, params.beta,
                  params.icm_iters, energies)
    return LabelGrid(refined, k=k)


# ---------------------------------------------------------------------------
# Whole-image clustering
# ---------------------------------------------------------------------------

@dataclass
class ClusterModel:
    spectral: MixtureEnsemble
    spatial: MixtureEnsemble
    mu: float
    sample_index: np.ndarray
    sample_labels: np.ndarray


def cluster_image(features: FeatureGrid, k: int, M: int = 8, mu: float = 0.5,
                  sample_size: int = 2000, seed: int = 0,
                  k_range: tuple[int, int] | None = None,
                  chunk: int = 4096) -> tuple[LabelGrid, ClusterModel]:
    """Cluster every pixel through a seeded sample.

    Gram matrices are built on at most ``sample_size`` pixels; every other
    pixel takes the label of the sampled pixel with the largest composite
    kernel value (smallest kernel distance, since the diagonal is one).
    """
    Xs = features.flat("spectral")
    Xy = features.flat("spatial")
    n = len(Xs)
    rng = np.random.default_rng(seed)
    if n <= sample_size:
        idx = np.arange(n)
    else:
        idx = np.sort(rng.choice(n, size=sample_size, replace=False))
    kr = k_range or (k, k)
    spectral_ens = fit_ensemble(Xs[idx], M, kr, seed=seed + 1000)
    spat = fit_ensemble(Xy[idx], M, kr, seed=seed + 2000)
    Es = spectral_ens.embedding(Xs)
    Ey = spat.embedding(Xy)
    K = composite_gram(_symmetric_unit(Es[idx] @ Es[idx].T),
                       _symmetric_unit(Ey[idx] @ Ey[idx].T), mu)
    sample_labels = kernel_kmeans(K, k, seed=seed + 3000)
    labels = np.empty(n, dtype=np.int64)
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        sim = mu * (Es[sl] @ Es[idx].T) + (1 - mu) * (Ey[sl] @ Ey[idx].T)
        labels[sl] = sample_labels[sim.argmax(1)]
    labels[idx] = sample_labels
    logger.debug("clustered %d pixels from a %d-pixel sample", n, len(idx))
    grid = LabelGrid(labels.reshape(features.height, features.width), k=k)
    return grid, ClusterModel(spectral_ens, spat, mu, idx, sample_labels)
