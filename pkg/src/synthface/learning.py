"""Identity basis fitting and the generative identity distribution."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, InvalidParameterError, SynthFaceError

CORPUS_FORMAT_VERSION = 1
DISTRIBUTION_FORMAT_VERSION = 1
DEFAULT_TRUNCATION = 3.0


@dataclass(frozen=True)
class ScanCorpus:
    """Registered scans sharing one topology."""

    scans: np.ndarray  # (M, N, 3)
    topology_hash: str = ""

    def __post_init__(self):
        if self.scans.ndim != 3 or self.scans.shape[2] != 3:
            raise InvalidParameterError(f"scans must be (M, N, 3), got {self.scans.shape}")

    @property
    def num_scans(self):
        return self.scans.shape[0]


@dataclass(frozen=True)
class FitReport:
    residual_rms: np.ndarray  # per scan
    explained_variance_ratio: np.ndarray  # per kept component
    degenerate: bool = False

    @property
    def rms(self):
        """Residual RMS over the whole corpus."""
        return float(np.sqrt(np.mean(self.residual_rms**2)))


@dataclass(frozen=True)
class IdentityDistribution:
    mean: np.ndarray
    covariance: np.ndarray
    factor: np.ndarray  # lower-triangular, factor @ factor.T == covariance

    @property
    def dim(self):
        return self.mean.shape[0]


def topology_hash(faces):
    return hashlib.sha256(np.ascontiguousarray(faces, dtype=np.int64).tobytes()).hexdigest()


def _canonical_signs(components):
    # Make the largest-magnitude entry of each component positive.
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return signs


def fit_identity_basis(corpus, k, template):
    """Fit a rank-``k`` identity basis to template-centred scans.

    Least-squares fitting of a linear basis and per-scan coefficients has
    the truncated SVD as its closed-form optimum.  Components are
    orthonormal as flattened ``3N`` vectors.

    Returns:
        (basis (k, N, 3), betas (M, k), FitReport)
    """
    scans = np.asarray(corpus.scans if isinstance(corpus, ScanCorpus) else corpus, dtype=np.float64)
    template = np.asarray(template, dtype=np.float64)
    if scans.ndim != 3 or scans.shape[1:] != template.shape:
        raise InvalidParameterError(
            f"corpus shape {scans.shape} does not match template {template.shape}"
        )
    m, n, _ = scans.shape
    if m < 2:
        raise InsufficientDataError("need at least two scans to fit an identity basis")
    if not 1 <= k <= min(m - 1, 3 * n):
        raise InvalidParameterError(f"component count {k} outside [1, {min(m - 1, 3 * n)}]")

    centred = (scans - template).reshape(m, 3 * n)
    u, s, vt = np.linalg.svd(centred, full_matrices=False)
    total = float(np.sum(s**2))
    degenerate = total == 0.0
    components = vt[:k].copy()
    betas = u[:, :k] * s[:k]
    signs = _canonical_signs(components)
    components *= signs[:, None]
    betas *= signs[None, :]
    if degenerate:
        betas = np.zeros_like(betas)
        ratio = np.zeros(k)
    else:
        ratio = s[:k] ** 2 / total

    residual = centred - betas @ components
    report = FitReport(
        residual_rms=np.sqrt(np.mean(residual**2, axis=1)),
        explained_variance_ratio=ratio,
        degenerate=degenerate,
    )
    return components.reshape(k, n, 3), betas, report


def fit_identity_distribution(betas):
    """Multivariate normal fitted to per-scan identity coefficients.

    The covariance is the unbiased sample covariance.  If its Cholesky
    factorization fails, ``1e-10 * trace / k`` is added to the diagonal; an
    all-zero covariance keeps a zero factor.
    """
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 2:
        raise InvalidParameterError(f"betas must be (M, k), got {betas.shape}")
    m, k = betas.shape
    if m < 2:
        raise InsufficientDataError("need at least two coefficient vectors")
    mean = betas.mean(axis=0)
    centred = betas - mean
    covariance = centred.T @ centred / (m - 1)
    covariance = 0.5 * (covariance + covariance.T)
    return _distribution(mean, covariance)


def _distribution(mean, covariance):
    k = len(mean)
    if not np.any(covariance):
        return IdentityDistribution(mean, covariance, np.zeros_like(covariance))
    try:
        factor = np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(covariance) / k
        covariance = covariance + jitter * np.eye(k)
        try:
            factor = np.linalg.cholesky(covariance)
        except np.linalg.LinAlgError as exc:
            raise SynthFaceError("covariance is not positive semi-definite") from exc
    return IdentityDistribution(mean, covariance, factor)


def sample_identity(dist, rng, truncation=DEFAULT_TRUNCATION):
    """Draw identity coefficients ``mean + factor @ z``.

    ``truncation`` clamps every standard-normal coordinate of ``z`` to
    ``[-truncation, truncation]``; ``None`` disables clamping.
    """
    z = rng.standard_normal(dist.dim)
    if truncation is not None:
        z = np.clip(z, -truncation, truncation)
    return dist.mean + dist.factor @ z


# -- persistence -------------------------------------------------------------


def save_corpus(path, corpus):
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format_version=np.array(CORPUS_FORMAT_VERSION),
            scans=corpus.scans,
            topology_hash=np.array(corpus.topology_hash),
        )


def load_corpus(path, expected_topology=None):
    """Load a corpus; reject it if its topology hash differs from ``expected_topology``."""
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CORPUS_FORMAT_VERSION:
            raise SynthFaceError(f"{path}: unsupported corpus format version {version}")
        corpus = ScanCorpus(data["scans"].astype(np.float64), str(data["topology_hash"]))
    if expected_topology is not None and corpus.topology_hash != expected_topology:
        raise InvalidParameterError(f"{path}: scans are registered to a different topology")
    return corpus


def save_distribution(path, dist):
    doc = {
        "format_version": DISTRIBUTION_FORMAT_VERSION,
        "k": dist.dim,
        "mean": dist.mean.tolist(),
        "covariance": dist.covariance.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_distribution(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != DISTRIBUTION_FORMAT_VERSION:
        raise SynthFaceError(f"{path}: unsupported distribution format version")
    mean = np.asarray(doc["mean"], dtype=np.float64)
    covariance = np.asarray(doc["covariance"], dtype=np.float64)
    if mean.shape != (doc["k"],) or covariance.shape != (doc["k"], doc["k"]):
        raise SynthFaceError(f"{path}: dimension fields disagree with the stored arrays")
    return _distribution(mean, covariance)
