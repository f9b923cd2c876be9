"""PCA + whitening of descriptor sets, with truncation and re-normalization."""

import struct
from dataclasses import dataclass

import numpy as np

from .aggregate import normalize_l2
from .errors import InsufficientDataError, TensorFormatError
from .tensorio import DescriptorSet

WHTN_MAGIC = b"WHTN"
WHTN_VERSION = 1

DEFAULT_EPSILON = 1e-10


@dataclass
class WhiteningModel:
    """Mean, principal axes (rows, descending eigenvalue order) and spectrum."""

    mean: np.ndarray  # (d,)
    eigenvalues: np.ndarray  # (d,), descending, >= 0
    projection: np.ndarray  # (d, d), orthonormal rows
    epsilon: float = DEFAULT_EPSILON

    @property
    def input_dim(self):
        return self.mean.shape[0]


def fit_whitening(train: DescriptorSet, epsilon=DEFAULT_EPSILON):
    """Fit mean + PCA axes from a training descriptor set.

    Covariance uses the n-1 divisor. Each axis is sign-fixed so its
    largest-magnitude component is positive, for backend-independent output.
    """
    x = train.vectors.astype(np.float64)
    if x.shape[0] < 2:
        raise InsufficientDataError(
            f"whitening needs at least 2 training descriptors, got {x.shape[0]}"
        )
    if not np.isfinite(x).all():
        raise ValueError("training descriptors contain non-finite values")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    axes = eigvecs[:, order].T.copy()
    for row in axes:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return WhiteningModel(mean=mean, eigenvalues=eigvals, projection=axes, epsilon=epsilon)


def apply_whitening(model: WhiteningModel, descriptor, keep):
    """Project, variance-equalize, truncate to `keep` dims and l2-normalize."""
    d = np.asarray(descriptor, dtype=np.float64)
    if d.shape != (model.input_dim,):
        raise ValueError(
            f"descriptor has shape {d.shape}, model expects ({model.input_dim},)"
        )
    if not 1 <= keep <= model.input_dim:
        raise ValueError(f"keep={keep} outside [1, {model.input_dim}]")
    y = model.projection[:keep] @ (d - model.mean)
    y /= np.sqrt(model.eigenvalues[:keep] + model.epsilon)
    return normalize_l2(y).astype(np.float32)


def whiten_set(model: WhiteningModel, ds: DescriptorSet, keep):
    """Apply the model to every descriptor of a set."""
    out = np.stack([apply_whitening(model, v, keep) for v in ds.vectors])
    return DescriptorSet(layer=ds.layer, ids=list(ds.ids), vectors=out)


def write_whitening_model(model: WhiteningModel, path):
    """Write a model as a .whtn file (float32 payload, float64 epsilon)."""
    d = model.input_dim
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sBI", WHTN_MAGIC, WHTN_VERSION, d))
        fh.write(model.mean.astype("<f4").tobytes())
        fh.write(model.eigenvalues.astype("<f4").tobytes())
        fh.write(np.ascontiguousarray(model.projection).astype("<f4").tobytes())
        fh.write(struct.pack("<d", model.epsilon))


def read_whitening_model(path):
    """Read a .whtn file."""
    with open(path, "rb") as fh:
        header = fh.read(9)
        if len(header) < 9:
            raise TensorFormatError(f"{path}: truncated header")
        magic, version, d = struct.unpack("<4sBI", header)
        if magic != WHTN_MAGIC:
            raise TensorFormatError(f"{path}: bad magic {magic!r}")
        if version != WHTN_VERSION:
            raise TensorFormatError(f"{path}: unsupported version {version}")
        need = d * 4 + d * 4 + d * d * 4 + 8
        payload = fh.read(need)
        if len(payload) < need:
            raise TensorFormatError(f"{path}: truncated payload")
    mean = np.frombuffer(payload[: d * 4], dtype="<f4").astype(np.float64)
    eigenvalues = np.frombuffer(payload[d * 4: d * 8], dtype="<f4").astype(np.float64)
    projection = (
        np.frombuffer(payload[d * 8: d * 8 + d * d * 4], dtype="<f4")
        .astype(np.float64)
        .reshape(d, d)
    )
    (epsilon,) = struct.unpack("<d", payload[-8:])
    return WhiteningModel(mean=mean, eigenvalues=eigenvalues, projection=projection,
                          epsilon=epsilon)
