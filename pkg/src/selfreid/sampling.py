"""Identity-balanced mini-batches and the feature-space augmentation.

Batches hold n_identities pseudo identities with n_instances samples
each. The augmentation perturbs feature vectors directly: isotropic
noise, coordinate dropout (the stand-in for erasing) and an occasional
re-drawn camera-style offset. The encoder re-normalizes afterwards, so
perturbed rows are intentionally left unnormalized.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientClusters, SelfReidError
from .rerank import ClusterAssignment


@dataclass
class BatchSpec:
    """Identities per batch and instances per identity.

    Both must be at least 2: hardest-positive mining needs a second
    positive, and the instance loss needs at least one negative identity.
    """

    n_identities: int = 8
    n_instances: int = 4

    def validate(self) -> None:
        if self.n_identities < 2 or self.n_instances < 2:
            raise SelfReidError(
                f"need n_identities >= 2 and n_instances >= 2, got "
                f"({self.n_identities}, {self.n_instances})")

    @property
    def size(self) -> int:
        return self.n_identities * self.n_instances


@dataclass
class IdentityBatch:
    indices: np.ndarray  # (n_identities * n_instances,) dataset indices
    labels: np.ndarray   # pseudo label per entry
    cameras: np.ndarray  # camera id per entry


@dataclass
class PerturbationConfig:
    noise_sigma: float = 0.1
    dropout: float = 0.15
    restyle_prob: float = 0.5
    restyle_scale: float = 1.0

    def validate(self) -> None:
        if self.noise_sigma < 0:
            raise SelfReidError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not (0.0 <= self.dropout < 1.0):
            raise SelfReidError(f"dropout must be in [0, 1), got {self.dropout}")
        if not (0.0 <= self.restyle_prob <= 1.0):
            raise SelfReidError(f"restyle_prob must be in [0, 1], got {self.restyle_prob}")

    @property
    def is_identity(self) -> bool:
        return self.noise_sigma == 0 and self.dropout == 0 and self.restyle_prob == 0


def sample_pk_batch(assignment: ClusterAssignment, cameras: np.ndarray,
                    spec: BatchSpec, rng_seed) -> IdentityBatch:
    """Draw an identity-balanced batch of inlier indices.

    Identities are drawn without replacement. Within an identity,
    members are drawn without replacement when the cluster is large
    enough, with replacement otherwise (clusters can shrink below
    n_instances after outlier exclusion).
    """
    spec.validate()
    cameras = np.asarray(cameras, dtype=np.int64)
    if assignment.cluster_count < spec.n_identities:
        raise InsufficientClusters(
            f"{assignment.cluster_count} clusters < {spec.n_identities} identities/batch")
    rng = np.random.default_rng(rng_seed)
    chosen = rng.choice(assignment.cluster_count, size=spec.n_identities, replace=False)
    indices = []
    labels = []
    for label in chosen:
        members = assignment.members_of(int(label))
        replace = members.size < spec.n_instances
        picks = rng.choice(members, size=spec.n_instances, replace=replace)
        indices.extend(int(i) for i in picks)
        labels.extend([int(label)] * spec.n_instances)
    indices = np.array(indices, dtype=np.int64)
    return IdentityBatch(indices=indices, labels=np.array(labels, dtype=np.int64),
                         cameras=cameras[indices])


def estimate_camera_offsets(features: np.ndarray, cameras: np.ndarray) -> np.ndarray:
    """Per-camera mean feature minus the global mean (the style offsets)."""
    features = np.asarray(features, dtype=np.float64)
    cameras = np.asarray(cameras, dtype=np.int64)
    global_mean = features.mean(axis=0)
    n_cams = int(cameras.max()) + 1
    offsets = np.zeros((n_cams, features.shape[1]))
    for b in range(n_cams):
        offsets[b] = features[cameras == b].mean(axis=0) - global_mean
    return offsets


def perturb(features: np.ndarray, config: PerturbationConfig, rng_seed,
            cameras: np.ndarray | None = None,
            camera_offsets: np.ndarray | None = None) -> np.ndarray:
    """Strong feature-space augmentation; deterministic given the seed.

    The restyle step re-draws a row's camera-style offset: when camera
    ids and estimated offsets are given it moves the row to a random
    other camera's style (scaled by restyle_scale); without them it
    falls back to a random offset direction of norm restyle_scale.
    """
    config.validate()
    features = np.asarray(features, dtype=np.float64)
    out = features.copy()
    if config.is_identity:
        return out
    n, d = out.shape
    rng = np.random.default_rng(rng_seed)
    if config.noise_sigma > 0:
        out += rng.normal(0.0, config.noise_sigma, size=(n, d))
    n_drop = int(round(config.dropout * d))
    if n_drop > 0:
        for i in range(n):
            out[i, rng.choice(d, size=n_drop, replace=False)] = 0.0
    if config.restyle_prob > 0:
        restyle = rng.random(n) < config.restyle_prob
        if cameras is not None and camera_offsets is not None \
                and len(camera_offsets) > 1:
            n_cams = len(camera_offsets)
            # shift each selected row to a uniformly drawn other camera
            targets = rng.integers(0, n_cams - 1, size=n)
            for i in np.flatnonzero(restyle):
                own = int(cameras[i])
                other = int(targets[i]) + (targets[i] >= own)
                out[i] += config.restyle_scale * (camera_offsets[other]
                                                  - camera_offsets[own])
        else:
            directions = rng.normal(size=(n, d))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            out[restyle] += config.restyle_scale * directions[restyle]
    return out
