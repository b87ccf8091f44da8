"""
Camera-motion estimation from a flow field and its compensation.

Correspondences p -> p + flow(p) are taken on a regular grid; RANSAC over
4-point normalized DLT fits picks the homography with the largest inlier set,
which is then refit on all of its inliers.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Tuple

import numpy as np

from core.exceptions import DegenerateInputError, ShapeError
from core.models import FlowField, Homography

logger = logging.getLogger(__name__)

MIN_FLOW_SIDE = 32


@dataclass
class RansacConfig:
    iterations: int = 200
    inlier_tol: float = 0.5
    grid: int = 16


def grid_correspondences(flow: FlowField, grid: int = 16) -> Tuple[np.ndarray, np.ndarray]:
    """(src, dst) point arrays of shape (N, 2) in (x, y) order"""
    height, width = flow.shape
    rows = np.unique(np.round(np.linspace(0, height - 1, grid)).astype(int))
    cols = np.unique(np.round(np.linspace(0, width - 1, grid)).astype(int))
    yy, xx = np.meshgrid(rows, cols, indexing="ij")
    yy, xx = yy.ravel(), xx.ravel()
    src = np.stack([xx, yy], axis=1).astype(np.float64)
    dst = src + np.stack([flow.u[yy, xx], flow.v[yy, xx]], axis=1)
    usable = np.all(np.isfinite(dst), axis=1)
    return src[usable], dst[usable]


def _normalizing_transform(points: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    spread = np.sqrt(((points - centroid) ** 2).sum(axis=1)).mean()
    if spread < 1e-12:
        raise DegenerateInputError("correspondences collapse to a single point")
    scale = np.sqrt(2.0) / spread
    return np.array([
        [scale, 0.0, -scale * centroid[0]],
        [0.0, scale, -scale * centroid[1]],
        [0.0, 0.0, 1.0],
    ])


def _to_homogeneous(points: np.ndarray) -> np.ndarray:
    return np.concatenate([points, np.ones((points.shape[0], 1))], axis=1)


def fit_homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized direct linear transform over >= 4 correspondences"""
    if src.shape[0] < 4:
        raise DegenerateInputError(f"need at least 4 correspondences, got {src.shape[0]}")
    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    a = (_to_homogeneous(src) @ t_src.T)
    b = (_to_homogeneous(dst) @ t_dst.T)
    x, y = a[:, 0], a[:, 1]
    u, v = b[:, 0], b[:, 1]
    zeros, ones = np.zeros_like(x), np.ones_like(x)
    rows_u = np.stack([-x, -y, -ones, zeros, zeros, zeros, u * x, u * y, u], axis=1)
    rows_v = np.stack([zeros, zeros, zeros, -x, -y, -ones, v * x, v * y, v], axis=1)
    _, singular, vt = np.linalg.svd(np.concatenate([rows_u, rows_v]))
    if singular.size >= 8 and singular[7] < 1e-12 * max(singular[0], 1.0):
        raise DegenerateInputError("correspondences do not determine a homography")
    normalized = vt[-1].reshape(3, 3)
    matrix = np.linalg.inv(t_dst) @ normalized @ t_src
    if abs(matrix[2, 2]) < 1e-12:
        raise DegenerateInputError("fitted homography maps the origin to infinity")
    return matrix / matrix[2, 2]


def reprojection_error(matrix: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    projected = _to_homogeneous(src) @ matrix.T
    w = projected[:, 2:3]
    with np.errstate(divide="ignore", invalid="ignore"):
        mapped = projected[:, :2] / w
    error = np.sqrt(((mapped - dst) ** 2).sum(axis=1))
    return np.where(np.isfinite(error), error, np.inf)


def _has_collinear_triple(points: np.ndarray) -> bool:
    for i, j, k in combinations(range(len(points)), 3):
        d1 = points[j] - points[i]
        d2 = points[k] - points[i]
        if abs(d1[0] * d2[1] - d1[1] * d2[0]) < 1e-6:
            return True
    return False


def estimate_homography(
    flow: FlowField,
    rng: np.random.Generator,
    config: RansacConfig = None,
) -> Homography:
    """Camera homography explaining the dominant (background) motion of ``flow``"""
    config = config or RansacConfig()
    if min(flow.shape) < MIN_FLOW_SIDE:
        raise ShapeError(f"homography estimation needs flow of at least {MIN_FLOW_SIDE}x{MIN_FLOW_SIDE}", flow.shape)
    src, dst = grid_correspondences(flow, config.grid)
    count = src.shape[0]
    if count < 4:
        raise DegenerateInputError(f"only {count} usable correspondences")

    best_mask = None
    best_inliers = -1
    for _ in range(config.iterations):
        sample = rng.choice(count, 4, replace=False)
        if _has_collinear_triple(src[sample]):
            continue
        try:
            candidate = fit_homography_dlt(src[sample], dst[sample])
        except DegenerateInputError:
            continue
        mask = reprojection_error(candidate, src, dst) < config.inlier_tol
        inliers = int(mask.sum())
        if inliers > best_inliers:
            best_mask, best_inliers = mask, inliers
            if inliers == count:
                break

    if best_mask is None or best_inliers < 4:
        raise DegenerateInputError("RANSAC found no consistent homography")
    matrix = fit_homography_dlt(src[best_mask], dst[best_mask])
    final_mask = reprojection_error(matrix, src, dst) < config.inlier_tol
    ratio = float(final_mask.mean())
    logger.debug(f"Homography estimated with inlier ratio {ratio:.3f}")
    return Homography(matrix, inlier_ratio=ratio)


def warp_compensate(flow: FlowField, homography: Homography) -> FlowField:
    """Residual flow (p + flow(p)) - H(p); background motion explained by H cancels"""
    height, width = flow.shape
    induced = homography.displacement_field(height, width)
    return FlowField(flow.u - induced.u, flow.v - induced.v)
