"""Slide-level pipeline: assemble patch probabilities into a heatmap grid,
extract connected-component geometry at thresholds 0.5 and 0.95, and train a
regularized logistic slide classifier on those features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import ValidationError

FEATURE_THRESHOLDS = (0.5, 0.95)
# per threshold: region count, largest area, total area, largest-region mean
# prob, largest-region extent; plus the global max probability
N_FEATURES = 5 * len(FEATURE_THRESHOLDS) + 1

FOUR_CONN = np.array([[0, 1, 0],
                      [1, 1, 1],
                      [0, 1, 0]])


@dataclass
class SlideGrid:
    probs: np.ndarray          # (H, W), values in [0, 1]
    slide_id: int = 0
    label: int | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValidationError("grid must be 2-D")
        if self.probs.size and (self.probs.min() < 0.0 or self.probs.max() > 1.0):
            raise ValidationError("probabilities must lie in [0, 1]")


@dataclass
class Region:
    cells: np.ndarray          # (area, 2) grid coordinates
    area: int
    mean_prob: float
    bbox: tuple                # (rmin, rmax, cmin, cmax), inclusive

    @property
    def extent(self) -> float:
        rmin, rmax, cmin, cmax = self.bbox
        return self.area / float((rmax - rmin + 1) * (cmax - cmin + 1))


def heatmap_from_patches(predictions, coords, height: int, width: int,
                         slide_id: int = 0, label=None) -> SlideGrid:
    """Place one probability per grid cell; unfilled cells stay 0."""
    predictions = np.asarray(predictions, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.intp).reshape(-1, 2)
    if predictions.shape[0] != coords.shape[0]:
        raise ValidationError("one prediction per coordinate required")
    grid = np.zeros((height, width))
    seen = set()
    for p, (r, c) in zip(predictions, coords):
        if not (0 <= r < height and 0 <= c < width):
            raise ValidationError(f"coordinate ({r}, {c}) outside {height}x{width} grid")
        if (r, c) in seen:
            raise ValidationError(f"duplicate coordinate ({r}, {c})")
        seen.add((r, c))
        grid[r, c] = p
    return SlideGrid(probs=grid, slide_id=slide_id, label=label)


def connected_components(grid: SlideGrid, tau: float) -> list[Region]:
    """Maximal 4-connected regions of cells with probability > tau."""
    if not (0.0 < tau < 1.0):
        raise ValidationError("tau must lie in (0, 1)")
    mask = grid.probs > tau
    labeled, n_regions = ndimage.label(mask, structure=FOUR_CONN)
    regions = []
    for rid in range(1, n_regions + 1):
        cells = np.argwhere(labeled == rid)
        probs = grid.probs[cells[:, 0], cells[:, 1]]
        regions.append(Region(
            cells=cells, area=len(cells), mean_prob=float(probs.mean()),
            bbox=(int(cells[:, 0].min()), int(cells[:, 0].max()),
                  int(cells[:, 1].min()), int(cells[:, 1].max()))))
    return regions


def extract_features(grid: SlideGrid) -> np.ndarray:
    """11 geometric features: 5 per threshold in FEATURE_THRESHOLDS plus the
    global max probability. All zeros on an empty heatmap."""
    feats = []
    for tau in FEATURE_THRESHOLDS:
        regions = connected_components(grid, tau)
        if regions:
            largest = max(regions, key=lambda r: r.area)
            feats.extend([
                float(len(regions)),
                float(largest.area),
                float(sum(r.area for r in regions)),
                largest.mean_prob,
                largest.extent,
            ])
        else:
            feats.extend([0.0] * 5)
    feats.append(float(grid.probs.max()) if grid.probs.size else 0.0)
    return np.array(feats)


@dataclass
class SlideClassifier:
    """L2-regularized logistic model on standardized features."""

    weights: np.ndarray
    bias: float
    feat_mean: np.ndarray
    feat_std: np.ndarray

    def predict(self, features) -> np.ndarray:
        """Slide probability for one feature vector or a stack of them."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        z = (x - self.feat_mean) / self.feat_std
        logit = z @ self.weights + self.bias
        out = 1.0 / (1.0 + np.exp(-logit))
        return out if out.size > 1 else float(out[0])


def train_slide_classifier(features, labels, l2: float = 1.0,
                           n_iter: int = 50) -> SlideClassifier:
    """Deterministic Newton (IRLS) fit; no randomness involved."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValidationError("features must be (n, p) with one label per row")
    if len(np.unique(y)) < 2:
        raise ValidationError("training set must contain both classes")

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0.0] = 1.0
    z = np.hstack([(x - mean) / std, np.ones((x.shape[0], 1))])

    w = np.zeros(z.shape[1])
    reg = l2 * np.eye(z.shape[1])
    reg[-1, -1] = 0.0  # do not penalize the bias
    for _ in range(n_iter):
        p = 1.0 / (1.0 + np.exp(-(z @ w)))
        g = z.T @ (p - y) + reg @ w
        s = np.clip(p * (1.0 - p), 1e-9, None)
        h = (z * s[:, None]).T @ z + reg
        step = np.linalg.solve(h, g)
        w = w - step
        if np.max(np.abs(step)) < 1e-10:
            break
    return SlideClassifier(weights=w[:-1], bias=float(w[-1]),
                           feat_mean=mean, feat_std=std)


def predict_slide(classifier: SlideClassifier, features) -> float:
    return classifier.predict(features)
