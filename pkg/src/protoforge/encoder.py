"""Frozen handcrafted patch-statistics encoder.

Maps a sample (RGB frame + flow fields) onto a coarse grid of feature
vectors. Each grid cell sees exactly one cell-sized pixel block, so the
receptive field of a cell is its block and nothing else. Every feature has an
additive per-pixel decomposition (see `pixel_shares`), which is what lets
relevance propagation conserve mass down to input pixels.

Feature values are z-normalized by constants baked into the recipe version;
caches and model files record the recipe so stale activations are detectable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import SampleSequence
from .numerics import ShapeMismatchError

ENCODE_CALLS = 0

RECIPE_VERSION = "enc-v1"
DEPTH = 32

FEATURE_NAMES = (
    "mean_r", "mean_g", "mean_b",
    "logvar_r", "logvar_g", "logvar_b",
    "loggrad_r", "loggrad_g", "loggrad_b",
    "orient_0", "orient_1", "orient_2", "orient_3",
    "range_r", "range_g", "range_b",
    "flat_frac",
    "flow_mean_mag", "flow_max_mag", "flow_min_mag",
    "flow_mean_dx", "flow_mean_dy", "flow_mean_abs",
    "flow_tvar", "flow_tvar_mag",
    "flow_max_trange_mag", "flow_svar_mag",
    "flow_lag1_dot",
    "flow_mean_div", "flow_mean_abs_div",
    "flow_mean_abs_curl", "flow_gradmag_mag",
)

# z-scores are passed through a saturating squash so that "artifact present"
# reads as a plateau instead of an unbounded magnitude; this keeps latent
# distances between same-kind artifact patches small relative to the
# artifact-vs-pristine gap. Monotone and 1-1, so relevance passes through.
_SQUASH = 3.0
_FLAT_GRAD_THRESHOLD = 1e-5
_LOG_FLOOR = 1e-8

# Per-feature gain applied after the squash. Raw color means and plain motion
# magnitudes are context, not evidence: damping them keeps patches of one
# artifact kind close across face regions and videos without touching the
# texture and temporal-consistency channels that carry the actual signal.
_GAIN = np.ones(DEPTH)
_GAIN[0:3] = 0.5   # mean_r/g/b
_GAIN[17:23] = 0.5  # flow mean/max/min magnitude and mean direction

# Baked z-normalization constants for enc-v1, calibrated once on a reference
# synthetic dataset. Regenerate with scripts/calibrate_encoder.py when the
# raw feature recipe changes (that requires a new recipe version).
_MU = np.array([0.546594, 0.489834, 0.463985, -3.07924, -3.31572, -3.62242, -1.89628, -2.01449, -2.16645, 0.00471953, 0.00371986, 0.00382484, 0.00445342, 0.0844854, 0.0571367, 0.0377, 0.00548503, 0.495948, 0.528258, 0.464048, -0.0461382, -0.0301053, 0.627893, 0.0579574, 0.000110309, 0.0398087, 0.0001448, 0.21063, -3.09555e-06, 0.00497117, 0.00497239, 0.00459873])
_SIGMA = np.array([0.170088, 0.100438, 0.056123, 1.01985, 0.91001, 0.818145, 0.610675, 0.568728, 0.53745, 0.00898831, 0.00699632, 0.00814857, 0.00777225, 0.0763438, 0.0519954, 0.0436223, 0.0676859, 0.223717, 0.2225, 0.225945, 0.330979, 0.354134, 0.288099, 0.606092, 0.001, 0.022477, 0.001, 0.645966, 0.00528131, 0.0019858, 0.00198338, 0.00227054])


@dataclass(frozen=True)
class EncoderConfig:
    cell: int = 8
    depth: int = DEPTH
    recipe_version: str = RECIPE_VERSION

    def __post_init__(self):
        if self.depth < 8:
            raise ValueError("depth must be >= 8")
        if self.recipe_version != RECIPE_VERSION:
            raise ValueError(f"unknown recipe {self.recipe_version!r}")
        if self.depth != DEPTH:
            raise ValueError(f"recipe {RECIPE_VERSION} has depth {DEPTH}")


@dataclass
class LatentMap:
    grid: np.ndarray  # (H', W', D) float32
    sample_id: str
    cell: int
    recipe_version: str = RECIPE_VERSION

    def cell_bbox(self, h: int, w: int) -> tuple[int, int, int, int]:
        """Input-pixel bbox (x0, y0, x1, y1) covered by grid cell (h, w)."""
        return (w * self.cell, h * self.cell, (w + 1) * self.cell, (h + 1) * self.cell)


def _grad(img2d: np.ndarray):
    gy, gx = np.gradient(img2d)
    return gx, gy


def _rgb_cell_features(block: np.ndarray):
    """Raw RGB features of one (c, c, 3) block, in FEATURE_NAMES order.

    Variance and gradient energy are taken in log scale: an exactly flat
    patch then reads as a hard plateau instead of a value indistinguishable
    from mildly smooth texture.
    """
    feats = []
    for c in range(3):
        feats.append(block[:, :, c].mean())
    for c in range(3):
        feats.append(np.log10(block[:, :, c].var() + _LOG_FLOOR))
    for c in range(3):
        gx, gy = _grad(block[:, :, c])
        feats.append(np.log10(np.hypot(gx, gy).mean() + _LOG_FLOOR))
    gray = block.mean(axis=2)
    ggx, ggy = _grad(gray)
    gmag = np.hypot(ggx, ggy)
    ang = np.mod(np.arctan2(ggy, ggx), np.pi)
    n = gray.size
    for b in range(4):
        sel = (ang >= b * np.pi / 4) & (ang < (b + 1) * np.pi / 4)
        feats.append((gmag * sel).sum() / n)
    for c in range(3):
        feats.append(block[:, :, c].max() - block[:, :, c].mean())
    feats.append((gmag < _FLAT_GRAD_THRESHOLD).mean())  # flat_frac
    return feats


def _flow_cell_features(fblock: np.ndarray):
    """Raw flow features of one (k-1, c, c, 2) block.

    Deliberately dominated by orientation-invariant statistics, so artifact
    cells of one kind form a tight cluster regardless of motion direction.
    """
    dx, dy = fblock[..., 0], fblock[..., 1]
    mag = np.hypot(dx, dy)
    lag1 = dx[:-1] * dx[1:] + dy[:-1] * dy[1:]
    feats = [
        mag.mean(),
        mag.max(),
        mag.min(),
        dx.mean(),
        dy.mean(),
        (np.abs(dx) + np.abs(dy)).mean(),
        (dx.var(axis=0) + dy.var(axis=0)).mean(),
        mag.var(axis=0).mean(),
        (mag.max(axis=0) - mag.min(axis=0)).max(),
        mag.var(axis=(1, 2)).mean(),
        lag1.mean(),
    ]
    divs, curls, gmags = [], [], []
    for f in range(fblock.shape[0]):
        dxx, _ = _grad(dx[f])
        _, dyy = _grad(dy[f])
        divs.append(dxx + dyy)
        dyx, _ = _grad(dy[f])
        _, dxy = _grad(dx[f])
        curls.append(dyx - dxy)
        mgx, mgy = _grad(mag[f])
        gmags.append(np.hypot(mgx, mgy))
    div = np.stack(divs)
    curl = np.stack(curls)
    gmag = np.stack(gmags)
    feats += [
        div.mean(),
        np.abs(div).mean(),
        np.abs(curl).mean(),
        gmag.mean(),
    ]
    return feats


def raw_cell_features(rgb_block: np.ndarray, flow_block: np.ndarray) -> np.ndarray:
    vals = _rgb_cell_features(rgb_block.astype(np.float64))
    vals += _flow_cell_features(flow_block.astype(np.float64))
    return np.array(vals, dtype=np.float64)


def encode(sample: SampleSequence, cfg: EncoderConfig = EncoderConfig()) -> LatentMap:
    """Deterministic per-cell feature extraction, z-normalized per recipe."""
    global ENCODE_CALLS
    h, w, _ = sample.rgb.shape
    if h % cfg.cell or w % cfg.cell:
        raise ShapeMismatchError(
            f"cell size {cfg.cell} does not divide image {h}x{w}"
        )
    ENCODE_CALLS += 1
    gh, gw = h // cfg.cell, w // cfg.cell
    grid = np.empty((gh, gw, cfg.depth), dtype=np.float64)
    rgb = sample.rgb.astype(np.float64)
    flows = sample.flows.astype(np.float64)
    for i in range(gh):
        for j in range(gw):
            y0, y1 = i * cfg.cell, (i + 1) * cfg.cell
            x0, x1 = j * cfg.cell, (j + 1) * cfg.cell
            grid[i, j] = raw_cell_features(rgb[y0:y1, x0:x1], flows[:, y0:y1, x0:x1])
    grid = _GAIN * _SQUASH * np.tanh(((grid - _MU) / _SIGMA) / _SQUASH)
    if not np.all(np.isfinite(grid)):
        raise ValueError("encoder produced non-finite features")
    return LatentMap(
        grid=grid.astype(np.float32),
        sample_id=sample.sample_id,
        cell=cfg.cell,
        recipe_version=cfg.recipe_version,
    )


# ---------------------------------------------------------------------------
# additive pixel decomposition (relevance propagation support)


def _onehot_argmax(arr: np.ndarray) -> np.ndarray:
    out = np.zeros_like(arr)
    out.reshape(-1)[int(np.argmax(arr))] = 1.0
    return out


def pixel_shares(sample: SampleSequence, cell_hw: tuple[int, int], cfg: EncoderConfig):
    """Non-negative per-pixel share of each feature inside one cell's block.

    Returns a list aligned with FEATURE_NAMES of ("rgb", (c, c)) or
    ("flow", (k-1, c, c)) share arrays. Shares are the z+-style positive
    magnitudes of each pixel's additive contribution to the raw feature;
    variance-type features use absolute/squared deviations.
    """
    i, j = cell_hw
    c = cfg.cell
    rgb = sample.rgb.astype(np.float64)[i * c : (i + 1) * c, j * c : (j + 1) * c]
    fl = sample.flows.astype(np.float64)[:, i * c : (i + 1) * c, j * c : (j + 1) * c]
    shares = []

    for ch in range(3):  # mean_*
        shares.append(("rgb", np.maximum(rgb[:, :, ch], 0.0)))
    for ch in range(3):  # logvar_*: share of the underlying variance
        shares.append(("rgb", np.abs(rgb[:, :, ch] - rgb[:, :, ch].mean())))
    for ch in range(3):  # loggrad_*: share of the underlying gradient energy
        gx, gy = _grad(rgb[:, :, ch])
        shares.append(("rgb", np.hypot(gx, gy)))
    gray = rgb.mean(axis=2)
    ggx, ggy = _grad(gray)
    gmag = np.hypot(ggx, ggy)
    ang = np.mod(np.arctan2(ggy, ggx), np.pi)
    for b in range(4):  # orient_*
        sel = (ang >= b * np.pi / 4) & (ang < (b + 1) * np.pi / 4)
        shares.append(("rgb", gmag * sel))
    for ch in range(3):  # range_*
        shares.append(("rgb", _onehot_argmax(rgb[:, :, ch])))
    shares.append(("rgb", (gmag < _FLAT_GRAD_THRESHOLD).astype(np.float64)))  # flat_frac

    dx, dy = fl[..., 0], fl[..., 1]
    mag = np.hypot(dx, dy)
    shares.append(("flow", mag.copy()))  # flow_mean_mag
    shares.append(("flow", _onehot_argmax(mag)))  # flow_max_mag
    argmin = np.zeros_like(mag)
    argmin.reshape(-1)[int(np.argmin(mag))] = 1.0
    shares.append(("flow", argmin))  # flow_min_mag
    shares.append(("flow", np.abs(dx)))  # flow_mean_dx
    shares.append(("flow", np.abs(dy)))  # flow_mean_dy
    shares.append(("flow", np.abs(dx) + np.abs(dy)))  # flow_mean_abs
    tdev = (dx - dx.mean(axis=0)) ** 2 + (dy - dy.mean(axis=0)) ** 2
    shares.append(("flow", tdev))  # flow_tvar
    shares.append(("flow", (mag - mag.mean(axis=0)) ** 2))  # flow_tvar_mag
    trange = mag.max(axis=0) - mag.min(axis=0)  # flow_max_trange_mag
    pix = _onehot_argmax(trange)
    dev = np.abs(mag - mag.mean(axis=0))
    tshare = dev * pix[None, :, :]
    shares.append(("flow", tshare))
    sv = (mag - mag.mean(axis=(1, 2), keepdims=True)) ** 2  # flow_svar_mag
    shares.append(("flow", sv))
    lag1 = np.abs(dx[:-1] * dx[1:] + dy[:-1] * dy[1:])  # flow_lag1_dot
    lshare = np.zeros_like(mag)
    lshare[:-1] += 0.5 * lag1
    lshare[1:] += 0.5 * lag1
    shares.append(("flow", lshare))
    divs, curls, gmags = [], [], []
    for f in range(fl.shape[0]):
        dxx, _ = _grad(dx[f])
        _, dyy = _grad(dy[f])
        divs.append(dxx + dyy)
        dyx, _ = _grad(dy[f])
        _, dxy = _grad(dx[f])
        curls.append(dyx - dxy)
        mgx, mgy = _grad(mag[f])
        gmags.append(np.hypot(mgx, mgy))
    div = np.abs(np.stack(divs))
    curl = np.abs(np.stack(curls))
    gm = np.stack(gmags)
    shares.append(("flow", div))  # flow_mean_div
    shares.append(("flow", div))  # flow_mean_abs_div
    shares.append(("flow", curl))  # flow_mean_abs_curl
    shares.append(("flow", gm))  # flow_gradmag_mag
    assert len(shares) == DEPTH
    return shares


FLOW_FEATURE_SLICE = slice(17, DEPTH)
