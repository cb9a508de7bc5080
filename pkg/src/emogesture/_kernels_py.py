"""NumPy reference implementations of the numeric kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
comparison baseline in ``benchmarks/bench_kernels.py``. Signatures and error
behaviour match the Cython module exactly.
"""
import numpy as np

from .errors import DegenerateRotationError

NORM_EPS = 1e-8
PARALLEL_EPS = 1e-8


def rot6d_to_matrix(r6):
    r6 = np.ascontiguousarray(r6, dtype=np.float64).reshape(-1, 6)
    a1 = r6[:, :3]
    a2 = r6[:, 3:]
    n1 = np.linalg.norm(a1, axis=1)
    n2 = np.linalg.norm(a2, axis=1)
    bad = (n1 < NORM_EPS) | (n2 < NORM_EPS)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.einsum("ij,ij->i", a1, a2) / (n1 * n2)
    bad |= ~(np.abs(cos) <= 1.0 - PARALLEL_EPS)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise DegenerateRotationError(f"degenerate 6D rotation at row {k}: {r6[k].tolist()}")
    b1 = a1 / n1[:, None]
    b2 = a2 - np.einsum("ij,ij->i", b1, a2)[:, None] * b1
    b2 /= np.linalg.norm(b2, axis=1)[:, None]
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def geodesic_angle(ra, rb):
    ra = np.asarray(ra, dtype=np.float64).reshape(-1, 3, 3)
    rb = np.asarray(rb, dtype=np.float64).reshape(-1, 3, 3)
    tr = np.einsum("kij,kij->k", ra, rb)
    return np.arccos(np.clip((tr - 1.0) * 0.5, -1.0, 1.0))


def rot6d_geodesic(a6, b6):
    return geodesic_angle(rot6d_to_matrix(a6), rot6d_to_matrix(b6))


def angular_speed(frames, fps):
    frames = np.asarray(frames, dtype=np.float64)
    n, width = frames.shape
    j = width // 6
    mats = rot6d_to_matrix(frames.reshape(-1, 6)).reshape(n, j, 3, 3)
    ang = geodesic_angle(mats[:-1].reshape(-1, 3, 3), mats[1:].reshape(-1, 3, 3))
    return ang.reshape(n - 1, j).mean(axis=1) * fps


def forward_kinematics(rotmats, parents, offsets, order):
    rotmats = np.asarray(rotmats, dtype=np.float64)
    n, j = rotmats.shape[:2]
    glob = np.zeros((n, j, 3, 3))
    pos = np.zeros((n, j, 3))
    for k in order:
        p = parents[k]
        if p < 0:
            glob[:, k] = rotmats[:, k]
            continue
        glob[:, k] = glob[:, p] @ rotmats[:, k]
        pos[:, k] = pos[:, p] + glob[:, p] @ offsets[k]
    return pos


def beat_align_score(audio_beats, gesture_beats, sigma):
    audio_beats = np.asarray(audio_beats, dtype=np.float64)
    g = np.sort(np.asarray(gesture_beats, dtype=np.float64))
    if audio_beats.size == 0:
        return 1.0
    if g.size == 0:
        return 0.0
    idx = np.searchsorted(g, audio_beats)
    lo = g[np.clip(idx - 1, 0, g.size - 1)]
    hi = g[np.clip(idx, 0, g.size - 1)]
    d = np.minimum(np.abs(audio_beats - lo), np.abs(audio_beats - hi))
    return float(np.mean(np.exp(-(d * d) / (2.0 * sigma * sigma))))


def pairwise_l2(samples):
    samples = np.asarray(samples, dtype=np.float64)
    k, _, width = samples.shape
    n = samples.shape[1]
    iu, ju = np.triu_indices(k, 1)
    diff = samples[iu] - samples[ju]
    # accumulate in the same order as the compiled kernel so both agree bit for bit
    sq = np.zeros(diff.shape[:2])
    for c in range(width):
        sq += diff[:, :, c] * diff[:, :, c]
    dist = np.sqrt(sq)
    acc = np.zeros(len(iu))
    for t in range(n):
        acc += dist[:, t]
    return acc / n / np.sqrt(width)
