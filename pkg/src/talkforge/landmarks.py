"""Canonical 68-point facial landmark layout and sequence operations.

Coordinates live in a normalized face space: x to the subject's right edge of
the image, y downward (image convention), z toward the viewer, with the jaw
spanning exactly one head width (x in [-0.5, 0.5]). Index groups follow the
standard 68-point convention: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47,
outer lips 48-59, inner lips 60-67.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

JAW = list(range(0, 17))
BROWS = list(range(17, 27))
NOSE = list(range(27, 36))
EYES = list(range(36, 48))
OUTER_LIPS = list(range(48, 60))
INNER_LIPS = list(range(60, 68))

INNER_TOP = [61, 62, 63]
INNER_BOTTOM = [67, 66, 65]
LIP_CORNERS_OUTER = (48, 54)
LIP_CORNERS_INNER = (60, 64)

# (upper lid, lower lid) index pairs, left eye then right eye
EYELID_PAIRS = [(37, 41), (38, 40), (43, 47), (44, 46)]
LEFT_EYE = list(range(36, 42))
RIGHT_EYE = list(range(42, 48))
# x-mirror correspondence between the two eyes
EYE_MIRROR = {36: 45, 37: 44, 38: 43, 39: 42, 40: 47, 41: 46}

MOUTH_Y = 0.28
OUTER_HALF_WIDTH = 0.16
INNER_HALF_WIDTH = 0.125


def n_frames_for(duration_s: float, fps: float) -> int:
    """Frame-count law shared by every sequence producer."""
    return int(np.ceil(duration_s * fps - 1e-9))


@dataclass(frozen=True)
class LandmarkTemplate:
    """68 x 3 canonical coordinates at unit head width."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.shape != (68, 3):
            raise ValidationError("template must be 68 x 3")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("template coordinates must be finite")

    @property
    def head_width(self) -> float:
        return float(self.points[JAW, 0].max() - self.points[JAW, 0].min())


@dataclass(frozen=True)
class LandmarkSequence:
    frames: np.ndarray  # (n, 68, 3)
    fps: float
    duration_s: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 3 or frames.shape[1:] != (68, 3):
            raise ValidationError("frames must be (n, 68, 3)")
        if not np.all(np.isfinite(frames)):
            raise ValidationError("landmark coordinates must be finite")
        if len(frames) != n_frames_for(self.duration_s, self.fps):
            raise ValidationError("frame count must equal ceil(duration * fps)")

    def __len__(self):
        return len(self.frames)

    @property
    def frame_times(self) -> np.ndarray:
        return np.arange(len(self.frames)) / self.fps


@dataclass(frozen=True)
class PoseTrack:
    """Per-frame (yaw, pitch, roll) in radians."""

    angles: np.ndarray

    def __post_init__(self):
        ang = np.asarray(self.angles, dtype=np.float64)
        object.__setattr__(self, "angles", ang)
        if ang.ndim != 2 or ang.shape[1] != 3:
            raise ValidationError("pose track must be (n, 3)")
        if not np.all(np.isfinite(ang)):
            raise ValidationError("pose angles must be finite")

    def __len__(self):
        return len(self.angles)


def _left_brow():
    xs = np.linspace(-0.38, -0.12, 5)
    ys = -0.19 - 0.03 * np.sin(np.linspace(0.15, 0.85, 5) * np.pi)
    return np.stack([xs, ys, np.full(5, 0.02)], axis=1)


def _left_eye():
    cx, cy, hw, hh = -0.20, -0.06, 0.075, 0.028
    pts = np.array([
        [cx - hw, cy, 0.0],            # 36 outer corner
        [cx - hw / 3, cy - hh, 0.0],   # 37 upper
        [cx + hw / 3, cy - hh, 0.0],   # 38 upper
        [cx + hw, cy, 0.0],            # 39 inner corner
        [cx + hw / 3, cy + hh, 0.0],   # 40 lower
        [cx - hw / 3, cy + hh, 0.0],   # 41 lower
    ])
    pts[:, 2] = 0.03
    return pts


def canonical_template() -> LandmarkTemplate:
    pts = np.zeros((68, 3))

    # jaw: ear level (y ~ -0.02) down to the chin (y ~ 0.48)
    s = np.linspace(0.0, 1.0, 17)
    pts[JAW, 0] = -0.5 * np.cos(s * np.pi)
    pts[JAW, 1] = -0.02 + 0.50 * np.sin(s * np.pi) ** 0.9
    pts[JAW, 2] = -0.10 + 0.10 * np.sin(s * np.pi)

    left_brow = _left_brow()
    pts[17:22] = left_brow
    # right brow runs inner -> outer: mirror of the reversed left brow
    pts[22:27] = left_brow[::-1] * [-1, 1, 1]

    # nose bridge and nostril line
    pts[27] = [0.0, -0.15, 0.06]
    pts[28] = [0.0, -0.07, 0.08]
    pts[29] = [0.0, 0.00, 0.10]
    pts[30] = [0.0, 0.07, 0.12]
    nx = np.linspace(-0.08, 0.08, 5)
    pts[31:36, 0] = nx
    pts[31:36, 1] = 0.13 - 0.012 * np.cos(nx / 0.08 * np.pi / 2)
    pts[31:36, 2] = 0.06

    left_eye = _left_eye()
    pts[LEFT_EYE] = left_eye
    for li, ri in EYE_MIRROR.items():
        pts[ri] = left_eye[li - 36] * [-1, 1, 1]

    # outer lips: corners at MOUTH_Y, top arc dips above, bottom arc bulges below
    pts[48] = [-OUTER_HALF_WIDTH, MOUTH_Y, 0.05]
    top_x = np.array([-0.11, -0.055, 0.0, 0.055, 0.11])
    pts[49:54, 0] = top_x
    pts[49:54, 1] = MOUTH_Y - 0.035 * np.sin(np.pi * (top_x + OUTER_HALF_WIDTH)
                                             / (2 * OUTER_HALF_WIDTH))
    pts[49:54, 2] = 0.05
    pts[54] = [OUTER_HALF_WIDTH, MOUTH_Y, 0.05]
    bot_x = np.array([0.11, 0.055, 0.0, -0.055, -0.11])
    pts[55:60, 0] = bot_x
    pts[55:60, 1] = MOUTH_Y + 0.07 * np.sin(np.pi * (bot_x + OUTER_HALF_WIDTH)
                                            / (2 * OUTER_HALF_WIDTH))
    pts[55:60, 2] = 0.05

    # inner lips: closed at rest (top and bottom coincide at MOUTH_Y)
    pts[60] = [-INNER_HALF_WIDTH, MOUTH_Y, 0.05]
    pts[61:64, 0] = [-0.0625, 0.0, 0.0625]
    pts[61:64, 1] = MOUTH_Y
    pts[61:64, 2] = 0.05
    pts[64] = [INNER_HALF_WIDTH, MOUTH_Y, 0.05]
    pts[65:68, 0] = [0.0625, 0.0, -0.0625]
    pts[65:68, 1] = MOUTH_Y
    pts[65:68, 2] = 0.05

    return LandmarkTemplate(pts)


def mouth_opening(frames: np.ndarray) -> np.ndarray:
    """Mean vertical gap between the inner-lip top and bottom point triplets."""
    frames = np.asarray(frames)
    top = frames[..., INNER_TOP, 1].mean(axis=-1)
    bottom = frames[..., INNER_BOTTOM, 1].mean(axis=-1)
    return bottom - top


def eyelid_gaps(frame: np.ndarray) -> np.ndarray:
    """Per-pair eyelid gaps (lower y minus upper y) for one frame."""
    return np.array([frame[lo, 1] - frame[up, 1] for up, lo in EYELID_PAIRS])


def inject_blinks(seq: LandmarkSequence, seed: int, min_gap_s: float = 2.0,
                  max_gap_s: float = 6.0, blink_dur_s: float = 0.3) -> LandmarkSequence:
    """Insert seeded raised-cosine blinks; non-eye landmarks untouched."""
    if not (0 < blink_dur_s < min_gap_s):
        raise ValidationError("need 0 < blink_dur_s < min_gap_s")
    if min_gap_s > max_gap_s:
        raise ValidationError("min_gap_s must be <= max_gap_s")
    frames = seq.frames.copy()
    if seq.duration_s < blink_dur_s:
        return LandmarkSequence(frames, seq.fps, seq.duration_s)
    rng = np.random.default_rng(seed)
    onsets = []
    t = float(rng.uniform(min_gap_s, max_gap_s))
    while t + blink_dur_s <= seq.duration_s:
        onsets.append(t)
        t += float(rng.uniform(min_gap_s, max_gap_s))

    times = seq.frame_times
    for onset in onsets:
        mask = (times >= onset) & (times < onset + blink_dur_s)
        for f in np.nonzero(mask)[0]:
            # closure peaks at 0.97 so sampled troughs stay <= 10% of the gap
            # and lids never become exactly coincident
            c = 0.97 * 0.5 * (1.0 - np.cos(2.0 * np.pi * (times[f] - onset) / blink_dur_s))
            for up, lo in EYELID_PAIRS:
                gap = frames[f, lo, 1] - frames[f, up, 1]
                frames[f, up, 1] += 0.6 * c * gap
                frames[f, lo, 1] -= 0.4 * c * gap
    return LandmarkSequence(frames, seq.fps, seq.duration_s)


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Intrinsic Z-Y-X: roll about z, then yaw about y, then pitch about x."""
    cz, sz = np.cos(roll), np.sin(roll)
    cy, sy = np.cos(yaw), np.sin(yaw)
    cx, sx = np.cos(pitch), np.sin(pitch)
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    return Rz @ Ry @ Rx


def apply_head_pose(seq: LandmarkSequence, pose: PoseTrack,
                    pivot=None) -> LandmarkSequence:
    """Rigidly rotate every frame about ``pivot`` by its pose angles."""
    if len(pose) != len(seq):
        raise ValidationError("pose track length must match frame count")
    if pivot is None:
        pivot = seq.frames[0].mean(axis=0)
    pivot = np.asarray(pivot, dtype=np.float64)
    out = np.empty_like(seq.frames)
    for f in range(len(seq)):
        yaw, pitch, roll = pose.angles[f]
        R = rotation_matrix(yaw, pitch, roll)
        out[f] = (seq.frames[f] - pivot) @ R.T + pivot
    return LandmarkSequence(out, seq.fps, seq.duration_s)


def zero_pose(n_frames: int) -> PoseTrack:
    return PoseTrack(np.zeros((n_frames, 3)))


def sway_pose(n_frames: int, fps: float, yaw_amp: float = 0.08,
              pitch_amp: float = 0.04, period_s: float = 2.5,
              seed: int = 0) -> PoseTrack:
    """Gentle seeded sinusoidal head sway."""
    rng = np.random.default_rng(seed)
    phase_y, phase_p = rng.uniform(0, 2 * np.pi, 2)
    t = np.arange(n_frames) / fps
    ang = np.zeros((n_frames, 3))
    ang[:, 0] = yaw_amp * np.sin(2 * np.pi * t / period_s + phase_y)
    ang[:, 1] = pitch_amp * np.sin(2 * np.pi * t / (period_s * 1.37) + phase_p)
    return PoseTrack(ang)


# ---------------------------------------------------------------------------
# File formats

def write_landmarks(seq: LandmarkSequence, path) -> None:
    """CSV with header frame,idx,x,y,z."""
    with open(path, "w") as fh:
        fh.write("frame,idx,x,y,z\n")
        for f in range(len(seq)):
            for idx in range(68):
                x, y, z = seq.frames[f, idx]
                fh.write(f"{f},{idx},{x:.9g},{y:.9g},{z:.9g}\n")


def read_landmarks(path, fps: float) -> LandmarkSequence:
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "frame,idx,x,y,z":
            raise ValidationError(f"{path}: unexpected landmark CSV header")
        for line in fh:
            f, idx, x, y, z = line.strip().split(",")
            rows.append((int(f), int(idx), float(x), float(y), float(z)))
    if not rows:
        raise ValidationError(f"{path}: empty landmark file")
    n = rows[-1][0] + 1
    frames = np.zeros((n, 68, 3))
    for f, idx, x, y, z in rows:
        frames[f, idx] = (x, y, z)
    return LandmarkSequence(frames, fps, n / fps)


def write_pose(pose: PoseTrack, path) -> None:
    """CSV with header frame,yaw,pitch,roll."""
    with open(path, "w") as fh:
        fh.write("frame,yaw,pitch,roll\n")
        for f in range(len(pose)):
            yaw, pitch, roll = pose.angles[f]
            fh.write(f"{f},{yaw:.9g},{pitch:.9g},{roll:.9g}\n")
