"""Seed-face generation, triangulation, projection and warp rendering.

A clip is rendered from one seed image: the 68 seed landmarks plus 8 pinned
border anchors are Delaunay-triangulated once, then every output frame is an
inverse piecewise-affine warp of the seed toward that frame's projected
landmarks. Triangles whose vertices did not move are skipped, which makes the
identity warp exactly pixel-preserving.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.spatial import Delaunay

from .audio import AudioClip
from .errors import ValidationError
from .landmarks import JAW, LandmarkSequence, LandmarkTemplate, canonical_template

DEGENERATE_AREA = 1e-2  # px^2; smaller target triangles use the fallback path


@dataclass(frozen=True)
class Camera:
    """Orthographic projection: px = scale * coord + offset, z dropped."""

    scale: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValidationError("camera scale must be positive")


@dataclass(frozen=True)
class SeedFace:
    image: np.ndarray        # (H, W, 3) uint8
    landmarks2d: np.ndarray  # (68, 2) pixel coordinates
    id: str

    def __post_init__(self):
        img = np.asarray(self.image)
        lm = np.asarray(self.landmarks2d, dtype=np.float64)
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "landmarks2d", lm)
        if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
            raise ValidationError("seed image must be (H, W, 3) uint8")
        if lm.shape != (68, 2):
            raise ValidationError("seed face needs exactly 68 landmarks")
        h, w = img.shape[:2]
        if (lm[:, 0].min() < 0 or lm[:, 0].max() > w - 1
                or lm[:, 1].min() < 0 or lm[:, 1].max() > h - 1):
            raise ValidationError("all landmarks must lie inside the image")


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray   # (76, 2): 68 landmarks + 8 border anchors
    triangles: np.ndarray  # (m, 3) index triples

    def __post_init__(self):
        areas = triangle_areas(self.vertices, self.triangles)
        if np.any(np.abs(areas) < 1e-9):
            raise ValidationError("triangulation produced a degenerate triangle")


@dataclass(frozen=True)
class ClipFrames:
    frames: list            # of (H, W, 3) uint8 arrays
    fps: float
    audio: AudioClip
    landmarks2d: np.ndarray  # (n, 68, 2)
    flags: list = field(default_factory=list)  # per-frame degenerate triangle ids

    def __post_init__(self):
        if not self.frames:
            raise ValidationError("clip has no frames")
        shape = self.frames[0].shape
        if any(f.shape != shape for f in self.frames):
            raise ValidationError("all frames must share dimensions")
        if len(self.frames) != len(self.landmarks2d):
            raise ValidationError("frame count must match landmark record")

    def __len__(self):
        return len(self.frames)


def project(seq: LandmarkSequence, camera: Camera) -> np.ndarray:
    """Orthographic projection of every frame to pixel coordinates."""
    out = np.empty((len(seq), 68, 2))
    out[:, :, 0] = camera.scale * seq.frames[:, :, 0] + camera.cx
    out[:, :, 1] = camera.scale * seq.frames[:, :, 1] + camera.cy
    return out


def derive_template(seed_face: SeedFace) -> tuple:
    """Unproject the seed landmarks to unit head width + canonical depth.

    Returns (template, camera) such that projecting the template with the
    camera reproduces the seed landmarks exactly.
    """
    lm = seed_face.landmarks2d
    jaw_x = lm[JAW, 0]
    scale = float(jaw_x.max() - jaw_x.min())
    if scale <= 0:
        raise ValidationError("degenerate seed landmarks: zero head width")
    cx = float((jaw_x.max() + jaw_x.min()) / 2.0)
    cy = float(lm[:, 1].mean())
    pts = np.zeros((68, 3))
    pts[:, 0] = (lm[:, 0] - cx) / scale
    pts[:, 1] = (lm[:, 1] - cy) / scale
    pts[:, 2] = canonical_template().points[:, 2]
    return LandmarkTemplate(pts), Camera(scale, cx, cy)


# ---------------------------------------------------------------------------
# Triangulation

def border_anchors(height: int, width: int) -> np.ndarray:
    """Corners and edge midpoints, pinned so the background stays static."""
    w, h = width - 1, height - 1
    return np.array([
        [0, 0], [w // 2, 0], [w, 0],
        [0, h // 2], [w, h // 2],
        [0, h], [w // 2, h], [w, h],
    ], dtype=np.float64)


def delaunay_triangles(points: np.ndarray) -> np.ndarray:
    """Index triples of the Delaunay triangulation of a 2-D point set."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        raise ValidationError("need at least three points to triangulate")
    tri = Delaunay(pts)
    simplices = tri.simplices
    areas = triangle_areas(pts, simplices)
    keep = np.abs(areas) > 1e-9
    if not np.all(keep):
        simplices = simplices[keep]
    return simplices


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


def triangulate(seed_face: SeedFace) -> TriangleMesh:
    """Delaunay mesh over the 68 landmarks plus 8 border anchors."""
    h, w = seed_face.image.shape[:2]
    vertices = np.concatenate([seed_face.landmarks2d, border_anchors(h, w)])
    return TriangleMesh(vertices, delaunay_triangles(vertices))


# ---------------------------------------------------------------------------
# Warping

def _affine_target_to_source(src_tri, tgt_tri):
    """Closed-form affine (a, b, tx, c, d, ty) mapping target px to source px."""
    (t0x, t0y), (t1x, t1y), (t2x, t2y) = tgt_tri
    (s0x, s0y), (s1x, s1y), (s2x, s2y) = src_tri
    d1x, d1y = t1x - t0x, t1y - t0y
    d2x, d2y = t2x - t0x, t2y - t0y
    e1x, e1y = s1x - s0x, s1y - s0y
    e2x, e2y = s2x - s0x, s2y - s0y
    det = d1x * d2y - d1y * d2x
    a = (e1x * d2y - e2x * d1y) / det
    b = (-e1x * d2x + e2x * d1x) / det
    c = (e1y * d2y - e2y * d1y) / det
    d = (-e1y * d2x + e2y * d1x) / det
    return a, b, s0x - a * t0x - b * t0y, c, d, s0y - c * t0x - d * t0y


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a float64 (H, W, 3) image with clamped bilinear interpolation."""
    h, w = img.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = xs.astype(int)
    y0 = ys.astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[:, None]
    fy = (ys - y0)[:, None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


@dataclass(frozen=True)
class WarpResult:
    image: np.ndarray
    degenerate: list  # triangle indices rendered via the fallback path


def warp_frame(seed_face: SeedFace, mesh: TriangleMesh,
               target_landmarks2d: np.ndarray,
               fallback_image: np.ndarray | None = None) -> WarpResult:
    """Inverse piecewise-affine warp of the seed toward target landmarks."""
    tgt = np.asarray(target_landmarks2d, dtype=np.float64)
    if tgt.shape != (68, 2):
        raise ValidationError("target landmarks must be 68 x 2")
    if not np.all(np.isfinite(tgt)):
        raise ValidationError("target landmarks must be finite")
    h, w = seed_face.image.shape[:2]
    src_verts = mesh.vertices
    tgt_verts = np.concatenate([tgt, src_verts[68:]])  # anchors pinned

    out = seed_face.image.copy()
    fallback = fallback_image if fallback_image is not None else seed_face.image
    degenerate = []

    moved = np.nonzero(np.any(
        src_verts[mesh.triangles] != tgt_verts[mesh.triangles], axis=(1, 2)))[0]
    if moved.size == 0:
        return WarpResult(out, degenerate)

    seed_float = seed_face.image.astype(np.float64)
    all_px, all_py, all_sx, all_sy = [], [], [], []
    for i in moved:
        tri = mesh.triangles[i]
        t = tgt_verts[tri]
        area = 0.5 * abs((t[1, 0] - t[0, 0]) * (t[2, 1] - t[0, 1])
                         - (t[2, 0] - t[0, 0]) * (t[1, 1] - t[0, 1]))
        x0 = max(int(np.floor(t[:, 0].min())), 0)
        x1 = min(int(np.ceil(t[:, 0].max())), w - 1)
        y0 = max(int(np.floor(t[:, 1].min())), 0)
        y1 = min(int(np.ceil(t[:, 1].max())), h - 1)
        if x1 < x0 or y1 < y0:
            continue
        if area < DEGENERATE_AREA:
            degenerate.append(int(i))
            out[y0:y1 + 1, x0:x1 + 1] = fallback[y0:y1 + 1, x0:x1 + 1]
            continue
        gx = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
        gy = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
        # barycentric inside test against the target triangle
        d = ((t[1, 1] - t[2, 1]) * (t[0, 0] - t[2, 0])
             + (t[2, 0] - t[1, 0]) * (t[0, 1] - t[2, 1]))
        l1 = ((t[1, 1] - t[2, 1]) * (gx - t[2, 0])
              + (t[2, 0] - t[1, 0]) * (gy - t[2, 1])) / d
        l2 = ((t[2, 1] - t[0, 1]) * (gx - t[2, 0])
              + (t[0, 0] - t[2, 0]) * (gy - t[2, 1])) / d
        inside = (l1 >= -1e-9) & (l2 >= -1e-9) & (l1 + l2 <= 1.0 + 1e-9)
        if not inside.any():
            continue
        iy, ix = np.nonzero(inside)
        px = ix + x0
        py = iy + y0
        a, bb, tx, c, dd, ty = _affine_target_to_source(src_verts[tri], t)
        all_px.append(px)
        all_py.append(py)
        all_sx.append(a * px + bb * py + tx)
        all_sy.append(c * px + dd * py + ty)

    if all_px:
        px = np.concatenate(all_px)
        py = np.concatenate(all_py)
        sx = np.concatenate(all_sx)
        sy = np.concatenate(all_sy)
        samples = np.clip(np.rint(_bilinear(seed_float, sx, sy)), 0, 255)
        out[py, px] = samples.astype(np.uint8)

    return WarpResult(out, degenerate)


def render_clip(seed_face: SeedFace, landmark_seq: LandmarkSequence,
                audio: AudioClip) -> ClipFrames:
    """One warped frame per landmark frame, audio attached unmodified."""
    if abs(audio.duration_seconds - landmark_seq.duration_s) > 1.0 / landmark_seq.fps:
        raise ValidationError(
            f"audio ({audio.duration_seconds:.3f}s) and landmarks "
            f"({landmark_seq.duration_s:.3f}s) differ by more than one frame")
    _template, camera = derive_template(seed_face)
    mesh = triangulate(seed_face)
    targets = project(landmark_seq, camera)
    frames = []
    flags = []
    prev = seed_face.image
    for f in range(len(landmark_seq)):
        result = warp_frame(seed_face, mesh, targets[f], fallback_image=prev)
        frames.append(result.image)
        flags.append(result.degenerate)
        prev = result.image
    return ClipFrames(frames, landmark_seq.fps, audio, targets, flags)


def save_frames(clip: ClipFrames, directory) -> list:
    """Write zero-padded numbered PNGs; returns the file names."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for i, frame in enumerate(clip.frames):
        name = f"{i + 1:05d}.png"
        Image.fromarray(frame).save(directory / name)
        names.append(name)
    return names


# ---------------------------------------------------------------------------
# Procedural seed faces

@dataclass(frozen=True)
class FaceParams:
    height: int = 256
    width: int = 256


def _hsv_color(rng, h_range, s_range, v_range):
    import colorsys
    h = rng.uniform(*h_range) % 1.0
    s = rng.uniform(*s_range)
    v = rng.uniform(*v_range)
    return tuple(int(round(c * 255)) for c in colorsys.hsv_to_rgb(h, s, v))


def generate_test_face(params: FaceParams, seed: int) -> SeedFace:
    """Procedural face whose landmark annotation is exact by construction."""
    if params.height < 128 or params.width < 128:
        raise ValidationError("face image must be at least 128 x 128")
    rng = np.random.default_rng(int(seed))
    h, w = params.height, params.width

    base = canonical_template().points.copy()
    base[:, 0] *= rng.uniform(0.94, 1.06)
    base[:, 1] *= rng.uniform(0.94, 1.06)
    for group in (slice(36, 42), slice(42, 48)):
        ctr = base[group].mean(axis=0)
        base[group] = ctr + (base[group] - ctr) * rng.uniform(0.9, 1.15)
    mouth = slice(48, 68)
    mctr = base[mouth].mean(axis=0)
    base[mouth, 0] = mctr[0] + (base[mouth, 0] - mctr[0]) * rng.uniform(0.92, 1.1)
    base[17:27, 1] += rng.uniform(-0.015, 0.015)

    scale = 0.60 * min(h, w)
    cam = Camera(scale, w / 2.0, h * 0.45)
    lm = np.empty((68, 2))
    lm[:, 0] = cam.scale * base[:, 0] + cam.cx
    lm[:, 1] = cam.scale * base[:, 1] + cam.cy

    bg = _hsv_color(rng, (0.0, 1.0), (0.08, 0.25), (0.75, 0.95))
    skin = _hsv_color(rng, (0.05, 0.11), (0.25, 0.55), (0.55, 0.95))
    lip = _hsv_color(rng, (0.97, 1.03), (0.45, 0.75), (0.45, 0.75))
    iris = _hsv_color(rng, (0.3, 0.65), (0.4, 0.8), (0.25, 0.6))
    hairline = tuple(int(c * 0.55) for c in skin)
    dark = (40, 30, 30)

    img = Image.new("RGB", (w, h), bg)
    draw = ImageDraw.Draw(img)

    jaw = lm[0:17]
    brow_top = lm[17:27, 1].min()
    head_left = jaw[:, 0].min() - 0.04 * scale
    head_right = jaw[:, 0].max() + 0.04 * scale
    head_top = brow_top - 0.34 * scale
    head_bottom = jaw[:, 1].max() + 0.02 * scale
    draw.ellipse([head_left, head_top, head_right, head_bottom], fill=skin)
    draw.polygon([tuple(p) for p in jaw] + [(jaw[-1, 0], brow_top), (jaw[0, 0], brow_top)],
                 fill=skin)
    draw.line([tuple(p) for p in jaw], fill=hairline, width=2)

    for group in (lm[17:22], lm[22:27]):
        draw.line([tuple(p) for p in group], fill=dark, width=4)

    for eye in (lm[36:42], lm[42:48]):
        draw.polygon([tuple(p) for p in eye], fill=(250, 250, 250), outline=dark)
        ctr = eye.mean(axis=0)
        r = 0.35 * (eye[:, 0].max() - eye[:, 0].min())
        draw.ellipse([ctr[0] - r, ctr[1] - r, ctr[0] + r, ctr[1] + r], fill=iris)
        rp = r * 0.45
        draw.ellipse([ctr[0] - rp, ctr[1] - rp, ctr[0] + rp, ctr[1] + rp], fill=(15, 15, 15))

    draw.line([tuple(p) for p in lm[27:31]], fill=hairline, width=3)
    draw.line([tuple(p) for p in lm[31:36]], fill=hairline, width=2)

    draw.polygon([tuple(p) for p in lm[48:60]], fill=lip, outline=hairline)
    draw.polygon([tuple(p) for p in lm[60:68]], fill=dark)
    draw.line([tuple(lm[60]), tuple(lm[64])], fill=dark, width=2)

    return SeedFace(np.asarray(img, dtype=np.uint8), lm, f"gen-{int(seed):04d}")


def load_seed_face(image_path, landmarks_path, face_id: str) -> SeedFace:
    """Import a seed face from an image plus a 68-row idx,x,y landmark CSV."""
    img = np.asarray(Image.open(image_path).convert("RGB"), dtype=np.uint8)
    lm = np.zeros((68, 2))
    seen = set()
    with open(landmarks_path) as fh:
        header = fh.readline().strip()
        if header != "idx,x,y":
            raise ValidationError(f"{landmarks_path}: expected header idx,x,y")
        for line in fh:
            idx, x, y = line.strip().split(",")
            lm[int(idx)] = (float(x), float(y))
            seen.add(int(idx))
    if len(seen) != 68:
        raise ValidationError(f"{landmarks_path}: need exactly 68 landmark rows")
    return SeedFace(img, lm, face_id)
