import numpy as np
import pytest

from talkforge.audio import sine_clip
from talkforge.errors import ValidationError
from talkforge.landmarks import LandmarkSequence, canonical_template
from talkforge.render import (Camera, FaceParams, SeedFace, border_anchors,
                              delaunay_triangles, derive_template,
                              generate_test_face, load_seed_face, project,
                              render_clip, save_frames, triangle_areas,
                              triangulate, warp_frame)


@pytest.fixture(scope="module")
def face():
    return generate_test_face(FaceParams(), seed=7)


def brute_force_delaunay_ok(points, triangles):
    """Every triangle's open circumcircle must contain no other point."""
    pts = np.asarray(points, dtype=float)
    for tri in triangles:
        a, b, c = pts[tri]
        d = 2 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
        if abs(d) < 1e-12:
            return False
        ux = ((a @ a) * (b[1] - c[1]) + (b @ b) * (c[1] - a[1])
              + (c @ c) * (a[1] - b[1])) / d
        uy = ((a @ a) * (c[0] - b[0]) + (b @ b) * (a[0] - c[0])
              + (c @ c) * (b[0] - a[0])) / d
        r2 = (a[0] - ux) ** 2 + (a[1] - uy) ** 2
        for i, p in enumerate(pts):
            if i in tri:
                continue
            if (p[0] - ux) ** 2 + (p[1] - uy) ** 2 < r2 - 1e-9:
                return False
    return True


class TestSeedFace:
    def test_deterministic(self):
        a = generate_test_face(FaceParams(), seed=3)
        b = generate_test_face(FaceParams(), seed=3)
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.landmarks2d, b.landmarks2d)

    def test_twenty_distinct(self):
        faces = [generate_test_face(FaceParams(), seed=s) for s in range(20)]
        for i in range(20):
            for j in range(i + 1, 20):
                assert not np.array_equal(faces[i].image, faces[j].image)

    def test_landmarks_inside(self, face):
        h, w = face.image.shape[:2]
        assert face.landmarks2d[:, 0].min() > 0
        assert face.landmarks2d[:, 0].max() < w - 1
        assert face.landmarks2d[:, 1].min() > 0
        assert face.landmarks2d[:, 1].max() < h - 1

    def test_too_small_rejected(self):
        with pytest.raises(ValidationError):
            generate_test_face(FaceParams(100, 100), seed=0)

    def test_out_of_bounds_landmarks_rejected(self):
        img = np.zeros((128, 128, 3), dtype=np.uint8)
        lm = np.full((68, 2), -5.0)
        with pytest.raises(ValidationError):
            SeedFace(img, lm, "bad")

    def test_load_seed_face(self, face, tmp_path):
        from PIL import Image
        Image.fromarray(face.image).save(tmp_path / "f.png")
        with open(tmp_path / "f.csv", "w") as fh:
            fh.write("idx,x,y\n")
            for i, (x, y) in enumerate(face.landmarks2d):
                fh.write(f"{i},{x},{y}\n")
        loaded = load_seed_face(tmp_path / "f.png", tmp_path / "f.csv", "x")
        assert np.array_equal(loaded.image, face.image)
        assert np.allclose(loaded.landmarks2d, face.landmarks2d)


class TestTriangulate:
    def test_unit_square_two_triangles(self):
        square = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        tris = delaunay_triangles(square)
        assert len(tris) == 2
        assert brute_force_delaunay_ok(square, tris)
        assert np.abs(triangle_areas(square, tris)).sum() == pytest.approx(1.0)

    def test_partition_covers_hull(self, face):
        mesh = triangulate(face)
        areas = np.abs(triangle_areas(mesh.vertices, mesh.triangles))
        assert np.all(areas > 1e-9)
        from scipy.spatial import ConvexHull
        hull_area = ConvexHull(mesh.vertices).volume
        assert areas.sum() == pytest.approx(hull_area, abs=0.5)

    def test_vertices_count(self, face):
        mesh = triangulate(face)
        assert mesh.vertices.shape == (76, 2)

    def test_delaunay_empty_circumcircle(self, face):
        mesh = triangulate(face)
        assert brute_force_delaunay_ok(mesh.vertices, mesh.triangles)

    def test_collinear_rejected(self):
        pts = np.stack([np.arange(5.0), np.arange(5.0)], axis=1)
        with pytest.raises(Exception):
            delaunay_triangles(pts)


class TestProject:
    def test_passthrough(self):
        template = canonical_template()
        frames = np.repeat(template.points[None], 2, axis=0)
        seq = LandmarkSequence(frames, 25.0, 2 / 25)
        out = project(seq, Camera(1.0, 0.0, 0.0))
        assert np.allclose(out, frames[:, :, :2])

    def test_scale_linearity(self):
        template = canonical_template()
        frames = template.points[None]
        seq = LandmarkSequence(frames, 25.0, 1 / 25)
        a = project(seq, Camera(2.0, 0.0, 0.0))
        b = project(seq, Camera(1.0, 0.0, 0.0))
        assert np.allclose(a, 2.0 * b)

    def test_frontal_fits_default_frame(self):
        template = canonical_template()
        frames = template.points[None]
        seq = LandmarkSequence(frames, 25.0, 1 / 25)
        out = project(seq, Camera(0.60 * 256, 128.0, 0.45 * 256))
        assert out[..., 0].min() >= 0 and out[..., 0].max() <= 255
        assert out[..., 1].min() >= 0 and out[..., 1].max() <= 255

    def test_derive_template_roundtrip(self, face):
        template, camera = derive_template(face)
        assert template.head_width == pytest.approx(1.0)
        frames = template.points[None]
        seq = LandmarkSequence(frames, 25.0, 1 / 25)
        back = project(seq, camera)[0]
        assert np.allclose(back, face.landmarks2d, atol=1e-9)


class TestWarp:
    def test_identity_bit_exact(self, face):
        mesh = triangulate(face)
        result = warp_frame(face, mesh, face.landmarks2d)
        assert np.array_equal(result.image, face.image)
        assert result.degenerate == []

    def test_translation_recovered(self, face):
        mesh = triangulate(face)
        shifted = warp_frame(face, mesh, face.landmarks2d + [5.0, 0.0]).image
        from talkforge.quality import face_box
        x0, y0, x1, y1 = (int(v) for v in face_box(
            face.landmarks2d, 0.0, face.image.shape[:2]))
        a = face.image[y0:y1, x0:x1].astype(float).mean(axis=2)
        b = shifted[y0:y1, x0:x1].astype(float).mean(axis=2)
        best, best_shift = -2.0, None
        for sh in range(-8, 9):
            aa = a[:, 8:-8]
            bb = b[:, 8 + sh:b.shape[1] - 8 + sh]
            c = np.corrcoef(aa.ravel(), bb.ravel())[0, 1]
            if c > best:
                best, best_shift = c, sh
        assert abs(best_shift - 5) <= 1

    def test_mouth_region_changes_border_static(self, face):
        mesh = triangulate(face)
        target = face.landmarks2d.copy()
        from talkforge.landmarks import INNER_BOTTOM, JAW
        target[INNER_BOTTOM, 1] += 6.0
        target[JAW, 1] += 3.0
        out = warp_frame(face, mesh, target).image
        assert not np.array_equal(out, face.image)
        assert np.array_equal(out[:4], face.image[:4])  # top border untouched
        diff = np.any(out != face.image, axis=2)
        ys, xs = np.nonzero(diff)
        box = face.landmarks2d
        assert ys.min() >= box[:, 1].min() - 40

    def test_never_nan_and_bounded(self, face):
        mesh = triangulate(face)
        rng = np.random.default_rng(0)
        target = face.landmarks2d + rng.uniform(-4, 4, size=(68, 2))
        out = warp_frame(face, mesh, target).image
        assert out.dtype == np.uint8

    def test_degenerate_triangle_flagged(self, face):
        mesh = triangulate(face)
        target = face.landmarks2d.copy()
        # collapse the inner-lip ring onto one point
        target[60:68] = target[60]
        result = warp_frame(face, mesh, target)
        assert len(result.degenerate) > 0

    def test_bad_target_shape(self, face):
        mesh = triangulate(face)
        with pytest.raises(ValidationError):
            warp_frame(face, mesh, np.zeros((10, 2)))


class TestRenderClip:
    def test_zero_displacement_frames_equal_seed(self, face):
        template, camera = derive_template(face)
        n = 10
        frames = np.repeat(template.points[None], n, axis=0)
        seq = LandmarkSequence(frames, 25.0, n / 25)
        audio = sine_clip(440, n / 25, 16000)
        clip = render_clip(face, seq, audio)
        assert len(clip) == n
        for f in clip.frames:
            assert np.array_equal(f, face.image)

    def test_duration_mismatch_rejected(self, face):
        template, _ = derive_template(face)
        frames = np.repeat(template.points[None], 10, axis=0)
        seq = LandmarkSequence(frames, 25.0, 10 / 25)
        with pytest.raises(ValidationError):
            render_clip(face, seq, sine_clip(440, 2.0, 16000))

    def test_save_frames(self, face, tmp_path):
        template, _ = derive_template(face)
        frames = np.repeat(template.points[None], 3, axis=0)
        seq = LandmarkSequence(frames, 25.0, 3 / 25)
        clip = render_clip(face, seq, sine_clip(440, 3 / 25, 16000))
        names = save_frames(clip, tmp_path / "frames")
        assert names == ["00001.png", "00002.png", "00003.png"]
        assert (tmp_path / "frames" / "00001.png").exists()


def test_border_anchors_cover_corners():
    anchors = border_anchors(256, 256)
    assert anchors.shape == (8, 2)
    assert [0, 0] in anchors.tolist()
    assert [255, 255] in anchors.tolist()
