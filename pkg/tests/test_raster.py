import numpy as np
import pytest

from conftest import random_sketch
from strokeforge.errors import DomainError, NumericError
from strokeforge.geometry import Canvas, Sketch, Stroke
from strokeforge.raster import render, render_backward


class TestRenderForward:
    def test_empty_sketch_is_white(self):
        out = render(Sketch(canvas=Canvas(32, 32)))
        np.testing.assert_array_equal(out.image, 1.0)
        assert out.flatten_segments == 24

    def test_horizontal_stroke_fixture(self):
        # Collinear control points trace the exact segment y=0.5, x in [0.2, 0.8].
        s = Stroke([[0.2, 0.5], [0.4, 0.5], [0.6, 0.5], [0.8, 0.5]])
        img = render(Sketch(canvas=Canvas(224, 224), strokes=(s,))).image
        assert (img[112, 45:180] < 0.5).all()

        yy, xx = np.mgrid[0:224, 0:224]
        # analytic distance from each pixel center to the segment
        px, py = xx + 0.5, yy + 0.5
        ax, bx, y0 = 0.2 * 224, 0.8 * 224, 0.5 * 224
        t = np.clip((px - ax) / (bx - ax), 0.0, 1.0)
        d = np.hypot(ax + t * (bx - ax) - px, y0 - py)
        assert (img[d > 3.0] > 0.99).all()

    def test_off_canvas_stroke_contributes_nothing(self):
        s = Stroke(np.full((4, 2), 2.0))
        img = render(Sketch(canvas=Canvas(64, 64), strokes=(s,))).image
        np.testing.assert_array_equal(img, 1.0)

    def test_pixel_range_preserved_for_wild_strokes(self):
        rng = np.random.default_rng(8)
        strokes = tuple(Stroke(rng.uniform(-3, 4, (4, 2)), width=0.2) for _ in range(6))
        img = render(Sketch(canvas=Canvas(48, 48), strokes=strokes)).image
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_more_strokes_never_brighten(self):
        rng = np.random.default_rng(9)
        strokes = [Stroke(rng.uniform(0, 1, (4, 2))) for _ in range(5)]
        canvas = Canvas(64, 64)
        prev = render(Sketch(canvas=canvas, strokes=())).image
        for n in range(1, 6):
            img = render(Sketch(canvas=canvas, strokes=tuple(strokes[:n]))).image
            assert (img <= prev + 1e-15).all()
            prev = img

    def test_deterministic(self):
        sk = random_sketch(5)
        a = render(sk).image
        b = render(sk).image
        np.testing.assert_array_equal(a, b)


class TestRenderBackward:
    def test_zero_upstream_gives_zero_gradient(self):
        sk = random_sketch(1, n_strokes=4)
        g = render_backward(sk, sk.canvas, np.zeros(sk.canvas.shape))
        np.testing.assert_array_equal(g.per_stroke, 0.0)

    def test_far_away_stroke_gets_zero_gradient(self):
        # Upstream gradient confined to the far corner; stroke near origin.
        s = Stroke([[0.1, 0.1], [0.12, 0.1], [0.14, 0.12], [0.1, 0.14]])
        sk = Sketch(canvas=Canvas(224, 224), strokes=(s,))
        d_pixels = np.zeros((224, 224))
        d_pixels[200:, 200:] = 1.0
        g = render_backward(sk, sk.canvas, d_pixels)
        np.testing.assert_array_equal(g.per_stroke, 0.0)

    def test_nonfinite_upstream_rejected(self):
        sk = random_sketch(2, n_strokes=1)
        bad = np.zeros(sk.canvas.shape)
        bad[0, 0] = np.nan
        with pytest.raises(NumericError):
            render_backward(sk, sk.canvas, bad)

    def test_shape_mismatch_rejected(self):
        sk = random_sketch(2, n_strokes=1)
        with pytest.raises(DomainError):
            render_backward(sk, sk.canvas, np.zeros((10, 10)))

    def test_dot_product_identity(self):
        # <u, J v> by forward differencing of render == <J^T u, v>.
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            sk = random_sketch(seed, n_strokes=6)
            cps = np.stack([s.control_points for s in sk.strokes])
            u = rng.normal(size=sk.canvas.shape)
            v = rng.normal(size=cps.shape)
            v /= np.linalg.norm(v)

            def render_at(c):
                return render(sk.with_strokes(
                    tuple(Stroke(ci) for ci in c))).image

            eps = 1e-8
            jv = (render_at(cps + eps * v) - render_at(cps)) / eps
            lhs = float((u * jv).sum())
            rhs = float((render_backward(sk, sk.canvas, u).per_stroke * v).sum())
            assert abs(lhs - rhs) <= 0.01 * max(abs(lhs), abs(rhs))

    def test_finite_difference_per_coordinate(self):
        """Central differences of a quadratic image loss, taken in the
        optimizer's pixel parameter space (eps = 1e-3 px)."""
        rng = np.random.default_rng(42)
        sk = random_sketch(42, n_strokes=4)
        target = rng.uniform(0, 1, sk.canvas.shape)
        scale = sk.canvas.scale()

        def loss_at(cps_px):
            img = render(sk.replace_control_points_px(cps_px)).image
            return 0.5 * float(((img - target) ** 2).sum())

        base = sk.control_points_px()
        img0 = render(sk).image
        grad_norm = render_backward(sk, sk.canvas, img0 - target).per_stroke
        grad_px = grad_norm / scale

        eps = 1e-3
        for si in range(len(sk.strokes)):
            for pi in range(4):
                for di in range(2):
                    g = grad_px[si, pi, di]
                    if abs(g) <= 1e-4:
                        continue
                    up = base.copy()
                    up[si, pi, di] += eps
                    dn = base.copy()
                    dn[si, pi, di] -= eps
                    fd = (loss_at(up) - loss_at(dn)) / (2 * eps)
                    assert abs(fd - g) <= 0.02 * abs(g), (si, pi, di, fd, g)
