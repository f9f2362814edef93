import numpy as np
import pytest

from strokeforge.errors import ConfigError, DomainError, NumericError, TransportError
from strokeforge.geometry import Canvas, Sketch
from strokeforge.loss import (BuiltinLossBackend, LossConfig, LossReport,
                              RemoteLossBackend, RemoteLossClient, combine,
                              evaluate_clean, perceptual_loss, pyramid_loss)


@pytest.fixture(scope="module")
def stub_url():
    from stub_service import StubServer

    server = StubServer().start()
    yield server.url
    server.stop()


class TestCombine:
    def test_worked_example_with_default_lambda(self):
        clip, total = combine(0.3, 0.5, 0.2, 0.1)
        assert clip == pytest.approx(0.35, abs=1e-12)
        assert total == pytest.approx(0.55, abs=1e-12)

    def test_all_zero(self):
        assert combine(0.0, 0.0, 0.0, 7.3) == (0.0, 0.0)

    def test_lambda_zero_degenerates(self):
        clip, _ = combine(0.42, 99.0, 0.0, 0.0)
        assert clip == 0.42

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError):
            combine(float("nan"), 0.0, 0.0, 0.1)


class TestLossConfig:
    def test_default_values(self):
        cfg = LossConfig()
        assert cfg.lambda_weight == 0.1
        assert cfg.augmentations_per_step == 4
        assert cfg.clip_layer == 4

    def test_remote_requires_augmentation(self):
        with pytest.raises(ConfigError):
            LossConfig(backend="remote", augmentations_per_step=0)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigError):
            LossConfig(lambda_weight=-0.1)


class TestPyramidLoss:
    def test_identical_inputs(self):
        a = np.random.default_rng(0).uniform(0, 1, (32, 32))
        value, grad = pyramid_loss(a, a.copy(), 4)
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_constant_images_level_one(self):
        value, _ = pyramid_loss(np.ones((16, 16)), np.zeros((16, 16)), 1)
        assert value == pytest.approx(1.0, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0, 1, (32, 32))
        b = rng.uniform(0, 1, (32, 32))
        _, grad = pyramid_loss(a, b, 3)
        eps = 1e-6
        for i, j in rng.integers(0, 32, (16, 2)):
            up, dn = a.copy(), a.copy()
            up[i, j] += eps
            dn[i, j] -= eps
            fd = (pyramid_loss(up, b, 3)[0] - pyramid_loss(dn, b, 3)[0]) / (2 * eps)
            assert fd == pytest.approx(grad[i, j], rel=0.01)

    def test_adjoint_dot_product(self):
        rng = np.random.default_rng(12)
        a = rng.uniform(0, 1, (40, 40))
        b = rng.uniform(0, 1, (40, 40))
        _, grad = pyramid_loss(a, b, 3)
        v = rng.normal(size=a.shape)
        eps = 1e-7
        fd = (pyramid_loss(a + eps * v, b, 3)[0] - pyramid_loss(a - eps * v, b, 3)[0]) / (2 * eps)
        assert fd == pytest.approx(float((grad * v).sum()), rel=0.01)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            pyramid_loss(np.zeros((8, 8)), np.zeros((8, 9)), 1)


class TestBuiltinBackend:
    def test_identical_images_zero(self):
        img = np.random.default_rng(1).uniform(0, 1, (64, 64))
        report = perceptual_loss(img, img.copy(), LossConfig(backend="builtin"))
        assert report.total == 0.0
        np.testing.assert_array_equal(report.pixel_grad, 0.0)

    def test_ledger_identity(self):
        rng = np.random.default_rng(2)
        cfg = LossConfig(backend="builtin")
        report = perceptual_loss(rng.uniform(0, 1, (32, 32)),
                                 rng.uniform(0, 1, (32, 32)), cfg)
        report.check_ledger(cfg.lambda_weight)
        assert report.clip1 == report.clip2 == 0.0
        assert report.total == report.vgg

    def test_clean_loss_deterministic(self):
        rng = np.random.default_rng(3)
        backend = BuiltinLossBackend(rng.uniform(0, 1, (32, 32)), LossConfig())
        img = rng.uniform(0, 1, (32, 32))
        assert backend.clean_loss(img) == backend.clean_loss(img)


class TestLossReport:
    def test_rejects_nonfinite_terms(self):
        with pytest.raises(NumericError):
            LossReport(clip1=np.inf, clip2=0, clip=0, vgg=0, total=0,
                       pixel_grad=np.zeros((4, 4)))

    def test_ledger_violation_detected(self):
        report = LossReport(clip1=0.5, clip2=0.0, clip=0.5, vgg=0.1, total=0.9,
                            pixel_grad=np.zeros((4, 4)))
        with pytest.raises(NumericError):
            report.check_ledger(0.1)


class TestRemoteBackend:
    def _cfg(self, url, **kw):
        return LossConfig(backend="remote", service_url=url, retries=0, **kw)

    def test_identical_images_zero_clip1(self, stub_url):
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 1, (64, 64))
        report = perceptual_loss(img, img.copy(), self._cfg(stub_url), n_augment=0)
        assert report.clip1 <= 1e-5
        assert report.vgg <= 1e-8

    def test_ledger_identity_on_responses(self, stub_url):
        rng = np.random.default_rng(5)
        cfg = self._cfg(stub_url)
        report = perceptual_loss(rng.uniform(0, 1, (64, 64)),
                                 rng.uniform(0, 1, (64, 64)), cfg, n_augment=2, seed=3)
        report.check_ledger(cfg.lambda_weight)
        assert 0.0 <= report.clip1 <= 2.0

    def test_pixel_grad_matches_finite_differences(self, stub_url):
        rng = np.random.default_rng(6)
        target = rng.uniform(0.2, 0.8, (64, 64))
        sketch = rng.uniform(0.2, 0.8, (64, 64))
        backend = RemoteLossBackend(target, self._cfg(stub_url))
        report = backend._request(sketch, 0, 0)
        eps = 1e-2
        for i, j in rng.integers(8, 56, (16, 2)):
            up, dn = sketch.copy(), sketch.copy()
            up[i, j] += eps
            dn[i, j] -= eps
            fd = (backend._request(up, 0, 0).total
                  - backend._request(dn, 0, 0).total) / (2 * eps)
            assert fd == pytest.approx(report.pixel_grad[i, j], rel=0.05, abs=1e-9)

    def test_clean_below_augmented_band(self, stub_url):
        rng = np.random.default_rng(7)
        target = rng.uniform(0, 1, (64, 64))
        sketch = rng.uniform(0, 1, (64, 64))
        backend = RemoteLossBackend(target, self._cfg(stub_url))
        clean = backend.clean_loss(sketch)
        samples = [backend._request(sketch, 4, seed).total for seed in range(100)]
        assert clean <= np.mean(samples) + 3 * np.std(samples)

    def test_seeded_determinism(self, stub_url):
        rng = np.random.default_rng(8)
        target = rng.uniform(0, 1, (64, 64))
        sketch = rng.uniform(0, 1, (64, 64))
        backend = RemoteLossBackend(target, self._cfg(stub_url))
        a = backend._request(sketch, 4, 1234)
        b = backend._request(sketch, 4, 1234)
        assert a.total == pytest.approx(b.total, abs=1e-6)

    def test_unreachable_service_raises_transport_error(self):
        cfg = LossConfig(backend="remote", service_url="http://127.0.0.1:1",
                         retries=1, timeout=0.2)
        backend = RemoteLossBackend(np.zeros((16, 16)), cfg)
        with pytest.raises(TransportError):
            backend.clean_loss(np.zeros((16, 16)))

    def test_lpips_endpoint(self, stub_url):
        client = RemoteLossClient(stub_url)
        rng = np.random.default_rng(9)
        a = rng.uniform(0, 1, (32, 32))
        assert client.lpips(a, a.copy()) == pytest.approx(0.0, abs=1e-6)
        b = rng.uniform(0, 1, (32, 32))
        assert client.lpips(a, b) == pytest.approx(client.lpips(b, a), rel=1e-6)


class TestEvaluateClean:
    def test_identical_render_and_target(self):
        sketch = Sketch(canvas=Canvas(32, 32))
        target = np.ones((32, 32))
        assert evaluate_clean(sketch, target, LossConfig()) == 0.0

    def test_repeated_calls_identical(self, circle_target):
        from conftest import random_sketch

        sk = random_sketch(11, n_strokes=4)
        cfg = LossConfig()
        assert evaluate_clean(sk, circle_target, cfg) == evaluate_clean(sk, circle_target, cfg)
