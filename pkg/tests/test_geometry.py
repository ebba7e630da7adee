import numpy as np
import pytest
import torch

from adorn3d.errors import InvalidInputError
from adorn3d.geometry import ROLE_ACCESSORY, ROLE_PORTRAIT, TriPlane
from adorn3d.layers import parameter_count

from oracles import finite_difference_gradient


def style(cfg, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(1, cfg.latent.d_w, generator=g, dtype=dtype)


class TestPortraitSynthesis:
    def test_deterministic(self, generator, cfg):
        w = style(cfg, 1)
        t1 = generator.plane_generator(w)
        t2 = generator.plane_generator(w)
        assert torch.equal(t1.planes, t2.planes)

    def test_output_shape(self, generator, cfg):
        tri = generator.plane_generator(style(cfg, 2))
        g = cfg.geometry
        assert tri.planes.shape == (1, 3, g.plane_channels,
                                    g.plane_resolution, g.plane_resolution)
        assert tri.role == ROLE_PORTRAIT

    def test_code_sensitivity(self, generator, cfg):
        w = style(cfg, 3)
        w2 = w.clone()
        w2[0, 0] += 1e-2
        t1 = generator.plane_generator(w)
        t2 = generator.plane_generator(w2)
        assert not torch.equal(t1.planes, t2.planes)

    def test_outputs_finite_over_gaussian_codes(self, generator, cfg):
        g = torch.Generator().manual_seed(4)
        w = torch.randn(1000, cfg.latent.d_w, generator=g)
        # batch through in chunks to bound memory
        for chunk in w.split(100):
            tri = generator.plane_generator(chunk)
            assert torch.isfinite(tri.planes).all()


class TestAccessoryAdapter:
    def test_role_checked(self, generator, cfg):
        tri = generator.plane_generator(style(cfg, 5))
        acc = generator.adapter(tri, style(cfg, 6))
        assert acc.role == ROLE_ACCESSORY
        with pytest.raises(InvalidInputError):
            generator.adapter(acc, style(cfg, 6))

    def test_accessory_code_sensitivity(self, generator, cfg):
        tri = generator.plane_generator(style(cfg, 7))
        a1 = generator.adapter(tri, style(cfg, 8))
        a2 = generator.adapter(tri, style(cfg, 9))
        assert not torch.equal(a1.planes, a2.planes)

    def test_deterministic(self, generator, cfg):
        tri = generator.plane_generator(style(cfg, 10))
        w = style(cfg, 11)
        assert torch.equal(generator.adapter(tri, w).planes,
                           generator.adapter(tri, w).planes)

    def test_compact_relative_to_backbone(self):
        # the <10% budget is a property of the default (desk) dims
        from adorn3d.config import desk_preset
        from adorn3d.geometry import AccessoryAdapter, PlaneGenerator
        cfg = desk_preset()
        backbone = PlaneGenerator(cfg.geometry, cfg.latent.d_w)
        adapter = AccessoryAdapter(cfg.geometry, cfg.latent.d_w)
        assert parameter_count(adapter) < 0.1 * parameter_count(backbone)

    def test_branch_locality(self, generator, cfg):
        """Zeroing portrait plane j changes only accessory plane j."""
        tri = generator.plane_generator(style(cfg, 12))
        w = style(cfg, 13)
        base = generator.adapter(tri, w)
        for j in range(3):
            planes = tri.planes.clone()
            planes[:, j] = 0.0
            out = generator.adapter(TriPlane(planes, ROLE_PORTRAIT), w)
            for i in range(3):
                same = torch.equal(out.planes[:, i], base.planes[:, i])
                assert same == (i != j)


class TestAdapterGradient:
    def test_matches_central_differences(self, generator_f64, cfg):
        gen = generator_f64
        tri = gen.plane_generator(style(cfg, 14, torch.float64))
        tri = TriPlane(tri.planes.detach(), tri.role)
        rng = np.random.default_rng(3)
        for _ in range(5):
            w0 = rng.normal(size=cfg.latent.d_w)
            probe = torch.tensor(rng.normal(size=1), dtype=torch.float64)
            direction = torch.tensor(
                rng.normal(size=(1, 3, cfg.geometry.plane_channels,
                                 cfg.geometry.plane_resolution,
                                 cfg.geometry.plane_resolution)))

            def scalar(w_np):
                w = torch.tensor(w_np, dtype=torch.float64).unsqueeze(0)
                with torch.no_grad():
                    out = gen.adapter(tri, w)
                return float((out.planes * direction).sum() * probe)

            w_t = torch.tensor(w0, requires_grad=True)
            out = gen.adapter(tri, w_t.unsqueeze(0))
            ((out.planes * direction).sum() * probe).backward()
            numeric = finite_difference_gradient(scalar, w0.copy(), h=1e-5)
            denom = max(np.linalg.norm(numeric), 1e-12)
            assert np.linalg.norm(w_t.grad.numpy() - numeric) / denom < 1e-3
