"""End-to-end generator: noise -> styles -> geometry -> features -> RGB.

Wires the latent mapper, plane generator, accessory adapter, neural renderer,
structure encoder, and texture renderer into one module, with helpers for
seeded sampling and multi-accessory composition. This is the object the
trainer optimizes, the metric suite probes, and the service loads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .camera import CameraPose, pose_from_angles
from .config import PipelineConfig
from .geometry import AccessoryAdapter, PlaneGenerator, TriPlane
from .mapper import LatentBundle, LatentMapper
from .render import (CLASS_SET_ACCESSORY, N_ACCESSORY_CLASSES, NeuralRenderer,
                     ProjectedFeatures, SemanticMap)
from .texture import (SCHEME_ACCESSORY, SCHEME_DECORATIVE, SCHEME_NONE,
                      StructureEncoder, TextureRenderer, combine_features,
                      decorative_mask, derive_accessory_mask,
                      resolve_mask_overlaps)


def z_from_seed(seed: int, d_z: int, batch: int = 1,
                dtype: torch.dtype = torch.float32) -> torch.Tensor:
    gen = torch.Generator().manual_seed(int(seed) & 0x7FFFFFFFFFFFFFFF)
    return torch.randn(batch, d_z, generator=gen, dtype=dtype)


def none_semantic_map(batch: int, h: int, w: int, dtype: torch.dtype,
                      device: torch.device | str = "cpu") -> SemanticMap:
    """Accessory semantic map that is certainly 'none' everywhere."""
    probs = torch.zeros(batch, N_ACCESSORY_CLASSES, h, w, dtype=dtype, device=device)
    probs[:, 0] = 1.0
    return SemanticMap(probs, CLASS_SET_ACCESSORY)


@dataclass
class AccessorySpec:
    """One accessory to compose: geometry code + its own texture code."""
    w_acc_g: torch.Tensor  # (B, d_w)
    w_acc_t: torch.Tensor  # (B, d_w)


@dataclass
class RenderOutput:
    rgb: torch.Tensor | None          # (B, 3, H_out, W_out), None in geometry phase
    s_por: SemanticMap
    s_acc: SemanticMap                # merged over accessories ('none' if bare)
    s_acc_each: list[SemanticMap]
    masks: list[torch.Tensor]         # disjoint, one per accessory
    mask_union: torch.Tensor
    f_por: ProjectedFeatures
    f_acc_each: list[ProjectedFeatures] = field(default_factory=list)
    fused: torch.Tensor | None = None


class PortraitGenerator(nn.Module):
    def __init__(self, cfg: PipelineConfig):
        super().__init__()
        self.cfg = cfg
        d_w = cfg.latent.d_w
        self.mapper = LatentMapper(cfg.latent)
        self.plane_generator = PlaneGenerator(cfg.geometry, d_w)
        self.adapter = AccessoryAdapter(cfg.geometry, d_w)
        self.renderer = NeuralRenderer(cfg.render, cfg.geometry.plane_channels)
        self.structure_encoder = StructureEncoder(cfg.render.feature_channels,
                                                  cfg.texture.base_channels)
        self.texture_renderer = TextureRenderer(cfg.texture, d_w)

    # -- conditioning -----------------------------------------------------

    def fixed_conditioning_pose(self) -> CameraPose:
        """Frontal camera used for pose conditioning at inference."""
        return pose_from_angles(0.0, 0.0, self.cfg.camera)

    def sample_bundle(self, seed: int) -> LatentBundle:
        """Seeded inference bundle (identity-independent accessory source)."""
        dtype = next(self.parameters()).dtype
        z = z_from_seed(seed, self.cfg.latent.d_z, dtype=dtype)
        return self.mapper.inference_condition(z, self.fixed_conditioning_pose())

    def accessory_from_seeds(self, geometry_seed: int, texture_seed: int,
                             batch: int = 1) -> AccessorySpec:
        """Independent accessory geometry/texture codes from two seeds."""
        dtype = next(self.parameters()).dtype
        pose = self.fixed_conditioning_pose()
        zg = z_from_seed(geometry_seed, self.cfg.latent.d_z, batch, dtype)
        zt = z_from_seed(texture_seed, self.cfg.latent.d_z, batch, dtype)
        w_acc_g = self.mapper.sample_accessory_code(zg, pose)
        w_acc_t = self.mapper.inference_condition(zt, pose).w_acc_t
        return AccessorySpec(w_acc_g, w_acc_t)

    # -- branches ----------------------------------------------------------

    def portrait_branch(self, w_por_g: torch.Tensor,
                        poses: CameraPose | list[CameraPose],
                        rng: np.random.Generator | None = None
                        ) -> tuple[TriPlane, ProjectedFeatures, SemanticMap]:
        tri = self.plane_generator(w_por_g)
        f_por = self.renderer.volume_render(tri, poses, rng=rng)
        return tri, f_por, self.renderer.classify_semantics(f_por)

    def accessory_branch(self, portrait_tri: TriPlane, w_acc_g: torch.Tensor,
                         poses: CameraPose | list[CameraPose],
                         rng: np.random.Generator | None = None
                         ) -> tuple[ProjectedFeatures, SemanticMap, torch.Tensor]:
        tri = self.adapter(portrait_tri, w_acc_g)
        f_acc = self.renderer.volume_render(tri, poses, rng=rng)
        s_acc = self.renderer.classify_semantics(f_acc)
        return f_acc, s_acc, derive_accessory_mask(s_acc, accs=True)

    # -- full synthesis ----------------------------------------------------

    def synthesize(self, bundle: LatentBundle,
                   poses: CameraPose | list[CameraPose],
                   accs: bool,
                   accessories: list[AccessorySpec] | None = None,
                   scheme: str | None = None,
                   rng: np.random.Generator | None = None,
                   geometry_only: bool = False) -> RenderOutput:
        """Render a portrait, optionally wearing one or more accessories.

        By default the bundle's own accessory codes form the single accessory
        when accs is set. Passing ``accessories`` overrides that with an
        explicit stack (painter's order, later wins overlaps). scheme
        overrides the texture-region policy during training (accessory /
        none / decorative).
        """
        tri_por, f_por, s_por = self.portrait_branch(bundle.w_por_g, poses, rng)
        b, _, h, w = f_por.features.shape
        dtype = f_por.features.dtype
        device = f_por.features.device

        if accessories is not None:
            specs = list(accessories) if accs else []
        elif accs:
            specs = [AccessorySpec(bundle.w_acc_g, bundle.w_acc_t)]
        else:
            specs = []

        f_acc_each, s_acc_each, raw_masks = [], [], []
        for spec in specs:
            f_acc, s_acc, m = self.accessory_branch(tri_por, spec.w_acc_g, poses, rng)
            f_acc_each.append(f_acc)
            s_acc_each.append(s_acc)
            raw_masks.append(m)

        masks = resolve_mask_overlaps(raw_masks) if raw_masks else []
        if masks:
            mask_union = torch.stack(masks).sum(dim=0)
        else:
            mask_union = torch.zeros(b, 1, h, w, dtype=dtype, device=device)

        s_acc_merged = none_semantic_map(b, h, w, dtype, device)
        if masks:
            probs = s_acc_merged.probs * (1.0 - mask_union)
            for m, s_acc in zip(masks, s_acc_each):
                probs = probs + m * s_acc.probs
            s_acc_merged = SemanticMap(probs, CLASS_SET_ACCESSORY)

        out = RenderOutput(rgb=None, s_por=s_por, s_acc=s_acc_merged,
                           s_acc_each=s_acc_each, masks=masks,
                           mask_union=mask_union, f_por=f_por,
                           f_acc_each=f_acc_each)
        if geometry_only:
            return out

        combined = combine_features(
            f_por.features, [(f.features, m) for f, m in zip(f_acc_each, masks)])
        out.fused = self.structure_encoder(combined)

        scheme = scheme or (SCHEME_ACCESSORY if accs else SCHEME_NONE)
        if scheme == SCHEME_ACCESSORY:
            regions = [(m, spec.w_acc_t) for m, spec in zip(masks, specs)]
        elif scheme == SCHEME_DECORATIVE:
            regions = [(decorative_mask(s_por), bundle.w_acc_t)]
        elif scheme == SCHEME_NONE:
            regions = []
        else:
            raise ValueError(f"unknown region scheme {scheme!r}")

        out.rgb = self.texture_renderer(out.fused, regions, bundle.w_por_t,
                                        s_por, s_acc_merged)
        return out

    def accessory_generator_modules(self) -> nn.ModuleList:
        """The frozen stack scribble inversion reconstructs through:
        adapter + renderer (decoder/classifiers)."""
        return nn.ModuleList([self.adapter, self.renderer])
