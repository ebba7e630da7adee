"""Checkpoint-level metric protocol: one call computes the full report.

Sample counts come from the metrics config (desk defaults are scaled-down
versions of the full protocol). The RGB-segmap alignment score uses a
color-quantization parser as the desk stand-in for a face-parsing network:
the synthetic dataset is flat-shaded per class, so nearest-class-color
labeling is a faithful cheap parser for it.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from .checkpoint import ModelSet
from .classes import ACCESSORY_CLASSES, PORTRAIT_CLASSES
from .dataset import (CLASS_COLORS, GROUP_ACCESSORY, GROUP_RGB, PacMaskDataset,
                      records_to_batch)
from .metrics import (KID_REPORT_SCALE, DiscriminatorEmbedder, MetricReport,
                      PatchFeatureDistance, ProxyEmbedder, alignment,
                      color_quantize_parser, frechet_distance, fvid, fvid_poses,
                      kernel_distance, sig_diversity)

# combined label space for the alignment proxy: portrait classes then
# accessory classes (sans "none", which portrait background covers)
COMBINED_PARSER_CLASSES = PORTRAIT_CLASSES + ACCESSORY_CLASSES[1:]


def _generate_batch(models: ModelSet, dataset: PacMaskDataset, n: int,
                    torch_rng: torch.Generator, np_rng: np.random.Generator,
                    accs: bool | None = None, textures_per: int = 1):
    """Training-distribution samples: dataset poses, configured p and accs."""
    cfg = models.cfg
    gen = models.generator
    dtype = next(gen.parameters()).dtype
    outs = []
    batch = max(1, cfg.training.batch_size)
    remaining = n
    while remaining > 0:
        k = min(batch, remaining)
        records = dataset.sample(GROUP_RGB, k, np_rng)
        _, cond, poses = records_to_batch(records, cfg.render.resolution,
                                          cfg.output_resolution, dtype, cfg.camera)
        z = torch.randn(k, cfg.latent.d_z, generator=torch_rng, dtype=dtype)
        bundle = gen.mapper.map_latents(z, cond, cfg.latent.p_identity,
                                        rng=torch_rng)
        use_accs = (bool(np_rng.random() < cfg.training.accs_probability)
                    if accs is None else accs)
        for _ in range(textures_per):
            zt = torch.randn(k, cfg.latent.d_z, generator=torch_rng, dtype=dtype)
            tex_bundle = gen.mapper.map_latents(zt, cond, 0.0, rng=torch_rng)
            restyled = type(bundle)(bundle.w_por_g, bundle.w_acc_g,
                                    tex_bundle.w_por_t, tex_bundle.w_acc_t,
                                    bundle.acc_g_source, bundle.pose_conditioning)
            with torch.no_grad():
                outs.append(gen.synthesize(restyled, poses, accs=use_accs))
        remaining -= k
    return outs


def _onehot(sm_probs: torch.Tensor) -> torch.Tensor:
    onehot = torch.zeros_like(sm_probs)
    onehot.scatter_(1, sm_probs.argmax(dim=1, keepdim=True), 1.0)
    return onehot


def combined_label_map(out) -> np.ndarray:
    """Portrait argmax with accessory classes painted over their masks."""
    por = out.s_por.argmax_labels().cpu().numpy()
    acc = out.s_acc.argmax_labels().cpu().numpy()
    mask = (out.mask_union[:, 0] > 0.5).cpu().numpy()
    combined = por.copy()
    offset = len(PORTRAIT_CLASSES) - 1  # accessory k>0 -> 19 + k
    combined[mask] = acc[mask] + offset
    return combined


def evaluate_checkpoint(models: ModelSet, dataset: PacMaskDataset,
                        seed: int = 0) -> MetricReport:
    cfg = models.cfg
    m = cfg.metrics
    gen = models.generator
    dtype = next(gen.parameters()).dtype
    torch_rng = torch.Generator().manual_seed(seed)
    np_rng = np.random.default_rng(seed)

    # quality: FID / KID on RGB renders vs real RGB
    image_embedder = ProxyEmbedder(m.embedder_dim, m.embedder_seed).to(dtype)
    n_quality = m.n_quality_segmaps * m.n_textures_per_segmap
    fakes = _generate_batch(models, dataset, m.n_quality_segmaps, torch_rng,
                            np_rng, textures_per=m.n_textures_per_segmap)
    fake_rgb = torch.cat([o.rgb for o in fakes])
    real_records = dataset.sample(GROUP_RGB, n_quality, np_rng)
    real_rgb, _, _ = records_to_batch(real_records, cfg.render.resolution,
                                      cfg.output_resolution, dtype, cfg.camera)
    emb_fake = image_embedder.embed(fake_rgb)
    emb_real = image_embedder.embed(real_rgb)
    fid = frechet_distance(emb_real, emb_fake)
    kid = kernel_distance(emb_real, emb_fake)

    # mask distribution: FMD via the accessory discriminator's early layers
    mask_embedder = DiscriminatorEmbedder(models.d_accessory)
    acc_outs = _generate_batch(models, dataset, m.n_fmd_samples, torch_rng,
                               np_rng, accs=True)
    fake_maps = torch.cat([_onehot(o.s_acc_each[0].probs) for o in acc_outs])
    real_acc_records = dataset.sample(GROUP_ACCESSORY, m.n_fmd_samples, np_rng)
    real_maps, _, _ = records_to_batch(real_acc_records, cfg.render.resolution,
                                       cfg.output_resolution, dtype, cfg.camera)
    fmd = frechet_distance(mask_embedder.embed(real_maps),
                           mask_embedder.embed(fake_maps))

    # alignment between rendered RGB (color-quantized) and emitted segmaps
    mious, accs_ = [], []
    align_outs = _generate_batch(models, dataset, m.n_alignment_pairs,
                                 torch_rng, np_rng)
    for out in align_outs:
        labels = combined_label_map(out)
        res = labels.shape[-1]
        rgb_small = F.interpolate(out.rgb, size=(res, res), mode="bilinear",
                                  align_corners=False)
        parsed = color_quantize_parser(rgb_small, CLASS_COLORS,
                                       COMBINED_PARSER_CLASSES)
        for k in range(labels.shape[0]):
            miou_k, acc_k = alignment(parsed[k], labels[k],
                                      n_classes=len(COMBINED_PARSER_CLASSES))
            mious.append(miou_k)
            accs_.append(acc_k)

    # view consistency
    poses = fvid_poses(m.n_fvid_poses, camera_cfg=cfg.camera)
    fvid_scores = []
    for _ in range(m.n_fvid_identities):
        z = torch.randn(1, cfg.latent.d_z, generator=torch_rng, dtype=dtype)
        bundle = gen.mapper.inference_condition(z, gen.fixed_conditioning_pose())
        fvid_scores.append(fvid(gen, bundle, poses, image_embedder))

    # single-identity accessory diversity
    dist = PatchFeatureDistance().to(dtype)
    sig_scores = []
    for k in range(max(1, m.n_fvid_identities // 2)):
        z = torch.randn(1, cfg.latent.d_z, generator=torch_rng, dtype=dtype)
        bundle = gen.mapper.inference_condition(z, gen.fixed_conditioning_pose())
        sig_scores.append(sig_diversity(gen, bundle, n_pairs=2,
                                        distance_fn=dist, seed=seed + k))

    return MetricReport(
        fid=float(fid), kid=float(kid), kid_scale=KID_REPORT_SCALE,
        fmd=float(fmd), miou=float(np.mean(mious)), acc=float(np.mean(accs_)),
        fvid=float(np.mean(fvid_scores)),
        sig_diversity=float(np.mean(sig_scores)),
        n_quality_samples=n_quality,
        n_alignment_pairs=m.n_alignment_pairs,
        n_fvid_identities=m.n_fvid_identities,
        n_fvid_poses=m.n_fvid_poses,
        n_fmd_samples=m.n_fmd_samples,
        image_embedder=image_embedder.embedder_id,
        mask_embedder=mask_embedder.embedder_id,
    )
