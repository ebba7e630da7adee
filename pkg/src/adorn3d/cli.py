"""Command-line surface mirroring the HTTP service plus training/eval tools."""

from __future__ import annotations

import json
import os
from pathlib import Path

import click
import torch

from .camera import pose_from_angles
from .checkpoint import ModelSet, load_checkpoint
from .config import PipelineConfig, preset
from .dataset import (PacMaskDataset, build_pacmask, load_raw_samples,
                      mutual_information_report, synthesize_raw_samples,
                      write_raw_samples, write_records)
from .pipeline import AccessorySpec
from .pngio import rgb_to_png_bytes, save_semantic_map

CKPT_ENV = "ADORN3D_CKPT"


def _parse_pose(text: str) -> tuple[float, float]:
    try:
        yaw, pitch = (float(v) for v in text.split(","))
    except ValueError:
        raise click.BadParameter(f"pose must be 'yaw,pitch', got {text!r}")
    return yaw, pitch


def _resolve_ckpt(ckpt: str | None) -> str:
    path = ckpt or os.environ.get(CKPT_ENV)
    if not path:
        raise click.UsageError(f"--ckpt required (or set {CKPT_ENV})")
    return path


def _load_config(config: str | None, preset_name: str) -> PipelineConfig:
    cfg = preset(preset_name)
    if config:
        cfg = PipelineConfig.load(config)
    return cfg


@click.group()
def main():
    """3D-aware portrait synthesis with detachable accessories."""


@main.command()
@click.option("--config", type=click.Path(exists=True), default=None,
              help="JSON config overriding the preset.")
@click.option("--preset", "preset_name", type=click.Choice(["desk", "paper"]),
              default="desk", show_default=True)
@click.option("--resume", type=click.Path(exists=True), default=None)
@click.option("--data", type=click.Path(exists=True), default=None,
              help="PAC-Mask dataset directory; synthesized when omitted.")
@click.option("--synth-n", default=400, show_default=True)
@click.option("--steps", type=int, default=None, help="Override total steps.")
@click.option("--scribble-steps", type=int, default=0, show_default=True,
              help="Scribble-encoder steps after the main loop (frozen generator).")
@click.option("--out", type=click.Path(), required=True)
def train(config, preset_name, resume, data, synth_n, steps, scribble_steps, out):
    """Adversarial training on a PAC-Mask dataset."""
    from .scribble import ScribbleTrainer
    from .training import Trainer

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _load_config(config, preset_name)
    if data:
        dataset = PacMaskDataset.from_dir(data)
    else:
        click.echo(f"synthesizing {synth_n}-sample dataset (seed {cfg.training.seed})")
        records = build_pacmask(
            synthesize_raw_samples(synth_n, cfg.training.seed,
                                   size=cfg.output_resolution),
            seed=cfg.training.seed)
        dataset = PacMaskDataset(records)

    log_path = out_dir / "metrics.jsonl"
    if resume:
        trainer = Trainer.restore(resume, dataset, log_path=log_path,
                                  checkpoint_dir=out_dir)
        click.echo(f"resumed at step {trainer.step_count}")
    else:
        torch.manual_seed(cfg.training.seed)
        trainer = Trainer(ModelSet(cfg), dataset, log_path=log_path,
                          checkpoint_dir=out_dir)

    total = steps if steps is not None else cfg.training.total_steps
    remaining = max(0, total - trainer.step_count)
    click.echo(f"training {remaining} steps (phase starts: {trainer.phase})")
    trainer.run(remaining, fmd_at_checkpoints=True)

    if scribble_steps > 0:
        click.echo(f"training scribble encoder for {scribble_steps} steps")
        st = ScribbleTrainer(trainer.models.generator, cfg, seed=cfg.training.seed)
        st.encoder = trainer.models.scribble_encoder
        st.codebook = trainer.models.codebook
        st.optimizer = torch.optim.Adam(
            list(st.encoder.parameters()) + list(st.codebook.parameters()), lr=1e-3)
        for i in range(scribble_steps):
            losses = st.step(st.make_batch(cfg.training.batch_size))
            if (i + 1) % cfg.training.log_interval == 0:
                click.echo(f"  scribble step {i + 1}: total={losses.total:.4f} "
                           f"recon={losses.reconstruction:.4f}")

    final = out_dir / "final.ckpt"
    trainer.save_state(final)
    click.echo(f"saved {final}")


@main.command()
@click.option("--ckpt", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, required=True)
@click.option("--pose", default="0,0", show_default=True, help="yaw,pitch radians")
@click.option("--accessory", "accessories", multiple=True,
              help="GEOM_SEED,TEXTURE_SEED; repeatable for stacking.")
@click.option("--out", type=click.Path(), required=True, help="Output prefix.")
def generate(ckpt, seed, pose, accessories, out):
    """Render a seeded portrait (optionally accessorized) to PNG files."""
    models, _, _ = load_checkpoint(_resolve_ckpt(ckpt))
    gen = models.generator.eval()
    yaw, pitch = _parse_pose(pose)
    bundle = gen.sample_bundle(seed)
    specs = []
    for spec_text in accessories:
        g_seed, t_seed = (int(v) for v in spec_text.split(","))
        specs.append(gen.accessory_from_seeds(g_seed, t_seed))
    with torch.no_grad():
        result = gen.synthesize(bundle, pose_from_angles(yaw, pitch, gen.cfg.camera),
                                accs=bool(specs), accessories=specs)
    prefix = Path(out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}_rgb.png").write_bytes(rgb_to_png_bytes(result.rgb[0]))
    save_semantic_map(f"{prefix}_spor.png", result.s_por)
    save_semantic_map(f"{prefix}_sacc.png", result.s_acc)
    click.echo(f"wrote {prefix}_rgb.png (+ semantic maps)")


@main.command("scribble2acc")
@click.option("--ckpt", type=click.Path(exists=True), default=None)
@click.option("--portrait-seed", type=int, required=True)
@click.option("--scribble", type=click.Path(exists=True), required=True,
              help="Single-channel PNG of accessory class indices.")
@click.option("--texture-seed", type=int, required=True)
@click.option("--pose", default="0,0", show_default=True)
@click.option("--out", type=click.Path(), required=True, help="Output prefix.")
def scribble2acc(ckpt, portrait_seed, scribble, texture_seed, pose, out):
    """Invert a scribble into an accessory and render it on a portrait."""
    from .pngio import load_label_png
    from .scribble import labels_to_onehot

    models, _, _ = load_checkpoint(_resolve_ckpt(ckpt))
    gen = models.generator.eval()
    yaw, pitch = _parse_pose(pose)
    render_pose = pose_from_angles(yaw, pitch, gen.cfg.camera)
    labels = load_label_png(scribble)
    res = gen.cfg.render.resolution
    if labels.shape != (res, res):
        raise click.BadParameter(f"scribble must be {res}x{res}, got {labels.shape}")

    bundle = gen.sample_bundle(portrait_seed)
    dtype = next(gen.parameters()).dtype
    with torch.no_grad():
        _tri, f_por, _s = gen.portrait_branch(bundle.w_por_g, render_pose)
        w = models.scribble_encoder(
            labels_to_onehot(torch.as_tensor(labels.copy())[None], dtype=dtype),
            f_por.features)
        idx = models.codebook.nearest(w)
        code = models.codebook.entries[idx].detach()
        w_acc_t = gen.accessory_from_seeds(0, texture_seed).w_acc_t
        result = gen.synthesize(bundle, render_pose, accs=True,
                                accessories=[AccessorySpec(code, w_acc_t)])
    prefix = Path(out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}_rgb.png").write_bytes(rgb_to_png_bytes(result.rgb[0]))
    save_semantic_map(f"{prefix}_sacc.png", result.s_acc)
    click.echo(f"codebook entry {int(idx[0])}; wrote {prefix}_rgb.png")


@main.command()
@click.option("--ckpt", type=click.Path(exists=True), default=None)
@click.option("--dataset", "dataset_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
def evaluate(ckpt, dataset_dir, out, seed):
    """Compute the metric report for a checkpoint against a dataset."""
    from .evaluation import evaluate_checkpoint

    models, _, _ = load_checkpoint(_resolve_ckpt(ckpt))
    models.generator.eval()
    dataset = PacMaskDataset.from_dir(dataset_dir)
    report = evaluate_checkpoint(models, dataset, seed=seed)
    Path(out).write_text(report.to_json(cfg_echo=models.cfg.to_dict()))
    click.echo(f"fid={report.fid:.4f} kid={report.kid:.6f} fmd={report.fmd:.4f} "
               f"miou={report.miou:.3f} acc={report.acc:.3f} "
               f"fvid={report.fvid:.3f} sig={report.sig_diversity:.4f}")
    click.echo(f"wrote {out}")


@main.command()
@click.option("--ckpt", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8321, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(ckpt, port, host):
    """Run the HTTP inference service."""
    import uvicorn

    from .service import create_app

    app = create_app(_resolve_ckpt(ckpt))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group()
def pacmask():
    """Dataset construction and bias analysis."""


@pacmask.command("synth")
@click.option("--out", type=click.Path(), required=True)
@click.option("--n", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=128, show_default=True)
@click.option("--raw-out", type=click.Path(), default=None,
              help="Also dump the raw annotated samples.")
def pacmask_synth(out, n, seed, size, raw_out):
    """Generate the seeded synthetic dataset and build it into groups."""
    samples = synthesize_raw_samples(n, seed, size=size)
    if raw_out:
        write_raw_samples(samples, raw_out)
        click.echo(f"wrote raw samples to {raw_out}")
    records = build_pacmask(samples, seed=seed)
    write_records(records, out)
    click.echo(f"wrote {len(records)} records to {out}")


@pacmask.command("build")
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ratio-band", type=float, default=0.5, show_default=True)
def pacmask_build(in_dir, out, seed, ratio_band):
    """Build the three-group dataset from a raw annotated directory."""
    samples = load_raw_samples(in_dir)
    records = build_pacmask(samples, seed=seed, ratio_band=ratio_band)
    write_records(records, out)
    click.echo(f"built {len(records)} records from {len(samples)} raw samples")


@pacmask.command("bias-report")
@click.option("--in", "in_dir", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def pacmask_bias_report(in_dir, out):
    """Mutual-information heatmap data between accessories and attributes."""
    samples = load_raw_samples(in_dir)
    report = mutual_information_report(samples)
    Path(out).write_text(json.dumps(report, indent=2, sort_keys=True))
    click.echo(f"wrote MI matrix ({len(report['accessories'])} x "
               f"{len(report['attributes'])}) to {out}")


if __name__ == "__main__":
    main()
