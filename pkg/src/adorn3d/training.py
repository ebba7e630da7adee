"""Adversarial training of the full generator against three discriminators.

Each step samples a per-batch accessory flag, generates the active branch
outputs (accessory map, portrait map, RGB), and plays non-saturating logistic
losses with lazy R1 regularization against real batches from the matching
data groups. A geometry pretraining phase trains only the two segmap branches
before the texture stack joins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import autograd

from .camera import CameraPose
from .checkpoint import ModelSet, save_checkpoint
from .config import PipelineConfig
from .dataset import (GROUP_ACCESSORY, GROUP_PORTRAIT, GROUP_RGB, PacMaskDataset,
                      records_to_batch)
from .errors import TrainingFault
from .metrics import DiscriminatorEmbedder, frechet_distance
from .pipeline import PortraitGenerator
from .texture import SCHEME_ACCESSORY, SCHEME_NONE, select_region_scheme

PHASE_GEOMETRY = "geometry_pretrain"
PHASE_FULL = "full"

BRANCH_TO_GROUP = {"accessory": GROUP_ACCESSORY, "portrait": GROUP_PORTRAIT,
                   "rgb": GROUP_RGB}


def generator_loss(fake_logits: dict[str, torch.Tensor]) -> torch.Tensor:
    """Non-saturating loss summed over branches: mean softplus(-logit)."""
    total = None
    for logits in fake_logits.values():
        term = F.softplus(-logits).mean()
        total = term if total is None else total + term
    return total


def discriminator_adversarial_loss(real_logits: torch.Tensor,
                                   fake_logits: torch.Tensor) -> torch.Tensor:
    return F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()


def r1_penalty(real_inputs: torch.Tensor, real_logits: torch.Tensor) -> torch.Tensor:
    """E[||grad_x D(x)||^2] over the real batch; caller scales by gamma/2."""
    grads = autograd.grad(real_logits.sum(), real_inputs, create_graph=True)[0]
    return grads.pow(2).reshape(grads.shape[0], -1).sum(dim=1).mean()


@dataclass
class TrainingBatch:
    z_d: torch.Tensor
    z_g: torch.Tensor
    poses: list[CameraPose]
    cond: torch.Tensor                 # (B, 25) render-pose conditioning
    accs: bool
    scheme: str
    real: dict[str, tuple[torch.Tensor, torch.Tensor]] = field(default_factory=dict)


@dataclass
class TrainState:
    step: int
    phase: str
    accs_probability: float


class Trainer:
    def __init__(self, models: ModelSet, dataset: PacMaskDataset,
                 log_path: str | Path | None = None,
                 accs_probability: float | None = None,
                 checkpoint_dir: str | Path | None = None):
        self.models = models
        self.dataset = dataset
        self.cfg: PipelineConfig = models.cfg
        tcfg = self.cfg.training
        self.accs_probability = (tcfg.accs_probability if accs_probability is None
                                 else accs_probability)
        betas = (tcfg.beta1, tcfg.beta2)
        self.g_opt = torch.optim.Adam(models.generator.parameters(), lr=tcfg.lr,
                                      betas=betas)
        self.d_opts = {name: torch.optim.Adam(d.parameters(), lr=tcfg.lr, betas=betas)
                       for name, d in models.discriminators().items()}
        self.torch_rng = torch.Generator().manual_seed(tcfg.seed)
        self.np_rng = np.random.default_rng(tcfg.seed)
        self.step_count = 0
        self.loss_history: list[dict] = []
        self.log_path = Path(log_path) if log_path else None
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self.initial_generator_state = {
            k: v.detach().clone() for k, v in models.generator.state_dict().items()}

    # -- state -----------------------------------------------------------------

    @property
    def phase(self) -> str:
        return (PHASE_GEOMETRY
                if self.step_count < self.cfg.training.geometry_pretrain_steps
                else PHASE_FULL)

    def state(self) -> TrainState:
        return TrainState(self.step_count, self.phase, self.accs_probability)

    def active_branches(self, accs: bool) -> list[str]:
        branches = ["portrait"]
        if accs:
            branches.insert(0, "accessory")
        if self.phase == PHASE_FULL:
            branches.append("rgb")
        return branches

    # -- batch sampling ----------------------------------------------------------

    def draw_accs_flag(self) -> bool:
        """One Bernoulli(accs_probability) draw deciding the batch's branch set."""
        return bool(self.np_rng.random() < self.accs_probability)

    def sample_training_batch(self) -> TrainingBatch:
        tcfg = self.cfg.training
        b = tcfg.batch_size
        accs = self.draw_accs_flag()
        scheme = (select_region_scheme(self.np_rng, accs,
                                       self.cfg.texture.decorative_prob)
                  if self.phase == PHASE_FULL else
                  (SCHEME_ACCESSORY if accs else SCHEME_NONE))
        dtype = next(self.models.generator.parameters()).dtype
        pose_records = self.dataset.sample(GROUP_RGB, b, self.np_rng)
        _, cond, poses = records_to_batch(pose_records, self.cfg.render.resolution,
                                          self.cfg.output_resolution, dtype,
                                          self.cfg.camera)
        z_d = torch.randn(b, self.cfg.latent.d_z, generator=self.torch_rng, dtype=dtype)
        z_g = torch.randn(b, self.cfg.latent.d_z, generator=self.torch_rng, dtype=dtype)
        real = {}
        for branch in self.active_branches(accs):
            records = self.dataset.sample(BRANCH_TO_GROUP[branch], b, self.np_rng)
            x, rcond, _ = records_to_batch(records, self.cfg.render.resolution,
                                           self.cfg.output_resolution, dtype,
                                           self.cfg.camera)
            real[branch] = (x, rcond)
        return TrainingBatch(z_d, z_g, poses, cond, accs, scheme, real)

    # -- forward -----------------------------------------------------------------

    def _generate_branches(self, z: torch.Tensor, batch: TrainingBatch
                           ) -> dict[str, torch.Tensor]:
        gen = self.models.generator
        bundle = gen.mapper.map_latents(z, batch.cond, self.cfg.latent.p_identity,
                                        rng=self.torch_rng)
        out = gen.synthesize(bundle, batch.poses, accs=batch.accs,
                             scheme=batch.scheme, rng=self.np_rng,
                             geometry_only=self.phase == PHASE_GEOMETRY)
        fakes = {"portrait": out.s_por.probs}
        if batch.accs:
            fakes["accessory"] = out.s_acc_each[0].probs
        if self.phase == PHASE_FULL:
            fakes["rgb"] = out.rgb
        return fakes

    def _check_finite(self, name: str, value: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(value):
            self._dump_diagnostics(name, float(value))
            raise TrainingFault(f"non-finite {name} at step {self.step_count}",
                                step=self.step_count,
                                diagnostics={"loss": name})
        return value

    def _dump_diagnostics(self, reason: str, value: float) -> None:
        if self.checkpoint_dir:
            self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(self.checkpoint_dir / "diagnostic.ckpt", self.models,
                            step=self.step_count,
                            extra_meta={"fault": reason, "value": value})

    # -- optimization --------------------------------------------------------------

    def train_step(self, batch: TrainingBatch | None = None) -> dict[str, float]:
        batch = batch or self.sample_training_batch()
        discs = self.models.discriminators()
        losses: dict[str, float] = {}
        run_r1 = self.step_count % self.cfg.training.r1_interval == 0

        with torch.no_grad():
            fakes_d = self._generate_branches(batch.z_d, batch)

        for branch in self.active_branches(batch.accs):
            d = discs[branch]
            real_x, real_cond = batch.real[branch]
            fake_logits = d(fakes_d[branch], batch.cond)
            if run_r1:
                real_x = real_x.detach().requires_grad_(True)
            real_logits = d(real_x, real_cond)
            loss = discriminator_adversarial_loss(real_logits, fake_logits)
            if run_r1:
                penalty = r1_penalty(real_x, real_logits)
                losses[f"r1_{branch}"] = float(penalty.detach())
                loss = loss + 0.5 * self.cfg.training.r1_gamma * penalty
            self._check_finite(f"d_{branch}", loss)
            self.d_opts[branch].zero_grad(set_to_none=True)
            loss.backward()
            self.d_opts[branch].step()
            losses[f"d_{branch}"] = float(loss.detach())

        fakes_g = self._generate_branches(batch.z_g, batch)
        fake_logits = {branch: discs[branch](fakes_g[branch], batch.cond)
                       for branch in self.active_branches(batch.accs)}
        g_loss = generator_loss(fake_logits)
        self._check_finite("g_total", g_loss)
        self.g_opt.zero_grad(set_to_none=True)
        g_loss.backward()
        self.g_opt.step()
        losses["g_total"] = float(g_loss.detach())
        for branch, logits in fake_logits.items():
            losses[f"g_{branch}"] = float(F.softplus(-logits.detach()).mean())

        self.step_count += 1
        return losses

    # -- FMD trend -------------------------------------------------------------------

    def generate_accessory_maps(self, n: int, seed: int = 0,
                                generator: PortraitGenerator | None = None) -> torch.Tensor:
        """One-hot accessory maps sampled from (a copy of) the generator."""
        gen = generator or self.models.generator
        dtype = next(gen.parameters()).dtype
        rng = torch.Generator().manual_seed(seed)
        nprng = np.random.default_rng(seed)
        maps = []
        with torch.no_grad():
            batch = max(1, self.cfg.training.batch_size)
            remaining = n
            while remaining > 0:
                k = min(batch, remaining)
                records = self.dataset.sample(GROUP_RGB, k, nprng)
                _, cond, poses = records_to_batch(records, self.cfg.render.resolution,
                                                  self.cfg.output_resolution, dtype,
                                                  self.cfg.camera)
                z = torch.randn(k, self.cfg.latent.d_z, generator=rng, dtype=dtype)
                bundle = gen.mapper.map_latents(z, cond, self.cfg.latent.p_identity,
                                                rng=rng)
                out = gen.synthesize(bundle, poses, accs=True, geometry_only=True)
                s = out.s_acc_each[0]
                onehot = torch.zeros_like(s.probs)
                onehot.scatter_(1, s.argmax_labels().unsqueeze(1), 1.0)
                maps.append(onehot)
                remaining -= k
        return torch.cat(maps)

    def evaluate_fmd(self, n: int | None = None, seed: int = 0,
                     generator_state: dict | None = None) -> float:
        """Fréchet distance between real and generated accessory maps, embedded
        by the current accessory discriminator's early layers."""
        n = n or self.cfg.metrics.n_fmd_samples
        dtype = next(self.models.generator.parameters()).dtype
        gen = self.models.generator
        if generator_state is not None:
            gen = PortraitGenerator(self.cfg).to(dtype)
            gen.load_state_dict(generator_state)
        fake = self.generate_accessory_maps(n, seed, gen)
        nprng = np.random.default_rng(seed + 1)
        records = self.dataset.sample(GROUP_ACCESSORY, n, nprng)
        real, _, _ = records_to_batch(records, self.cfg.render.resolution,
                                      self.cfg.output_resolution, dtype,
                                      self.cfg.camera)
        embedder = DiscriminatorEmbedder(self.models.d_accessory)
        return frechet_distance(embedder.embed(real), embedder.embed(fake))

    # -- persistence ----------------------------------------------------------------

    def _opts(self) -> list[tuple[str, torch.optim.Adam]]:
        return [("g", self.g_opt)] + [(f"d_{k}", o) for k, o in self.d_opts.items()]

    def save_state(self, path: str | Path) -> str:
        """Full trainer checkpoint: weights + optimizer moments + rng streams."""
        extra: dict[str, np.ndarray] = {}
        for name, opt in self._opts():
            for i, p in enumerate(opt.param_groups[0]["params"]):
                state = opt.state.get(p)
                if not state:
                    continue
                for key in ("step", "exp_avg", "exp_avg_sq"):
                    extra[f"opt/{name}/{i}/{key}"] = state[key].detach().cpu().numpy()
        extra["rng/torch"] = self.torch_rng.get_state().numpy()
        meta = {"trainer": {"step": self.step_count,
                            "accs_probability": self.accs_probability,
                            "np_rng": json.loads(json.dumps(
                                self.np_rng.bit_generator.state))}}
        return save_checkpoint(path, self.models, step=self.step_count,
                               extra_meta=meta, extra_tensors=extra)

    @classmethod
    def restore(cls, path: str | Path, dataset: PacMaskDataset,
                log_path: str | Path | None = None,
                checkpoint_dir: str | Path | None = None) -> "Trainer":
        from .checkpoint import load_checkpoint
        models, meta, tensors = load_checkpoint(path)
        trainer = cls(models, dataset, log_path=log_path,
                      checkpoint_dir=checkpoint_dir)
        tmeta = meta.get("trainer")
        if tmeta is None:
            trainer.step_count = meta.get("step", 0)
            return trainer
        trainer.step_count = tmeta["step"]
        trainer.accs_probability = tmeta["accs_probability"]
        state = tmeta["np_rng"]
        trainer.np_rng.bit_generator.state = state
        if "rng/torch" in tensors:
            trainer.torch_rng.set_state(
                torch.as_tensor(tensors["rng/torch"], dtype=torch.uint8))
        for name, opt in trainer._opts():
            for i, p in enumerate(opt.param_groups[0]["params"]):
                key = f"opt/{name}/{i}/exp_avg"
                if key not in tensors:
                    continue
                opt.state[p] = {
                    "step": torch.as_tensor(tensors[f"opt/{name}/{i}/step"]).to(torch.float32),
                    "exp_avg": torch.as_tensor(tensors[key]).to(p.dtype).reshape(p.shape),
                    "exp_avg_sq": torch.as_tensor(
                        tensors[f"opt/{name}/{i}/exp_avg_sq"]).to(p.dtype).reshape(p.shape),
                }
        return trainer

    # -- driver -------------------------------------------------------------------

    def _log(self, entry: dict) -> None:
        self.loss_history.append(entry)
        if self.log_path:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def run(self, n_steps: int | None = None, fmd_at_checkpoints: bool = False) -> None:
        tcfg = self.cfg.training
        n_steps = n_steps if n_steps is not None else tcfg.total_steps
        for _ in range(n_steps):
            losses = self.train_step()
            if self.step_count % tcfg.log_interval == 0 or self.step_count == 1:
                entry = {"step": self.step_count, "phase": self.phase,
                         "losses": losses}
                if fmd_at_checkpoints and self.step_count % tcfg.checkpoint_interval == 0:
                    entry["fmd"] = self.evaluate_fmd()
                self._log(entry)
            if (self.checkpoint_dir
                    and self.step_count % tcfg.checkpoint_interval == 0):
                self.checkpoint_dir.mkdir(parents=True, exist_ok=True)
                save_checkpoint(self.checkpoint_dir / f"step{self.step_count:06d}.ckpt",
                                self.models, step=self.step_count)
