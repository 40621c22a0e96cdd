"""Training loop, ancestral sampler, and test-set evaluation.

Sampling draws x_T ~ N(0, I) once and runs T reverse steps with fresh
per-step noise scaled by sqrt(beta_t); no noise is added at the final step.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import metrics as _metrics
from .metrics import MetricConfig, batch_stats
from .schedule import NoiseSchedule, make_schedule, posterior_step_params
from .signals import Dataset
from .unet import ConfigError, DenoiserConfig, DenoiserNet

LOSS_KINDS = ("huber", "mse", "mae")


class DivergedTrainingError(RuntimeError):
    def __init__(self, epoch: int, step: int):
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 0.1
    loss_kind: str = "huber"
    schedule_kind: str = "linear"
    T: int = 1000
    seed: int = 0
    condition_enabled: bool = True
    beta_start: float = 1e-4
    beta_end: float = 0.02
    cosine_s: float = 0.008

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.loss_kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    global_step: int = 0
    checkpoint_path: str | None = None


def huber(e) -> float:
    """Mean Huber value of a residual array: 0.5 e^2 below |e| = 1, |e| - 0.5 above."""
    e = np.abs(np.asarray(e, dtype=np.float64))
    return float(np.mean(np.where(e < 1.0, 0.5 * e * e, e - 0.5)))


def mse(e) -> float:
    e = np.asarray(e, dtype=np.float64)
    return float(np.mean(e * e))


def mae(e) -> float:
    return float(np.mean(np.abs(np.asarray(e, dtype=np.float64))))


def _torch_loss(kind: str, residual: torch.Tensor) -> torch.Tensor:
    if kind == "huber":
        a = residual.abs()
        return torch.where(a < 1.0, 0.5 * a * a, a - 0.5).mean()
    if kind == "mse":
        return (residual * residual).mean()
    if kind == "mae":
        return residual.abs().mean()
    raise ValueError(f"unknown loss kind {kind!r}")


def build_schedule(tcfg: TrainConfig) -> NoiseSchedule:
    return make_schedule(
        tcfg.schedule_kind, tcfg.T,
        beta_start=tcfg.beta_start, beta_end=tcfg.beta_end, cosine_s=tcfg.cosine_s,
    )


def _stack_pairs(samples):
    vib = np.stack([s.vibration.values for s in samples]).astype(np.float32)
    volt = np.stack([s.voltage.values for s in samples]).astype(np.float32)
    return vib, volt


def train(dataset: Dataset, dcfg: DenoiserConfig, tcfg: TrainConfig,
          model: DenoiserNet | None = None, start_step: int = 0,
          progress=None) -> tuple[DenoiserNet, TrainReport]:
    """Run the eps-prediction training loop over the dataset's train split.

    Deterministic given (dataset, configs, seed). Pass an existing `model`
    plus `start_step` to resume from a checkpoint.
    """
    samples = dataset.train_samples()
    if not samples:
        raise ValueError("dataset has no training samples")
    if dcfg.condition_enabled != tcfg.condition_enabled:
        raise ConfigError("condition_enabled differs between model and train configs")

    torch.manual_seed(tcfg.seed)
    if model is None:
        model = DenoiserNet(dcfg)
    model.train()
    sched = build_schedule(tcfg)
    sqrt_ab = torch.tensor(np.sqrt(sched.alpha_bars), dtype=torch.float32)
    sqrt_1mab = torch.tensor(np.sqrt(1.0 - sched.alpha_bars), dtype=torch.float32)

    vib, volt = _stack_pairs(samples)
    x0_all = torch.from_numpy(vib).unsqueeze(1)
    c_all = torch.from_numpy(volt).unsqueeze(1)

    opt = torch.optim.AdamW(
        model.parameters(), lr=tcfg.learning_rate, weight_decay=tcfg.weight_decay
    )
    rng = np.random.default_rng(tcfg.seed)
    gen = torch.Generator().manual_seed(tcfg.seed)

    report = TrainReport(global_step=start_step)
    n = x0_all.shape[0]
    step = start_step
    for epoch in range(tcfg.epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        losses = []
        for lo in range(0, n, tcfg.batch_size):
            idx = torch.from_numpy(perm[lo:lo + tcfg.batch_size].copy())
            x0 = x0_all[idx]
            c = c_all[idx] if tcfg.condition_enabled else None
            t = torch.randint(0, tcfg.T, (x0.shape[0],), generator=gen)
            eps = torch.randn(x0.shape, generator=gen)
            x_t = sqrt_ab[t][:, None, None] * x0 + sqrt_1mab[t][:, None, None] * eps
            pred = model(x_t, t, c)
            loss = _torch_loss(tcfg.loss_kind, eps - pred)
            if not torch.isfinite(loss):
                raise DivergedTrainingError(epoch, step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
            step += 1
        report.epoch_losses.append(float(np.mean(losses)))
        report.epoch_seconds.append(time.perf_counter() - t0)
        report.global_step = step
        if progress is not None:
            progress(epoch, report.epoch_losses[-1])
    model.eval()
    return model, report


def sample(model: DenoiserNet, sched: NoiseSchedule, c: np.ndarray | None = None,
           n: int | None = None, seed: int = 0) -> np.ndarray:
    """Ancestral sampling; returns [n, L] float32. Deterministic given seed.

    `c` is a [n, L] (or [L]) voltage array for conditional models; pass None
    to run the unconditional path.
    """
    L = model.cfg.length
    if c is not None:
        if not model.cfg.condition_enabled:
            raise ConfigError("condition supplied to a condition-disabled model")
        c = np.asarray(c, dtype=np.float32)
        if c.ndim == 1:
            c = c[None, :]
        if c.shape[1] != L:
            raise ValueError(f"condition length {c.shape[1]} != model length {L}")
        if n is not None and n != c.shape[0]:
            raise ValueError("n disagrees with the number of supplied conditions")
        n = c.shape[0]
    elif n is None:
        n = 1

    model.eval()
    gen = torch.Generator().manual_seed(seed)
    x = torch.randn((n, 1, L), generator=gen)
    c_t = torch.from_numpy(c).unsqueeze(1) if c is not None else None
    with torch.no_grad():
        for t in reversed(range(sched.T)):
            ps = posterior_step_params(t, sched)
            t_vec = torch.full((n,), t, dtype=torch.long)
            eps_hat = model(x, t_vec, c_t)
            x = ps.mean_scale * (x - ps.eps_coeff * eps_hat)
            if t > 0:
                x = x + np.sqrt(ps.variance) * torch.randn(x.shape, generator=gen)
    return x.squeeze(1).numpy().astype(np.float32)


@dataclass(frozen=True)
class EvalRow:
    label: str
    rmse_mean: float
    rmse_std: float
    psnr_mean: float
    psnr_std: float
    fscs_mean: float
    fscs_std: float


EVAL_CSV_HEADER = "label,rmse_mean,rmse_std,psnr_mean,psnr_std,fscs_mean,fscs_std"


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[EvalRow, ...]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(EVAL_CSV_HEADER.split(","))
        for r in self.rows:
            writer.writerow([
                r.label,
                repr(r.rmse_mean), repr(r.rmse_std),
                repr(r.psnr_mean), repr(r.psnr_std),
                repr(r.fscs_mean), repr(r.fscs_std),
            ])
        return out.getvalue()


def evaluate(model: DenoiserNet, sched: NoiseSchedule, dataset: Dataset,
             cfg: MetricConfig = MetricConfig(), seed: int = 0,
             max_per_label: int | None = None,
             self_test: bool = False) -> EvalReport:
    """Generate from each test pair's voltage and score against ground truth.

    Statistics are mean +/- population std over the test samples of each
    condition label. `self_test` scores ground truth against itself (debug).
    """
    test = dataset.test_samples()
    if not test:
        raise ValueError("dataset has an empty test split")
    by_label: dict[str, list] = {}
    for s in test:
        by_label.setdefault(s.condition_label, []).append(s)
    rows = []
    for li, label in enumerate(sorted(by_label)):
        group = by_label[label]
        if max_per_label is not None:
            group = group[:max_per_label]
        vib, volt = _stack_pairs(group)
        if self_test:
            gen = vib
        elif model.cfg.condition_enabled:
            gen = sample(model, sched, c=volt, seed=seed + li)
        else:
            gen = sample(model, sched, n=len(group), seed=seed + li)
        vals = {"rmse": [], "psnr": [], "fscs": []}
        for y, y_hat in zip(vib, gen):
            vals["rmse"].append(_metrics.rmse(y, y_hat))
            vals["psnr"].append(_metrics.psnr(y, y_hat, cfg))
            vals["fscs"].append(_metrics.fscs(y, y_hat))
        stats = {k: batch_stats(v) for k, v in vals.items()}
        rows.append(EvalRow(
            label=label,
            rmse_mean=stats["rmse"][0], rmse_std=stats["rmse"][1],
            psnr_mean=stats["psnr"][0], psnr_std=stats["psnr"][1],
            fscs_mean=stats["fscs"][0], fscs_std=stats["fscs"][1],
        ))
    return EvalReport(rows=tuple(rows))
