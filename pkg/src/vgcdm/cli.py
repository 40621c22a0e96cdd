"""Command-line workbench: synth / train / sample / eval / inspect-attn /
schedule subcommands tying the library into reproducible experiments.

Every command is deterministic given its inputs and seed. Output
directories are never overwritten without --force.
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import click
import numpy as np
import torch

from . import plots
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .conditioning import extract_attention_map, write_attention_dump
from .engine import (
    DivergedTrainingError,
    TrainConfig,
    build_schedule,
    evaluate,
    sample as sample_signals,
    train as train_model,
)
from .metrics import MetricConfig, magnitude_spectrum
from .schedule import cosine_schedule, linear_schedule
from .signals import DatasetError, read_dataset, write_dataset
from .synthbench import BenchSpecError, load_bench_spec, make_dataset
from .unet import ConfigError, DenoiserConfig


class RunConfigError(click.ClickException):
    pass


_TOP_KEYS = {"dataset", "out", "seed", "model", "train"}


def _build_configs(doc: dict, path: str) -> tuple[str, str, DenoiserConfig, TrainConfig]:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise RunConfigError(f"{path}: unknown config key {sorted(unknown)[0]!r}")
    model_doc = dict(doc.get("model", {}))
    train_doc = dict(doc.get("train", {}))
    model_fields = {f.name for f in dataclasses.fields(DenoiserConfig)}
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    for key in model_doc:
        if key not in model_fields:
            raise RunConfigError(f"{path}: unknown model key {key!r}")
    for key in train_doc:
        if key not in train_fields:
            raise RunConfigError(f"{path}: unknown train key {key!r}")
    if "channel_multipliers" in model_doc:
        model_doc["channel_multipliers"] = tuple(model_doc["channel_multipliers"])
    if "seed" in doc:
        train_doc.setdefault("seed", int(doc["seed"]))
    try:
        dcfg = DenoiserConfig(**model_doc)
        tcfg = TrainConfig(**train_doc)
    except (ConfigError, ValueError) as exc:
        raise RunConfigError(f"{path}: {exc}") from exc
    if "dataset" not in doc:
        raise RunConfigError(f"{path}: missing required key 'dataset'")
    return str(doc["dataset"]), str(doc.get("out", "run")), dcfg, tcfg


def _prepare_out_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not force:
        raise click.ClickException(
            f"output directory {path} exists and is not empty (use --force)"
        )
    path.mkdir(parents=True, exist_ok=True)
    return path


def _check_out_file(path: Path, force: bool) -> Path:
    if path.exists() and not force:
        raise click.ClickException(f"{path} exists (use --force)")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
def main():
    """Pulse-voltage-guided conditional diffusion workbench."""
    threads = os.environ.get("VGCDM_NUM_THREADS")
    if threads:
        torch.set_num_threads(max(1, int(threads)))


@main.command()
@click.argument("spec_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Override the spec's seed.")
@click.option("--force", is_flag=True)
def synth(spec_path, out, seed, force):
    """Generate a synthetic paired-signal dataset from a JSON spec."""
    try:
        entries, sample_rate_hz, length, spec_seed, noise_std = load_bench_spec(spec_path)
        dataset = make_dataset(
            entries, sample_rate_hz, length,
            seed=spec_seed if seed is None else seed, noise_std=noise_std,
        )
    except (BenchSpecError, ValueError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"invalid spec: {exc}") from exc
    out_dir = _prepare_out_dir(Path(out), force)
    write_dataset(dataset, out_dir)
    m = dataset.manifest
    n_train = m.split.count("train")
    click.echo(
        f"wrote {m.n_samples} samples (L={m.length}) to {out_dir}; "
        f"labels={','.join(m.label_set)}; split {n_train}/{m.n_samples - n_train}"
    )


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--no-condition", is_flag=True,
              help="Train the unconditional ablation.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.option("--resume", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--force", is_flag=True)
def train(config_path, seed, no_condition, out, resume, force):
    """Train the denoiser per a JSON run config; write checkpoint + loss CSV."""
    doc = json.loads(Path(config_path).read_text())
    dataset_path, out_default, dcfg, tcfg = _build_configs(doc, config_path)
    if seed is not None:
        tcfg = dataclasses.replace(tcfg, seed=seed)
    if no_condition:
        dcfg = dataclasses.replace(dcfg, condition_enabled=False)
        tcfg = dataclasses.replace(tcfg, condition_enabled=False)
    out_dir = _prepare_out_dir(Path(out or out_default), force)
    try:
        dataset = read_dataset(dataset_path)
    except DatasetError as exc:
        raise click.ClickException(str(exc)) from exc
    if dataset.manifest.length != dcfg.length:
        raise click.ClickException(
            f"dataset length {dataset.manifest.length} != model length {dcfg.length}"
        )

    model, start_step = None, 0
    if resume:
        ckpt = load_checkpoint(resume)
        if ckpt.denoiser_config != dcfg:
            raise click.ClickException(
                "resume checkpoint's model config differs from the run config"
            )
        model = ckpt.build_model()
        start_step = int(ckpt.extras.get("global_step", 0))

    ckpt_path = out_dir / "checkpoint.bin"

    def progress(epoch, loss):
        click.echo(f"epoch {epoch}: mean loss {loss:.6f}")

    try:
        model, report = train_model(
            dataset, dcfg, tcfg, model=model, start_step=start_step,
            progress=progress,
        )
    except DivergedTrainingError as exc:
        # Keep whatever state exists so the run can be inspected.
        if model is not None:
            save_checkpoint(ckpt_path, model, tcfg,
                            extras={"global_step": start_step})
            (out_dir / "checkpoint.bin.diverged").write_text(str(exc) + "\n")
        raise click.ClickException(str(exc)) from exc

    save_checkpoint(ckpt_path, model, tcfg,
                    extras={"global_step": report.global_step})
    csv_lines = ["epoch,mean_loss"]
    csv_lines += [f"{i},{repr(v)}" for i, v in enumerate(report.epoch_losses)]
    (out_dir / "loss_history.csv").write_text("\n".join(csv_lines) + "\n")
    plots.save_loss_figure(out_dir / "loss_history.png", report.epoch_losses)
    click.echo(f"wrote {ckpt_path} (global step {report.global_step})")


def _load_voltages(source: Path, length: int):
    """Return (voltages [k, L] or None, reference vibrations or None, sr)."""
    if source.is_dir():
        dataset = read_dataset(source)
        if dataset.manifest.length != length:
            raise click.ClickException(
                f"dataset length {dataset.manifest.length} != checkpoint length {length}"
            )
        test = dataset.test_samples() or list(dataset.samples)
        volt = np.stack([s.voltage.values for s in test])
        vib = np.stack([s.vibration.values for s in test])
        return volt, vib, dataset.manifest.sample_rate_hz
    raw = np.fromfile(source, dtype="<f4")
    if raw.size == 0 or raw.size % length != 0:
        raise click.ClickException(
            f"{source}: payload of {raw.size} floats is not a multiple of "
            f"checkpoint length {length}"
        )
    return raw.reshape(-1, length), None, None


@main.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("source", type=click.Path(exists=True))
@click.option("-n", "n_samples", type=int, default=None,
              help="Number of signals to generate.")
@click.option("--seed", type=int, default=0)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--plot-data", is_flag=True,
              help="Emit two-column time/spectrum text files and figures.")
@click.option("--force", is_flag=True)
def sample(checkpoint, source, n_samples, seed, out, plot_data, force):
    """Generate signals from a checkpoint, conditioned on SOURCE voltages.

    SOURCE is a dataset directory (test-split voltages are used) or a raw
    .f32le voltage file shaped [k, L].
    """
    try:
        ckpt = load_checkpoint(checkpoint)
    except CheckpointError as exc:
        raise click.ClickException(str(exc)) from exc
    model = ckpt.build_model()
    sched = build_schedule(ckpt.train_config)
    L = ckpt.denoiser_config.length
    volt, vib, sr = _load_voltages(Path(source), L)
    sr = sr or 1.0
    if n_samples is not None:
        volt = volt[:n_samples]
        vib = vib[:n_samples] if vib is not None else None
    out_dir = _prepare_out_dir(Path(out), force)
    if model.cfg.condition_enabled:
        generated = sample_signals(model, sched, c=volt, seed=seed)
    else:
        generated = sample_signals(model, sched, n=volt.shape[0], seed=seed)
    (out_dir / "generated.f32le").write_bytes(generated.astype("<f4").tobytes())
    manifest = {
        "n_samples": int(generated.shape[0]),
        "length": L,
        "seed": seed,
        "source": str(source),
        "conditional": bool(model.cfg.condition_enabled),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if plot_data:
        t_axis = np.arange(L) / sr
        f_axis = np.fft.rfftfreq(L, d=1.0 / sr)
        for i, sig in enumerate(generated):
            stem = out_dir / f"sample_{i:03d}"
            _write_two_column(stem.with_suffix(".time.txt"), t_axis, sig)
            _write_two_column(
                stem.with_suffix(".spectrum.txt"), f_axis, magnitude_spectrum(sig)
            )
            plots.save_sample_figure(
                stem.with_suffix(".png"), sig, sr,
                reference=vib[i] if vib is not None else None,
                voltage=volt[i] if model.cfg.condition_enabled else None,
            )
    click.echo(f"wrote {generated.shape[0]} signals to {out_dir}")


def _write_two_column(path, xs, ys) -> None:
    lines = [f"{repr(float(x))} {repr(float(y))}" for x, y in zip(xs, ys)]
    Path(path).write_text("\n".join(lines) + "\n")


@main.command("eval")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("dataset_path", type=click.Path(exists=True, file_okay=False))
@click.argument("out_csv", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0)
@click.option("--self-test", is_flag=True,
              help="Score ground truth against itself (debug).")
@click.option("--max-per-label", type=int, default=None)
@click.option("--force", is_flag=True)
def eval_cmd(checkpoint, dataset_path, out_csv, seed, self_test, max_per_label, force):
    """Evaluate generated signals per condition label; write a metrics CSV."""
    ckpt = load_checkpoint(checkpoint)
    model = ckpt.build_model()
    sched = build_schedule(ckpt.train_config)
    try:
        dataset = read_dataset(dataset_path)
    except DatasetError as exc:
        raise click.ClickException(str(exc)) from exc
    if dataset.manifest.length != model.cfg.length:
        raise click.ClickException(
            f"dataset length {dataset.manifest.length} != checkpoint length "
            f"{model.cfg.length}"
        )
    try:
        report = evaluate(
            model, sched, dataset, MetricConfig(), seed=seed,
            max_per_label=max_per_label, self_test=self_test,
        )
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    out_path = _check_out_file(Path(out_csv), force)
    out_path.write_text(report.to_csv())
    plots.save_eval_figure(out_path.with_suffix(".png"), report)
    click.echo(f"wrote {out_path} ({len(report.rows)} labels)")


@main.command("inspect-attn")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("voltage_files", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=0)
@click.option("--step", "t_step", type=int, default=0,
              help="Diffusion step to probe (0 = final denoising step).")
@click.option("--force", is_flag=True)
def inspect_attn(checkpoint, voltage_files, out, seed, t_step, force):
    """Dump cross-attention logits/scores for each supplied voltage condition."""
    ckpt = load_checkpoint(checkpoint)
    if not ckpt.denoiser_config.condition_enabled:
        raise click.ClickException("checkpoint has no condition branch")
    model = ckpt.build_model()
    L = model.cfg.length
    out_dir = _prepare_out_dir(Path(out), force)
    gen = torch.Generator().manual_seed(seed)
    x_t = torch.randn((1, 1, L), generator=gen)
    for vf in voltage_files:
        raw = np.fromfile(vf, dtype="<f4")
        if raw.size < L:
            raise click.ClickException(f"{vf}: fewer than {L} floats")
        c = torch.from_numpy(raw[:L].copy()).reshape(1, 1, L)
        condition_id = Path(vf).stem
        scores = extract_attention_map(model, x_t, t_step, c,
                                       condition_id=condition_id)
        dump_path = out_dir / f"{condition_id}.attn"
        write_attention_dump(scores, dump_path)
        plots.save_attention_figure(out_dir / f"{condition_id}.png", scores)
        click.echo(f"wrote {dump_path}")


@main.command()
@click.option("--t", "t_steps", type=int, default=1000)
@click.option("--beta-start", type=float, default=1e-4)
@click.option("--beta-end", type=float, default=0.02)
@click.option("--cosine-s", type=float, default=0.008)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--force", is_flag=True)
def schedule(t_steps, beta_start, beta_end, cosine_s, out, force):
    """Dump (t, alpha_bar_t) tables for the linear and cosine schedules."""
    out_dir = _prepare_out_dir(Path(out), force)
    schedules = {
        "linear": linear_schedule(t_steps, beta_start, beta_end),
        "cosine": cosine_schedule(t_steps, cosine_s),
    }
    for name, sched in schedules.items():
        _write_two_column(out_dir / f"{name}.txt",
                          np.arange(sched.T), sched.alpha_bars)
    plots.save_schedule_figure(out_dir / "schedule.png", schedules)
    click.echo(f"wrote schedule tables to {out_dir}")


if __name__ == "__main__":
    main()
