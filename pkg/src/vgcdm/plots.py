"""Figure rendering for the CLI report paths (matplotlib, Agg backend).

Figures are companions to the delimited data files, never the primary
output; the text/CSV/f32le artifacts stay authoritative.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import magnitude_spectrum


def save_sample_figure(path, generated, sample_rate_hz: float,
                       reference=None, voltage=None) -> None:
    """Time-domain panel over a one-sided magnitude-spectrum panel."""
    generated = np.asarray(generated, dtype=np.float64)
    n = generated.size
    t = np.arange(n) / sample_rate_hz
    freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)

    fig, (ax_t, ax_f) = plt.subplots(2, 1, figsize=(8, 5))
    if reference is not None:
        ax_t.plot(t, np.asarray(reference), color="tab:red", lw=0.7, label="real")
    ax_t.plot(t, generated, color="tab:blue", lw=0.7, label="generated")
    if voltage is not None:
        ax_t.plot(t, np.asarray(voltage), color="black", lw=0.7, label="voltage")
    ax_t.set_xlabel("time [s]")
    ax_t.set_ylabel("amplitude")
    ax_t.legend(loc="upper right", fontsize=8)

    if reference is not None:
        ax_f.plot(freqs, magnitude_spectrum(reference), color="tab:red", lw=0.7)
    ax_f.plot(freqs, magnitude_spectrum(generated), color="tab:blue", lw=0.7)
    ax_f.set_xlabel("frequency [Hz]")
    ax_f.set_ylabel("|FFT|")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_schedule_figure(path, schedules: dict) -> None:
    """Cumulative-alpha curves for each named schedule."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, sched in schedules.items():
        ax.plot(np.arange(sched.T), sched.alpha_bars, label=name)
    ax.set_xlabel("step t")
    ax.set_ylabel(r"$\bar{\alpha}_t$")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_loss_figure(path, epoch_losses) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(epoch_losses)), epoch_losses)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_eval_figure(path, report) -> None:
    """Grouped bars of per-label metric means with std error bars."""
    labels = [r.label for r in report.rows]
    x = np.arange(len(labels))
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    panels = [
        ("RMSE", [r.rmse_mean for r in report.rows], [r.rmse_std for r in report.rows]),
        ("PSNR [dB]", [r.psnr_mean for r in report.rows], [r.psnr_std for r in report.rows]),
        ("FSCS", [r.fscs_mean for r in report.rows], [r.fscs_std for r in report.rows]),
    ]
    for ax, (title, means, stds) in zip(axes, panels):
        ax.bar(x, means, yerr=stds, capsize=3, color="tab:blue")
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=45, fontsize=8)
        ax.set_title(title, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_attention_figure(path, scores) -> None:
    """Heat map of the [32, L] channel summary plus logit distribution."""
    fig, (ax_map, ax_hist) = plt.subplots(
        2, 1, figsize=(8, 5), gridspec_kw={"height_ratios": [3, 1]}
    )
    im = ax_map.imshow(scores.channel_summary, aspect="auto", cmap="viridis",
                       interpolation="nearest")
    ax_map.set_ylabel("channel")
    ax_map.set_xlabel("position")
    fig.colorbar(im, ax=ax_map)
    ax_hist.hist(scores.logits.ravel(), bins=60, color="tab:blue")
    ax_hist.set_xlabel("pre-softmax logit")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
