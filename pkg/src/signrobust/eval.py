"""Clean accuracy, epsilon sweeps, adversarial grids and their file outputs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attacks, nn
from .attacks import AttackConfig
from .data import Dataset, denormalize, normalize, write_ppm
from .errors import AttackError, ConfigError, DataError, SignRobustError
from .tensor import DTYPE

ATTACKS = ("fgsm", "pgd")
FGSM_EPS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
PGD_EPS = (0.0, 0.05, 0.1, 0.15, 0.2, 0.3)
CSV_HEADER = ("epsilon", "accuracy_percent", "n_examples")

# Every batched pass over a dataset uses this chunking so that the epsilon=0
# sweep row reproduces accuracy() bit for bit.
CHUNK = 64


def default_eps(attack_kind: str):
    return FGSM_EPS if attack_kind == "fgsm" else PGD_EPS


@dataclass
class EvalReport:
    attack_name: str
    rows: list  # (epsilon, accuracy_percent, n_examples)
    model_id: str = ""
    config: AttackConfig = field(default_factory=AttackConfig)

    def accuracy_at(self, eps: float) -> float:
        for e, acc, _ in self.rows:
            if e == eps:
                return acc
        raise KeyError(eps)


@dataclass
class ImageGrid:
    cells: list  # [adversarial row, perturbation row], each a list of images
    captions: list

    @property
    def rows(self):
        return len(self.cells)

    @property
    def cols(self):
        return len(self.captions)


def _predictions(model, x):
    return np.concatenate([nn.predict(model, x[i:i + CHUNK]) for i in range(0, len(x), CHUNK)])


def accuracy(model, ds: Dataset) -> float:
    """Percentage of examples whose prediction matches the label."""
    if len(ds) == 0:
        raise DataError("cannot measure accuracy on an empty dataset")
    pred = _predictions(model, ds.normalized())
    return 100.0 * int(np.sum(pred == ds.labels)) / len(ds)


def _check_eps_list(eps_list):
    eps = [float(e) for e in eps_list]
    if not eps:
        raise ConfigError("epsilon list is empty")
    if any(e < 0 for e in eps):
        raise ConfigError("epsilon values must be non-negative")
    if any(b <= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("epsilon values must be strictly increasing")
    return eps


def attack_dataset(model, x, y, attack_kind, cfg: AttackConfig, eps_index=0):
    """Attack every row of normalized ``x``; per-example seeds come from
    (cfg.seed, eps_index, example index)."""
    if attack_kind not in ATTACKS:
        raise ConfigError(f"unknown attack {attack_kind!r}")
    if cfg.epsilon == 0:
        # the epsilon-ball is the point x itself; both attacks return x exactly
        return x.copy()
    out = np.empty_like(x)
    for start in range(0, len(x), CHUNK):
        sl = slice(start, start + CHUNK)
        try:
            if attack_kind == "fgsm":
                out[sl], _ = attacks.fgsm_batch(model, x[sl], y[sl], cfg.epsilon)
            else:
                seeds = [attacks.example_seed(cfg.seed, eps_index, i)
                         for i in range(start, min(start + CHUNK, len(x)))]
                out[sl], _ = attacks.pgd_batch(model, x[sl], y[sl], cfg, seeds=seeds)
        except SignRobustError as exc:
            raise AttackError(start, exc) from exc
    return out


def epsilon_sweep(model, ds: Dataset, attack_kind: str, eps_list=None,
                  cfg: AttackConfig = AttackConfig(), model_id: str = "") -> EvalReport:
    """Adversarial accuracy at each epsilon."""
    if len(ds) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    eps = _check_eps_list(default_eps(attack_kind) if eps_list is None else eps_list)
    if 0.0 not in eps:
        raise ConfigError("epsilon list must contain 0")
    x = ds.normalized()
    rows = []
    for k, e in enumerate(eps):
        x_adv = attack_dataset(model, x, ds.labels, attack_kind,
                               AttackConfig(e, cfg.alpha, cfg.steps, cfg.random_start, cfg.seed), k)
        correct = int(np.sum(_predictions(model, x_adv) == ds.labels))
        rows.append((e, 100.0 * correct / len(ds), len(ds)))
    return EvalReport(attack_kind, rows, model_id, cfg)


def render_attack_grid(model, img, label: int, attack_kind: str, eps_list,
                       cfg: AttackConfig = AttackConfig()) -> ImageGrid:
    """Top row: adversarial images. Bottom row: perturbation mapped from
    [-eps, eps] to [0, 1] per column (mid-gray when eps is 0)."""
    eps = _check_eps_list(eps_list)
    x = normalize(img)
    top, bottom = [], []
    for e in eps:
        if attack_kind == "fgsm":
            adv = attacks.fgsm(model, x, label, e)
        elif attack_kind == "pgd":
            adv = attacks.pgd(model, x, label, AttackConfig(e, cfg.alpha, cfg.steps,
                                                            cfg.random_start, cfg.seed))
        else:
            raise ConfigError(f"unknown attack {attack_kind!r}")
        top.append(denormalize(adv.x_adv))
        if e == 0:
            bottom.append(np.full(np.shape(img), 0.5, dtype=DTYPE))
        else:
            pert = np.moveaxis(adv.perturbation, 0, -1)
            bottom.append(np.clip((pert + e) / (2 * e), 0.0, 1.0))
    return ImageGrid([top, bottom], [f"eps={e:.2f}" for e in eps])


def grid_image(grid: ImageGrid, sep: int = 2) -> np.ndarray:
    """Tile the grid into one image with ``sep``-pixel white gutters."""
    h, w, _ = np.shape(grid.cells[0][0])
    rows, cols = grid.rows, grid.cols
    out = np.ones((rows * h + (rows - 1) * sep, cols * w + (cols - 1) * sep, 3), dtype=DTYPE)
    for r, row in enumerate(grid.cells):
        for c, cell in enumerate(row):
            y0, x0 = r * (h + sep), c * (w + sep)
            out[y0:y0 + h, x0:x0 + w] = cell
    return out


def write_grid_ppm(grid: ImageGrid, path):
    try:
        write_ppm(grid_image(grid), path)
    except OSError as exc:
        raise OSError(f"cannot write grid to {path}: {exc}") from exc


def format_rows(report: EvalReport) -> str:
    lines = [",".join(CSV_HEADER)]
    lines += [f"{e:.2f},{acc:.2f},{n}" for e, acc, n in report.rows]
    return "\n".join(lines) + "\n"


def write_report_csv(report: EvalReport, path):
    try:
        Path(path).write_text(format_rows(report), newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def read_report_csv(path):
    """Parse a report CSV back into ``(epsilon, accuracy_percent, n_examples)`` rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise DataError(f"unexpected CSV header {header}")
        return [(float(e), float(a), int(n)) for e, a, n in reader]


def is_monotone(accuracies, slack=2.0) -> bool:
    """Non-increasing up to ``slack`` percentage points per adjacent pair."""
    return all(b <= a + slack for a, b in zip(accuracies, accuracies[1:]))
