"""SVG figures for stage slices."""

from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .stages import PlotField, Report  # noqa: E402

FIGSIZE = (6, 5)
QUIVER_STRIDE = 2


def _heatmap(field: PlotField, path: Path) -> None:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    image = ax.imshow(
        np.ma.masked_invalid(field.values).T,
        origin='lower',
        extent=field.extent,
        aspect='auto',
        cmap='viridis',
    )
    fig.colorbar(image, ax=ax)
    ax.set_title(field.name)
    ax.set_xlabel(field.labels[0])
    ax.set_ylabel(field.labels[1])
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _quiver(field: PlotField, path: Path) -> None:
    values = field.values[::QUIVER_STRIDE, ::QUIVER_STRIDE]
    nx, ny = field.values.shape[:2]
    x = np.linspace(field.extent[0], field.extent[1], nx)[::QUIVER_STRIDE]
    y = np.linspace(field.extent[2], field.extent[3], ny)[::QUIVER_STRIDE]
    xx, yy = np.meshgrid(x, y, indexing='ij')
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.quiver(xx, yy, values[..., 0], values[..., 1], angles='xy')
    ax.set_title(field.name)
    ax.set_xlabel(field.labels[0])
    ax.set_ylabel(field.labels[1])
    ax.set_aspect('equal')
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def emit_plots(report: Report, out_dir: str | Path) -> list[Path]:
    """Рисует срезы стадии; полностью пустые поля пропускаются."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for field in report.fields:
        if not np.isfinite(field.values).any():
            continue
        path = out / f"{report.stage}.{field.name}.svg"
        if field.kind == 'vector':
            _quiver(field, path)
        else:
            _heatmap(field, path)
        written.append(path)
    return written
