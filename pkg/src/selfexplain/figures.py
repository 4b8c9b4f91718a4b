"""Render study reports as figures, written next to the delimited output."""

from __future__ import annotations

from pathlib import Path

from .harness import AblationReport, PrecisionReport


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_precision_figure(report: PrecisionReport, path: str | Path) -> Path:
    """Scatter of pairwise similarity between the distinct answers of each
    question; questions on the y-axis, similarity on the x-axis."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 0.5 * max(4, len(report.per_question)) + 1))
    for q_index, question_report in enumerate(report.per_question, 1):
        matrix = question_report.similarity_matrix
        points = [matrix[i][j]
                  for i in range(len(matrix)) for j in range(i + 1, len(matrix))]
        if not points:
            points = [1.0]  # a single distinct answer is perfectly self-similar
        ax.scatter(points, [q_index] * len(points), alpha=0.6)
    ax.set_xlabel("pairwise answer similarity")
    ax.set_ylabel("question number")
    ax.set_xlim(-0.02, 1.02)
    ax.set_yticks(range(1, len(report.per_question) + 1))
    ax.grid(True, alpha=0.3)
    ax.set_title(f"Answer similarity across {report.n_requested} repeated runs")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_ablation_figure(report: AblationReport, path: str | Path) -> Path:
    """Per-question similarity to the full-model baseline at each level,
    with the level means joined by a line."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 5))
    levels = sorted(report.level_similarities)
    means = []
    for level in levels:
        scores = report.level_similarities[level]
        ax.scatter([level] * len(scores), scores, alpha=0.5, color="tab:blue")
        means.append(sum(scores) / len(scores) if scores else 0.0)
    if levels:
        ax.plot(levels, means, color="tab:red", marker="o", label="mean similarity")
        ax.legend()
    ax.set_xlabel("degradation level")
    ax.set_ylabel("similarity to full-model answer")
    ax.set_xticks(levels)
    ax.set_ylim(-0.02, 1.05)
    ax.grid(True, alpha=0.3)
    ax.set_title("Answer similarity under self-model degradation")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
