"""
Sequence evaluation and report aggregation.
"""

import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence, Union

from pydantic import BaseModel
from tqdm import tqdm

from src.backbones.encoders import PerceptualEncoder
from src.core.exceptions import DomainError
from src.core.storage import LocalArtifactStore
from src.imaging.schemas import FlowField, ImageTensor
from src.metrics.quality import sifid, ssim
from src.metrics.schemas import METRIC_FIELDS, FlowSource, MetricMeans, SequenceMetrics, SequenceMetricsReport
from src.metrics.temporal import PerceptualDistance, adjacent_perceptual_distances, warping_errors
from src.objective.losses import StyleTargets, content_loss, style_loss

logger = logging.getLogger(__name__)

# columns of the rendered table: (field, header, scale)
TABLE_COLUMNS = (
    ("warping_error", "Warping x10", 10.0),
    ("perceptual_error", "LPIPS x10", 10.0),
    ("ssim", "SSIM", 1.0),
    ("sifid", "SIFID", 1.0),
    ("content_err", "Content", 1.0),
    ("style_err", "Style", 1.0),
)


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def _means(items: Sequence[Union[SequenceMetrics, MetricMeans]]) -> Dict[str, float]:
    return {name: _mean([getattr(item, name) for item in items]) for name in METRIC_FIELDS}


def evaluate_sequence(original: Sequence[ImageTensor], stylised: Sequence[ImageTensor],
                      flows: Sequence[FlowField], style_image: ImageTensor, encoder: PerceptualEncoder,
                      perceptual: PerceptualDistance, sequence: str = "sequence", style: str = "style",
                      flow_source: FlowSource = "analytic") -> SequenceMetricsReport:
    """Every metric of one stylised sequence against its originals and style image."""
    if len(original) != len(stylised):
        raise DomainError(f"{len(original)} original frames but {len(stylised)} stylised frames")
    if not stylised:
        raise DomainError("Cannot evaluate an empty sequence")

    warping_trace = warping_errors(stylised, flows, masked=True)
    unmasked_trace = warping_errors(stylised, flows, masked=False)
    perceptual_trace = adjacent_perceptual_distances(stylised, perceptual)

    targets = StyleTargets.from_image(encoder, style_image)
    ssims, sifids, contents, styles = [], [], [], []
    for source, result in tqdm(zip(original, stylised), total=len(stylised), desc=f"evaluate[{sequence}]",
                               disable=None):
        ssims.append(ssim(source, result))
        sifids.append(sifid(source, result, encoder))
        contents.append(content_loss(encoder, source, result))
        styles.append(style_loss(encoder, result, targets))

    metrics = SequenceMetrics(
        sequence=sequence,
        style=style,
        frame_count=len(stylised),
        flow_source=flow_source,
        warping_error=_mean(warping_trace),
        warping_error_unmasked=_mean(unmasked_trace),
        perceptual_error=_mean(perceptual_trace),
        ssim=_mean(ssims),
        sifid=_mean(sifids),
        content_err=_mean(contents),
        style_err=_mean(styles),
        warping_trace=warping_trace,
        perceptual_trace=perceptual_trace,
    )
    return aggregate_reports([metrics], backbones={"encoder": encoder.identifier},
                             perceptual_backend=perceptual.identifier)


def aggregate_reports(items: Iterable[Union[SequenceMetrics, SequenceMetricsReport]],
                      backbones: Optional[Dict[str, str]] = None,
                      perceptual_backend: Optional[str] = None) -> SequenceMetricsReport:
    """Flatten sequences from reports and metrics; means are over sequences."""
    sequences: List[SequenceMetrics] = []
    merged_backbones: Dict[str, str] = dict(backbones or {})
    backend = perceptual_backend or ""
    for item in items:
        if isinstance(item, SequenceMetricsReport):
            sequences.extend(item.per_sequence)
            for key, value in item.backbones.items():
                merged_backbones.setdefault(key, value)
            backend = backend or item.perceptual_backend
        else:
            sequences.append(item)

    by_style: Dict[str, List[SequenceMetrics]] = defaultdict(list)
    for metrics in sequences:
        by_style[metrics.style].append(metrics)

    return SequenceMetricsReport(
        **_means(sequences),
        per_sequence=sequences,
        per_style={name: MetricMeans(**_means(group)) for name, group in by_style.items()},
        backbones=merged_backbones,
        perceptual_backend=backend,
    )


def render_table(report: SequenceMetricsReport) -> str:
    """Aligned plain-text table, one row per style plus the overall mean."""
    headers = ["Style"] + [header for _, header, _ in TABLE_COLUMNS]
    rows = []
    for name, means in sorted(report.per_style.items()):
        rows.append([name] + [f"{getattr(means, field) * scale:.4f}" for field, _, scale in TABLE_COLUMNS])
    rows.append(["mean"] + [f"{getattr(report, field) * scale:.4f}" for field, _, scale in TABLE_COLUMNS])

    widths = [max(len(row[i]) for row in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i]) for i, cell in enumerate(row))
             for row in [headers] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_report(store: LocalArtifactStore, report: BaseModel, name: str = "report") -> None:
    store.save_json(report, f"{name}.json")
    if isinstance(report, SequenceMetricsReport):
        store.path(f"{name}.txt").write_text(render_table(report) + "\n", encoding="utf-8")
    logger.info(f"Report written to {store.path(name + '.json')}")
