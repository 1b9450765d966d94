from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field

FlowSource = Literal["analytic", "flo"]


class SequenceMetrics(BaseModel):
    """Raw (unscaled) metrics of one stylised sequence under one style."""

    sequence: str
    style: str
    frame_count: int
    flow_source: FlowSource = "analytic"
    warping_error: float = Field(ge=0)
    warping_error_unmasked: float = Field(ge=0)
    perceptual_error: float = Field(ge=0)
    ssim: float = Field(ge=-1, le=1)
    sifid: float = Field(ge=0)
    content_err: float = Field(ge=0)
    style_err: float = Field(ge=0)
    # per frame pair
    warping_trace: List[float] = []
    perceptual_trace: List[float] = []


METRIC_FIELDS = (
    "warping_error", "warping_error_unmasked", "perceptual_error",
    "ssim", "sifid", "content_err", "style_err",
)


class MetricMeans(BaseModel):
    warping_error: float = 0.0
    warping_error_unmasked: float = 0.0
    perceptual_error: float = 0.0
    ssim: float = 0.0
    sifid: float = 0.0
    content_err: float = 0.0
    style_err: float = 0.0


class SequenceMetricsReport(MetricMeans):
    """Means over every sequence, with per-sequence and per-style breakdowns.

    Values are stored raw; the x10 presentation of the warping and perceptual
    columns happens only when the table is rendered.
    """

    per_sequence: List[SequenceMetrics] = []
    per_style: Dict[str, MetricMeans] = {}
    backbones: Dict[str, str] = {}
    perceptual_backend: str = ""


class ModeMeasurement(BaseModel):
    mode: str
    warping_error: float
    # out-of-focus over in-focus mean squared Laplacian
    dof_ratio: float


class SceneComparison(BaseModel):
    seed: int
    before_post: ModeMeasurement
    after_post: ModeMeasurement

    @property
    def before_is_stabler(self) -> bool:
        return self.before_post.warping_error <= self.after_post.warping_error


class InjectionComparisonReport(BaseModel):
    scenes: List[SceneComparison]
    before_post_stabler: int
    mean_dof_ratio_before: float
    mean_dof_ratio_after: float
    thresholds: Optional[Dict[str, float]] = None
