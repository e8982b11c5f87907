"""Request/response models for the HTTP service.

Config fields are all optional here; the service merges them over the
RunConfig defaults, and RunConfig does the real validation so the CLI and
the service reject bad values identically.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class ConfigBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    root: str | None = None
    out_dir: str | None = None
    frame: str | None = None
    resolution: int | None = None
    low_resolution: int | None = None
    poses_per_shape: int | None = None
    per_class: int | None = None
    classes: list[str] | None = None
    contamination: float | None = None
    ratios: list[float] | None = None
    seed: int | None = None
    workers: int | None = None
    k: int | None = None
    dim: int | None = None
    tau_grid: list[float] | None = None
    similarity_mode: str | None = None
    d: float | None = None
    sample_count: int | None = None
    cd_clamp: float | None = None
    sweep: list[float] | None = None
    bins: int | None = None
    alpha: float | None = None

    def overrides(self) -> dict:
        """Only the RunConfig fields (subclasses add request-specific ones)."""
        dump = self.model_dump(exclude_none=True)
        return {k: v for k, v in dump.items() if k in ConfigBody.model_fields}


class ErrorDetail(BaseModel):
    kind: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorDetail


class HealthResponse(BaseModel):
    status: str


class VersionResponse(BaseModel):
    package: str
    vxbg_format: int
    model_container: int


class GenResponse(BaseModel):
    shapes: int
    classes: list[str]
    manifest_path: str


class SplitResponse(BaseModel):
    train: int
    val: int
    test: int
    split_path: str


class MaterializeResponse(BaseModel):
    grids: int
    resolution: int
    frame: str
    poses_per_shape: int


class FitResponse(BaseModel):
    kind: str
    model_path: str


class PredictRequest(ConfigBody):
    methods: list[str] | None = None


class PredictResponse(BaseModel):
    written: dict[str, int]


class EvalRequest(ConfigBody):
    methods: list[str] | None = None
    report_metric: str = "iou"


class EvalResponse(BaseModel):
    entries: int
    skips: int
    report_path: str
    files: list[str]


class KSRequest(ConfigBody):
    metric: str = "iou"
    binned: bool = False


class KSResponse(BaseModel):
    methods: list[str]
    classes: list[str]
    counts: list[list[int]]
    alpha: float


class SweepRow(BaseModel):
    method: str
    d: float
    mean_precision: float
    mean_recall: float
    mean_fscore: float


class SweepResponse(BaseModel):
    rows: list[SweepRow]


class CorrRequest(ConfigBody):
    metric: str = "iou"


class CorrResponse(BaseModel):
    # Pearson r per method; null when class sizes do not vary
    correlations: dict[str, float | None]


class CutoffRow(BaseModel):
    metric: str
    method: str
    cutoff: float
    percent_at_or_above: float


class CutoffResponse(BaseModel):
    rows: list[CutoffRow]


class VizRequest(ConfigBody):
    method: str
    key: str
    prefix: str | None = None


class VizResponse(BaseModel):
    files: list[str]


class IoURequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # two VXBG payloads, base64-encoded
    a: str
    b: str


class IoUResponse(BaseModel):
    iou: float


class KSSamplesRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    x: list[float] = Field(min_length=1)
    y: list[float] = Field(min_length=1)
    binned: bool = False
    bins: int = 50
    value_range: list[float] | None = None


class KSSamplesResponse(BaseModel):
    d_stat: float
    p_value: float
    n1: int
    n2: int
    binned: bool
