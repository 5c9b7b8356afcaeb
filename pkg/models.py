"""
Pydantic models for run configuration and result records.
"""
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple, get_args
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

VerifySuite = Literal["geometry", "peaks", "edge", "identities", "cgf", "twopoint", "sampler", "kernel"]
SUITE_NAMES = get_args(VerifySuite)


class PotentialSpec(BaseModel):
    """Potential section of a run configuration"""
    coeffs: Optional[List[float]] = Field(
        None, description="c_1..c_K of q(r) = sum c_k r^(2k), ascending powers of r^2"
    )
    table: Optional[Path] = Field(None, description="CSV file with columns r,q")

    @model_validator(mode="after")
    def _exactly_one_source(self):
        if (self.coeffs is None) == (self.table is None):
            raise ValueError("potential needs exactly one of 'coeffs' or 'table'")
        if self.coeffs is not None and not any(c != 0.0 for c in self.coeffs):
            raise ValueError("potential.coeffs must contain a nonzero coefficient")
        if self.table is not None and not self.table.is_file():
            raise ValueError(f"potential.table {self.table} does not exist")
        return self


class LambdaSpec(BaseModel):
    """Radial test function section of a run configuration"""
    kind: Literal["bump", "poly", "log", "const"] = "bump"
    support: Optional[Tuple[float, float]] = None
    plateau: Optional[Tuple[float, float]] = None
    height: float = 1.0
    coeffs: List[float] = Field(default_factory=lambda: [1.0])
    smoothness: int = Field(6, ge=2, le=12)

    @model_validator(mode="after")
    def _support_required(self):
        if self.kind != "const":
            if self.support is None:
                raise ValueError(f"lambda.kind={self.kind} needs lambda.support")
            lo, hi = self.support
            if not 0.0 <= lo < hi:
                raise ValueError(f"lambda.support must satisfy 0 <= r_lo < r_hi, got {self.support}")
        if self.plateau is not None and self.support is not None:
            lo, hi = self.support
            p_lo, p_hi = self.plateau
            if not lo <= p_lo <= p_hi <= hi:
                raise ValueError(f"lambda.plateau {self.plateau} must lie inside {self.support}")
        if self.kind == "log" and len(self.coeffs) != 2:
            raise ValueError("lambda.kind=log needs coeffs [a, b] for a + b log r")
        return self


class RunConfig(BaseModel):
    """Validated run configuration (file values merged with CLI flags)"""
    model_config = ConfigDict(populate_by_name=True)

    potential: PotentialSpec
    lam: Optional[LambdaSpec] = Field(None, alias="lambda")
    n: List[int] = Field(default_factory=lambda: [100])
    t_grid: List[float] = Field(default_factory=lambda: [0.0])
    s: float = 0.0
    seed: int = 0
    count: int = Field(1000, ge=1)
    out: Path = Path("out")
    edge: Literal["r1", "r2", "outer"] = "r1"
    mode: Literal["exact", "predicted", "both"] = "both"
    kernel_mode: Literal["general", "r1r2", "r1r1"] = "r1r2"
    kernel_t: float = 0.0
    kernel_s: float = 0.0
    theta1: float = 0.0
    theta2: float = 1.0
    routes: List[Literal["product", "ward", "predicted"]] = Field(
        default_factory=lambda: ["product", "predicted"]
    )
    s_steps: int = Field(8, ge=8)
    verify_suites: List[VerifySuite] = Field(default_factory=lambda: list(SUITE_NAMES))
    verify_n: Optional[List[int]] = Field(None, description="n-range of the edge oscillation series")
    threads: Optional[int] = Field(None, ge=1, description="unset: settings.THREADS")
    svg: bool = False
    xlsx: bool = False

    @field_validator("n")
    @classmethod
    def _check_n(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("n-list is empty")
        small = [n for n in value if n < 10]
        if small:
            raise ValueError(f"n must be >= 10, got {small}")
        return value

    @field_validator("verify_n")
    @classmethod
    def _check_verify_n(cls, value: Optional[List[int]]) -> Optional[List[int]]:
        if value is not None:
            if not value:
                raise ValueError("verify.n is empty")
            small = [n for n in value if n < 10]
            if small:
                raise ValueError(f"verify.n values must be >= 10, got {small}")
        return value

    @field_validator("t_grid")
    @classmethod
    def _check_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("t-grid is empty")
        return value


class GapParams(BaseModel):
    """Constants of one annular gap r1 < |z| < r2"""
    model_config = ConfigDict(frozen=True)

    r1: float
    r2: float
    B: float
    A: float
    rho: float
    u: float
    C_lemma: float
    dq1: float
    dq2: float
    a0: float
    d_dq1: float = Field(..., description="radial derivative of the Laplacian at r1")
    d_dq2: float = Field(..., description="radial derivative of the Laplacian at r2")

    @property
    def log_ratio(self) -> float:
        """log(r2/r1)"""
        return math.log(self.r2 / self.r1)

    @property
    def tau(self) -> complex:
        """Modulus pi*i/log(r2/r1) of the theta functions attached to the gap"""
        return complex(0.0, math.pi / self.log_ratio)


class DropletGeometry(BaseModel):
    """Annular decomposition of the droplet"""
    model_config = ConfigDict(frozen=True)

    annuli: List[Tuple[float, float]]
    outer_radius: float
    gaps: List[GapParams] = Field(default_factory=list)
    robin_gamma: float
    outer_dq: float
    outer_d_dq: float
    frostman_margin: float = Field(0.0, description="min of Q - obstacle over the off-droplet grid")

    @property
    def gap(self) -> Optional[GapParams]:
        return self.gaps[0] if self.gaps else None

    @property
    def boundary(self) -> List[Tuple[float, int]]:
        """Boundary radii with the sign of the outward normal relative to d/dr"""
        circles = []
        for a, b in self.annuli:
            if a > 0.0:
                circles.append((a, -1))
            circles.append((b, 1))
        return circles

    def contains(self, r: float) -> bool:
        return any(a <= r <= b for a, b in self.annuli)


class NDependentGapState(BaseModel):
    """Integer and fractional parts of Bn/2"""
    model_config = ConfigDict(frozen=True)

    n: int = Field(..., ge=1)
    m: int
    x: float = Field(..., ge=0.0, lt=1.0)
    alpha: float


class EdgePrediction(BaseModel):
    """Edge density expansion split into its order-n and order-sqrt(n) parts"""
    leading: float
    subleading: float
    total: float
    components: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _consistent_total(self):
        if not math.isclose(self.total, self.leading + self.subleading, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("total must equal leading + subleading")
        return self


class CgfPrediction(BaseModel):
    """Mean, variance and oscillatory part of a predicted CGF"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    e: float
    v: float
    n: Optional[int] = None
    osc: Optional[Callable[[float], float]] = Field(None, exclude=True)

    def oscillation(self, t: float) -> float:
        return 0.0 if self.osc is None else float(self.osc(t))

    def __call__(self, t: float) -> float:
        return t * self.e + 0.5 * t * t * self.v + self.oscillation(t)


class CgfCurve(BaseModel):
    """CGF values on a t-grid for one route"""
    t_grid: List[float]
    values: List[float]
    route: Literal["product", "ward", "predicted", "empirical"]

    @model_validator(mode="after")
    def _finite(self):
        if len(self.t_grid) != len(self.values):
            raise ValueError("t_grid and values differ in length")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"non-finite CGF value on route {self.route}")
        return self


class PredictionRecord(BaseModel):
    """One exact versus predicted comparison row"""
    n: int
    t: float
    z: float
    exact: Optional[float] = None
    predicted: Optional[float] = None

    @property
    def residual(self) -> Optional[float]:
        if self.exact is None or self.predicted is None:
            return None
        return self.exact - self.predicted

    def row(self) -> dict:
        return {"t": self.t, "z": self.z, "exact": self.exact,
                "predicted": self.predicted, "residual": self.residual}


class CheckResult(BaseModel):
    """Outcome of one verification check"""
    check: str
    n: Optional[int] = None
    residual: float
    bound: float
    passed: bool = Field(..., serialization_alias="pass")

    def row(self) -> dict:
        return {"check": self.check, "n": self.n, "residual": self.residual,
                "bound": self.bound, "pass": self.passed}
