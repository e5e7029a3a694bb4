import math
from typing import Any, Dict, List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, model_validator
from exceptions.params_exceptions import ConstraintViolationException, InvalidParamsException

ConstraintKind = Literal["equal", "maximal", "average"]
ThetaPolicy = Literal["capacity", "exponent-asymptotic", "exponent-finite-n", "fixed"]
Method = Literal["auto", "exact", "saddlepoint-full", "saddlepoint-hat", "verdu-han"]

POWER_TOLERANCE = 1e-12


class LogValue(BaseModel):
    """Nonnegative quantity stored through its natural log; -inf encodes zero."""

    model_config = ConfigDict(frozen=True)

    log_magnitude: float

    @property
    def value(self) -> float:
        return math.exp(self.log_magnitude)

    @classmethod
    def of(cls, value: float) -> "LogValue":
        return cls(log_magnitude=math.log(value) if value > 0 else -math.inf)


class TailProbability(BaseModel):
    """A probability together with its complement, both kept in log form."""

    model_config = ConfigDict(frozen=True)

    log_value: float
    log_complement: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)

    @property
    def complement(self) -> float:
        return math.exp(self.log_complement)


class TestParams(BaseModel):
    """Binary test between N(sqrt(gamma), sigma2)^n and N(0, theta2)^n."""

    __test__ = False
    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    gamma: float = Field(ge=0.0, allow_inf_nan=False)
    sigma2: float = Field(gt=0.0, allow_inf_nan=False)
    theta2: float = Field(allow_inf_nan=False)

    @model_validator(mode="after")
    def check_variances(self) -> "TestParams":
        if self.theta2 <= self.sigma2:
            raise InvalidParamsException(
                f"theta2={self.theta2} must exceed sigma2={self.sigma2}"
            )
        return self

    @property
    def delta(self) -> float:
        return self.theta2 - self.sigma2

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def theta(self) -> float:
        return math.sqrt(self.theta2)

    def with_gamma(self, gamma: float) -> "TestParams":
        return TestParams(n=self.n, gamma=gamma, sigma2=self.sigma2, theta2=self.theta2)


class TradeoffPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    t: float
    t_prime: float
    alpha: float
    beta: float
    log_alpha: float
    log_beta: float


class FDerivatives(BaseModel):
    t: float
    df_dgamma: float
    df_dbeta: float
    d2f_dbeta_dgamma: float
    d2f_dbeta2: float
    d2f_dgamma2: float
    at_origin: bool


class SaddlepointState(BaseModel):
    s: float
    kappa: float
    dkappa: float
    d2kappa: float
    d3kappa: float
    eta: float
    lambda_a: float
    lambda_b: float
    a_corr: Optional[float] = None
    b_corr: Optional[float] = None


class SaddlepointResult(BaseModel):
    value: float
    log_value: float
    s_star: float
    theta2: float
    variant: Literal["full", "hat"]


class ExponentReport(BaseModel):
    rate_nats: float
    capacity_nats: float
    s_star: float
    esp: float
    theta_tilde2: float
    augustin: float
    critical_rate_nats: float


class EnvelopeBoundary(BaseModel):
    gamma: float
    t0: float
    beta0: float
    log_beta0: float
    bar_t_star: float
    bar_beta: float
    log_bar_beta: float
    roots: int = 1


class BoundaryRow(BaseModel):
    gamma: float
    boundary: Optional[EnvelopeBoundary] = None
    error: Optional[str] = None


class EnvelopeSolution(BaseModel):
    t0: float
    gamma0: float
    beta0: float
    bar_t_star: float
    bar_beta: float
    lambda_: float = Field(serialization_alias="lambda")
    value: float
    log_value: float
    on_boundary_or_above: bool
    warnings: List[str] = []


class CardinalityThreshold(BaseModel):
    n: int
    m_bar: float
    log_m_bar: float
    rate_bits: float


class InputMixture(BaseModel):
    origin_mass: float
    shell_energy: float
    shell_mass: float


class BoundQuery(BaseModel):
    model_config = ConfigDict(frozen=True)

    constraint: ConstraintKind
    n: int = Field(ge=1)
    m: Optional[float] = Field(default=None, gt=1.0)
    rate_bits: Optional[float] = Field(default=None, gt=0.0)
    snr_db: float
    theta_policy: ThetaPolicy = "capacity"
    theta2: Optional[float] = None
    method: Method = "auto"

    @model_validator(mode="after")
    def check_query(self) -> "BoundQuery":
        if (self.m is None) == (self.rate_bits is None):
            raise InvalidParamsException("exactly one of M or the rate must be given")
        if self.theta_policy == "fixed" and (self.theta2 is None or self.theta2 <= 1.0):
            raise InvalidParamsException("fixed theta policy needs theta2 > sigma2 = 1")
        return self

    @property
    def upsilon(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def log_m(self) -> float:
        if self.m is not None:
            return math.log(self.m)
        return self.n * self.rate_bits * math.log(2.0)

    @property
    def log_beta(self) -> float:
        return -self.log_m

    @property
    def rate_nats(self) -> float:
        return self.log_m / self.n

    def with_n(self, n: int) -> "BoundQuery":
        return self.model_copy(update={"n": n})


class BoundResult(BaseModel):
    value: float
    log_value: float
    log10_value: float
    bound_name: str
    constraint: Optional[ConstraintKind] = None
    method_used: str
    s_star: Optional[float] = None
    t_star: Optional[float] = None
    theta2_used: Optional[float] = None
    warnings: List[str] = []

    @classmethod
    def from_log(cls, log_value: float, **fields: Any) -> "BoundResult":
        return cls(
            value=math.exp(log_value),
            log_value=log_value,
            log10_value=log_value / math.log(10.0),
            **fields,
        )


class SweepRow(BaseModel):
    n: int
    m: float
    rate_bits: float
    bound: str
    value: Optional[float] = None
    log10_value: Optional[float] = None
    method: Optional[str] = None
    error: Optional[str] = None


class RingSpec(BaseModel):
    count: int = Field(ge=1)
    radius: float = Field(ge=0.0)
    phase: float = 0.0


class Constellation(BaseModel):
    """Two-dimensional code with its power bookkeeping (budget is n*Upsilon, n = 2)."""

    points: List[Tuple[float, float]]
    constraint_kind: ConstraintKind
    power_budget: float = Field(gt=0.0)

    @model_validator(mode="after")
    def check_power(self) -> "Constellation":
        energies = self.energies
        limit = self.power_budget * (1.0 + POWER_TOLERANCE)
        if self.constraint_kind == "equal":
            for index, energy in enumerate(energies):
                if abs(energy - self.power_budget) > POWER_TOLERANCE * self.power_budget:
                    raise ConstraintViolationException(
                        f"codeword {index} has energy {energy}, expected {self.power_budget}", index
                    )
        elif self.constraint_kind == "maximal":
            for index, energy in enumerate(energies):
                if energy > limit:
                    raise ConstraintViolationException(
                        f"codeword {index} has energy {energy} above {self.power_budget}", index
                    )
        elif energies and sum(energies) / len(energies) > limit:
            index = max(range(len(energies)), key=energies.__getitem__)
            raise ConstraintViolationException(
                f"mean energy {sum(energies) / len(energies)} above {self.power_budget}", index
            )
        return self

    @property
    def energies(self) -> List[float]:
        return [x * x + y * y for x, y in self.points]

    @property
    def size(self) -> int:
        return len(self.points)

    def to_text(self) -> str:
        lines = [
            f"# constraint_kind: {self.constraint_kind}",
            f"# power_budget: {self.power_budget!r}",
            f"# size: {self.size}",
        ]
        lines.extend(f"{x!r} {y!r}" for x, y in self.points)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Constellation":
        header: Dict[str, str] = {}
        points = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
                continue
            x, y = line.split()
            points.append((float(x), float(y)))
        return cls(
            points=points,
            constraint_kind=header["constraint_kind"],
            power_budget=float(header["power_budget"]),
        )


class McEstimate(BaseModel):
    error_prob: float
    std_error: float
    trials: int
    errors: int
    seed: int


class RunConfig(BaseModel):
    command: str
    options: Dict[str, Any]
    output_format: Literal["csv", "json"] = "csv"
    output_path: Optional[str] = None
    seed: Optional[int] = None
    workers: int = 1
    version: str
