from logging import DEBUG, INFO
from typing import Literal, Tuple
from pydantic_settings import BaseSettings
from environs import Env

VERSION = "0.1.0"

env = Env()

env.read_env()


class DevSettings(BaseSettings):
    LOGGING_LEVEL: Literal[10] = DEBUG
    WORKERS: int = env.int("AWGN_FLB_WORKERS", 1)

    # Exact (Marcum-Q) path
    EXACT_MAX_N: int = 1000
    T_SOLVER_MAX_ITER: int = 200
    T_SOLVER_RTOL: float = 1e-12
    T_SOLVER_ATOL: float = 1e-14

    # Envelope boundary search
    T0_GRID_POINTS: int = 10_000
    T0_GRID_MIN_FACTOR: float = 1e-6
    T0_GRID_MAX_FACTOR: float = 1e3
    T0_ABS_TOL: float = 1e-11
    GAMMA0_MAX_FACTOR: float = 1e6
    GAMMA0_SCAN_POINTS: int = 64

    # Saddlepoint and exponents
    SP_S_BRACKET: Tuple[float, float] = (-1.0, 2.0)
    SP_GRID_POINTS: int = 61
    SP_MAX_EXPANSIONS: int = 20
    ESP_S_TOL: float = 1e-10
    CRITICAL_RATE_TOL: float = 1e-6

    # Cone packing
    CONE_PACKING_MAX_N: int = 200
    QUAD_ABS_TOL: float = 1e-9

    # Sweeps and simulation
    MAXRATE_LOG_EPS_RTOL: float = 1e-4
    MAXRATE_SCAN_POINTS: int = 32
    MC_BLOCK_SIZE: int = 1 << 16


class ProductionSettings(DevSettings):
    LOGGING_LEVEL: Literal[20] = INFO


dev_settings = DevSettings()
prod_settings = ProductionSettings()

settings = dev_settings if env.bool("DEBUG", False) else prod_settings
