import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import List, Optional, Sequence, Tuple
import numpy as np
from exceptions.params_exceptions import InvalidParamsException
from schemas.models import ConstraintKind, Constellation, McEstimate, RingSpec
from services.base_service import Service

logger = logging.getLogger(__name__)

MIN_TRIALS = 10_000

_RADIUS_STEP = 0.05
_PHASE_STEP = math.radians(5.0)
_COOLING = 0.97
_COUNT_MOVE_PROBABILITY = 0.3
_ORIGIN_MOVE_PROBABILITY = 0.2


def make_psk(m: int, upsilon: float, phase: float = 0.0) -> Constellation:
    if m < 1:
        raise InvalidParamsException(f"PSK needs M >= 1, got {m}")
    radius = math.sqrt(2.0 * upsilon)
    angles = phase + 2.0 * math.pi * np.arange(m) / m
    points = [(radius * math.cos(a), radius * math.sin(a)) for a in angles]
    return Constellation(points=points, constraint_kind="equal", power_budget=2.0 * upsilon)


def make_apsk(
    rings: Sequence[RingSpec],
    upsilon: float,
    constraint_kind: ConstraintKind,
    origin_count: int = 0,
) -> Constellation:
    """Concentric PSK rings plus origin_count codewords at (0, 0), checked against the budget 2*upsilon."""
    points = [(0.0, 0.0)] * origin_count
    for ring in rings:
        angles = ring.phase + 2.0 * math.pi * np.arange(ring.count) / ring.count
        points.extend((ring.radius * math.cos(a), ring.radius * math.sin(a)) for a in angles)
    return Constellation(points=points, constraint_kind=constraint_kind, power_budget=2.0 * upsilon)


def make_apsk_with_origin(m: int, upsilon: float, constraint_kind: ConstraintKind) -> Constellation:
    """(M-1)-PSK plus one codeword at the origin; under the average budget the ring absorbs the spare energy."""
    if m < 2:
        raise InvalidParamsException(f"APSK with origin needs M >= 2, got {m}")
    energy = 2.0 * upsilon * (m / (m - 1.0) if constraint_kind == "average" else 1.0)
    ring = RingSpec(count=m - 1, radius=math.sqrt(energy))
    return make_apsk([ring], upsilon, constraint_kind, origin_count=1)


def count_block_errors(points: np.ndarray, sigma: float, seed: int, block: int, size: int) -> int:
    """Nearest-point decoding errors of one block; the block owns the Philox stream (seed, block)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))
    messages = rng.integers(0, points.shape[0], size=size)
    received = points[messages] + sigma * rng.standard_normal((size, 2))
    # |y - c|^2 without the |y|^2 term, which is common to every codeword
    distances = np.square(points).sum(axis=1)[None, :] - 2.0 * received @ points.T
    # argmin returns the first minimum, so ties go to the lowest index
    decoded = np.argmin(distances, axis=1)
    return int(np.count_nonzero(decoded != messages))


class SimulationService(Service):
    """Monte-Carlo ML decoding error of two-dimensional codes and the ring-constellation search."""

    def ml_error_mc(
        self,
        constellation: Constellation,
        sigma2: float,
        trials: int,
        seed: int,
        workers: Optional[int] = None,
    ) -> McEstimate:
        if trials < MIN_TRIALS:
            raise InvalidParamsException(f"need at least {MIN_TRIALS} trials, got {trials}")
        if sigma2 <= 0:
            raise InvalidParamsException(f"noise variance must be positive, got {sigma2}")
        if constellation.size <= 1:
            return McEstimate(error_prob=0.0, std_error=0.0, trials=trials, errors=0, seed=seed)

        points = np.asarray(constellation.points, dtype=float)
        block_size = self.settings.MC_BLOCK_SIZE
        sizes = [min(block_size, trials - start) for start in range(0, trials, block_size)]
        task = partial(count_block_errors, points, math.sqrt(sigma2), seed)
        workers = workers or self.settings.WORKERS
        if workers > 1 and len(sizes) > 1:
            with ProcessPoolExecutor(max_workers=workers) as executor:
                errors = sum(executor.map(task, range(len(sizes)), sizes))
        else:
            errors = sum(task(block, size) for block, size in enumerate(sizes))

        p = errors / trials
        logger.debug(f"{errors} errors in {trials} trials (M={constellation.size}, seed={seed})")
        return McEstimate(
            error_prob=p,
            std_error=math.sqrt(p * (1.0 - p) / trials),
            trials=trials,
            errors=errors,
            seed=seed,
        )

    def apsk_search(
        self,
        m: int,
        upsilon: float,
        sigma2: float,
        constraint_kind: ConstraintKind,
        budget: int,
        seed: int,
        trials: int = 100_000,
        workers: Optional[int] = None,
    ) -> Tuple[Constellation, McEstimate]:
        """Random local search over ring layouts; a heuristic with no optimality claim.

        Every iteration scores the incumbent and one perturbed candidate on the
        same noise realization, so comparisons are not swamped by Monte-Carlo noise.
        """
        if budget < 1:
            raise InvalidParamsException(f"search budget must be >= 1, got {budget}")
        if m < 2:
            raise InvalidParamsException(f"search needs M >= 2, got {m}")
        rng = np.random.default_rng(seed)

        def score(layout: Tuple[List[RingSpec], int], iteration: int) -> int:
            code = self.__build(layout, upsilon, constraint_kind)
            iteration_seed = int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])
            return self.ml_error_mc(code, sigma2, trials, iteration_seed, workers).errors

        candidates = self.__seed_layouts(m, constraint_kind)
        scores = [score(layout, 0) for layout in candidates]
        best_index = int(np.argmin(scores))
        best = candidates[best_index]
        logger.info(f"search seeds scored {scores}, starting from layout {best_index}")

        for iteration in range(1, budget + 1):
            temperature = _COOLING**iteration
            candidate = self.__perturb(best, temperature, constraint_kind, rng)
            incumbent_errors = score(best, iteration)
            candidate_errors = score(candidate, iteration)
            if candidate_errors < incumbent_errors:
                logger.debug(f"iteration {iteration}: {candidate_errors} < {incumbent_errors} errors, accepted")
                best = candidate

        code = self.__build(best, upsilon, constraint_kind)
        final_seed = int(np.random.SeedSequence([seed, budget + 1]).generate_state(1)[0])
        return code, self.ml_error_mc(code, sigma2, trials, final_seed, workers)

    def __seed_layouts(self, m: int, constraint_kind: ConstraintKind) -> List[Tuple[List[RingSpec], int]]:
        layouts = [([RingSpec(count=m, radius=1.0)], 0)]
        if constraint_kind == "equal":
            return layouts
        layouts.append(([RingSpec(count=m - 1, radius=1.0)], 1))
        if m >= 8:
            inner = max(1, m // 5)
            layouts.append(
                ([RingSpec(count=inner, radius=0.5), RingSpec(count=m - 1 - inner, radius=1.0, phase=math.pi / (m - 1 - inner))], 1)
            )
            layouts.append(
                ([RingSpec(count=inner, radius=0.5), RingSpec(count=m - inner, radius=1.0)], 0)
            )
        return layouts

    def __perturb(
        self,
        layout: Tuple[List[RingSpec], int],
        temperature: float,
        constraint_kind: ConstraintKind,
        rng: np.random.Generator,
    ) -> Tuple[List[RingSpec], int]:
        rings, origin = layout
        counts = [ring.count for ring in rings]
        radii = [
            ring.radius * (1.0 + temperature * rng.uniform(-_RADIUS_STEP, _RADIUS_STEP)) for ring in rings
        ]
        phases = [ring.phase + temperature * rng.uniform(-_PHASE_STEP, _PHASE_STEP) for ring in rings]

        if len(rings) > 1 and rng.random() < _COUNT_MOVE_PROBABILITY:
            donor, receiver = rng.choice(len(rings), size=2, replace=False)
            if counts[donor] > 1:
                counts[donor] -= 1
                counts[receiver] += 1
        if constraint_kind != "equal" and rng.random() < _ORIGIN_MOVE_PROBABILITY:
            ring = int(rng.integers(len(rings)))
            if rng.random() < 0.5 and origin > 0:
                origin -= 1
                counts[ring] += 1
            elif counts[ring] > 1:
                origin += 1
                counts[ring] -= 1

        perturbed = [
            RingSpec(count=count, radius=radius, phase=phase)
            for count, radius, phase in zip(counts, radii, phases)
        ]
        return perturbed, origin

    def __build(
        self, layout: Tuple[List[RingSpec], int], upsilon: float, constraint_kind: ConstraintKind
    ) -> Constellation:
        """Rescale the ring radii so the layout meets the power constraint, then construct it."""
        rings, origin = layout
        budget = 2.0 * upsilon
        if constraint_kind == "equal":
            scale = [math.sqrt(budget) / ring.radius for ring in rings]
        elif constraint_kind == "maximal":
            scale = [math.sqrt(budget) / max(ring.radius for ring in rings)] * len(rings)
        else:
            total = origin + sum(ring.count for ring in rings)
            mean_energy = sum(ring.count * ring.radius**2 for ring in rings) / total
            scale = [math.sqrt(budget / mean_energy)] * len(rings)
        scaled = [
            RingSpec(count=ring.count, radius=ring.radius * factor, phase=ring.phase)
            for ring, factor in zip(rings, scale)
        ]
        return make_apsk(scaled, upsilon, constraint_kind, origin_count=origin)
