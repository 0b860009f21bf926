"""Random and adversarial instance generators."""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from .core import Instance, rational
from .engine import AlgoParams, Mode


@dataclass(frozen=True)
class UniformInt:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if not 1 <= self.lo <= self.hi:
            raise ValueError(f"UniformInt needs 1 <= lo <= hi, got ({self.lo}, {self.hi})")


@dataclass(frozen=True)
class PowerOfTwo:
    max_exp: int

    def __post_init__(self) -> None:
        if self.max_exp < 0:
            raise ValueError("PowerOfTwo needs max_exp >= 0")


@dataclass(frozen=True)
class Geometric:
    """Speeds ``base**(m-1), ..., base, 1``."""

    base: int

    def __post_init__(self) -> None:
        if self.base < 1:
            raise ValueError("Geometric needs base >= 1")


SizeDist = Union[UniformInt, PowerOfTwo]
SpeedDist = Union[UniformInt, Geometric]


def _draw_size(rng: random.Random, dist: SizeDist) -> int:
    if isinstance(dist, UniformInt):
        return rng.randint(dist.lo, dist.hi)
    if isinstance(dist, PowerOfTwo):
        return 2 ** rng.randint(0, dist.max_exp)
    raise ValueError(f"unsupported size distribution {dist!r}")


def _draw_speeds(rng: random.Random, dist: SpeedDist, m: int) -> list:
    if isinstance(dist, UniformInt):
        return sorted((rng.randint(dist.lo, dist.hi) for _ in range(m)), reverse=True)
    if isinstance(dist, Geometric):
        return [dist.base ** k for k in range(m - 1, -1, -1)]
    raise ValueError(f"unsupported speed distribution {dist!r}")


def gen_random(seed, n: int, m: int, size_dist: SizeDist, speed_dist: SpeedDist) -> Instance:
    """Integer instance; deterministic for a fixed seed."""
    if n < 1 or m < 1:
        raise ValueError(f"need n, m >= 1, got n={n}, m={m}")
    rng = random.Random(seed)
    speeds = _draw_speeds(rng, speed_dist, m)
    sizes = [_draw_size(rng, size_dist) for _ in range(n)]
    return Instance.from_values(speeds, sizes)


# Distribution mix used by the fuzzer: full-range draws plus small values that
# hit comparison boundaries often.
FUZZ_SIZE_DISTS = (UniformInt(1, 2**10), PowerOfTwo(10), UniformInt(1, 8))
FUZZ_SPEED_DISTS = (UniformInt(1, 2**7), Geometric(2), UniformInt(1, 4))


def trial_seed(seed: int, trial: int) -> int:
    return random.Random(f"usm-fuzz:{seed}:{trial}").getrandbits(63)


def fuzz_instance(seed: int, trial: int, max_n: int, max_m: int) -> Instance:
    rng = random.Random(trial_seed(seed, trial))
    n = rng.randint(1, max_n)
    m = rng.randint(1, max_m)
    size_dist = rng.choice(FUZZ_SIZE_DISTS)
    speed_dist = rng.choice(FUZZ_SPEED_DISTS)
    if isinstance(speed_dist, Geometric) and 2 ** (m - 1) > 2**7:
        speed_dist = FUZZ_SPEED_DISTS[0]
    return gen_random(rng.getrandbits(63), n, m, size_dist, speed_dist)


class AdversarialKind(str, enum.Enum):
    CRITICAL_AM1 = "critical-am1"
    CRITICAL_NONAM = "critical-nonam"
    SATURATION_LADDER = "saturation-ladder"


def gen_adversarial(kind, params: AlgoParams, scale=1, speeds: Optional[tuple] = None) -> Instance:
    """Fixed job sequences that steer one machine into a named configuration.

    ``scale`` becomes the guess ``T`` of the phase in which the configuration
    is reached. Sizes sit slightly inside the comparison boundaries (offsets
    of ``scale / 1000``) so that ties break the intended way.
    """
    kind = AdversarialKind(kind)
    scale = Fraction(rational(scale))
    if scale <= 0:
        raise ValueError("scale must be positive")
    if kind is AdversarialKind.CRITICAL_AM1:
        return _critical_am1(params, scale)
    if kind is AdversarialKind.CRITICAL_NONAM:
        return _critical_nonam(params, scale)
    return _saturation_ladder(params, scale, speeds)


def _critical_am1(params: AlgoParams, t: Fraction) -> Instance:
    # Machine 2 (speed 1) collects two old jobs of about T/2 in the phase with
    # guess T/2. After doubling to T, two new jobs of 3T/4 - T/1000 arrive: the
    # first frees the slightly smaller old job (which moves to the slow
    # machine 3), the second cannot afford the remaining old job of T/2.
    if not (params.mode is Mode.AMORTIZED and params.eta == 1 and params.gamma == Fraction(2, 3)):
        raise ValueError("critical-am1 requires the amortized eta=1 parameters with gamma=2/3 (xi=2)")
    d = t / 1000
    big_new = 3 * t / 4 - d
    speeds = (2, 1, Fraction(1, 2))
    sizes = (t, t / 2 - d, t / 2, big_new, big_new)
    return Instance.from_values(speeds, sizes)


def _critical_nonam(params: AlgoParams, t: Fraction) -> Instance:
    # The opener T on the fast machine fixes the guess T/4. Machine 2 (speed 1)
    # then takes T/4 - d while unsaturated and T/2 - d as its saturating job.
    # A job of 3T/2 - 5d fits nowhere, so the guess becomes T and the job goes
    # to machine 2. Its potential 3T/4 - 5d/2 evicts the T/2 - d job (which
    # moves to machine 3) but not the T/4 - d one: new load is about 3T/2 and
    # the larger part of the old load has been migrated.
    if not (
        params.mode is Mode.NON_AMORTIZED
        and params.gamma == Fraction(1, 2)
        and params.eta == 2
        and params.xi == 4
    ):
        raise ValueError("critical-nonam requires the non-amortized parameters gamma=1/2, eta=2, xi=4")
    d = t / 1000
    speeds = (4, 1, Fraction(1, 4))
    sizes = (t, t / 4 - d, t / 2 - d, 3 * t / 2 - 5 * d)
    return Instance.from_values(speeds, sizes)


def _saturation_ladder(params: AlgoParams, t: Fraction, speeds: Optional[tuple]) -> Instance:
    speeds = tuple(rational(s) for s in (speeds if speeds is not None else (4, 2, 1)))
    m = len(speeds)
    eta = Fraction(params.eta)
    s1 = speeds[0]
    # The opener fixes T = t; it lands on the slowest machine eta-eligible for it.
    first_home = max(i for i in range(m) if s1 <= eta * speeds[i])
    sizes = [t * s1]
    for i in range(m - 1, -1, -1):
        if i != first_home:
            sizes.append(eta * t * speeds[i])
    sizes.append(eta * t * s1)
    return Instance.from_values(speeds, sizes)
