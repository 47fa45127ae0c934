"""
Base station topologies around the typical user at the origin, beam sectors and nearest-distance laws.
"""

import dataclasses as dc
import logging
import math
import pathlib
import warnings
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special

from . import errors
from .model import NetworkConfig, PathLossModel, path_loss

logger = logging.getLogger(__name__)

SectorIndex = int  # 1-based, sector i is the wedge [2 pi (i - 1) / M, 2 pi i / M)
Point = Tuple[float, float]


@dc.dataclass(frozen=True, eq=False)
class Topology:
    """
    One fixed realization of BS positions.

    :param points: `(n, 2)` array of positions in meters relative to the user
    :param window_radius: radius of the disk the points were drawn in
    :param lambda_bs: intensity the points were drawn with, `None` for hand-built topologies
    :param conditioned_point: index of the BS placed by conditioning on the nearest distance
    """

    points: np.ndarray
    window_radius: float
    lambda_bs: Optional[float] = None
    conditioned_point: Optional[int] = None

    def __post_init__(self) -> None:
        points = np.array(self.points, dtype=float).reshape(-1, 2)
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)

        if not self.window_radius > 0:
            raise errors.DomainError(f"window radius must be positive, got {self.window_radius!r}")

        distances = self.distances
        if np.any(distances > self.window_radius * (1 + 1e-12)):
            raise errors.DomainError("topology points must lie inside the window")

        if self.conditioned_point is not None:
            if not 0 <= self.conditioned_point < len(points):
                raise errors.DomainError(f"conditioned point {self.conditioned_point} is out of range")
            if np.any(distances < distances[self.conditioned_point] * (1 - 1e-12)):
                raise errors.DomainError("a point is closer to the origin than the conditioned point")

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(self.points[:, 0], self.points[:, 1])

    @property
    def is_ppp_sample(self) -> bool:
        return self.lambda_bs is not None

    def __len__(self) -> int:
        return len(self.points)


class SectorNearest(NamedTuple):
    distance: float
    point: Point
    index: int


def sector_indices(points: np.ndarray, m_beams: int) -> np.ndarray:
    """
    Vectorized :py:func:`sector_of`; the origin maps to sector 1.
    """

    points = np.asarray(points, dtype=float).reshape(-1, 2)
    angles = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
    indices = np.floor(angles * (m_beams / (2 * np.pi))).astype(np.int64)

    # angles a rounding step below 2 pi may map onto 2 pi itself
    return np.minimum(indices, m_beams - 1) + 1


def sector_of(point: Point, m_beams: int) -> SectorIndex:
    x, y = point
    if x == 0 and y == 0:
        raise errors.DomainError("the origin belongs to no sector")

    return int(sector_indices(np.array([[x, y]]), m_beams)[0])


def nearest_per_sector(topology: Topology, m_beams: int) -> List[Optional[SectorNearest]]:
    """
    Minimum-norm point of every sector, `None` for an empty sector.
    """

    result: List[Optional[SectorNearest]] = [None] * m_beams
    if len(topology) == 0:
        return result

    sectors = sector_indices(topology.points, m_beams)
    distances = topology.distances
    order = np.lexsort((distances, sectors))

    for index in order:
        sector = sectors[index] - 1
        if result[sector] is None:
            x, y = topology.points[index]
            result[sector] = SectorNearest(float(distances[index]), (float(x), float(y)), int(index))

    return result


def sample_ppp_disk(lambda_bs: float, window_radius: float, rng: np.random.Generator) -> Topology:
    """
    Draws a homogeneous PPP on the disk of `window_radius` around the origin.
    """

    if not lambda_bs > 0 or not window_radius > 0:
        raise errors.DomainError("intensity and window radius must be positive")

    points = _uniform_annulus(rng.poisson(lambda_bs * math.pi * window_radius ** 2), 0.0, window_radius, rng)

    return Topology(points=points, window_radius=window_radius, lambda_bs=lambda_bs)


def sample_ppp_annulus(lambda_bs: float, r_inner: float, r_outer: float, rng: np.random.Generator) -> np.ndarray:
    """
    Draws a homogeneous PPP restricted to `r_inner < |x| <= r_outer`.
    """

    if not 0 <= r_inner < r_outer:
        raise errors.DomainError(f"invalid annulus ({r_inner}, {r_outer}]")

    count = rng.poisson(lambda_bs * math.pi * (r_outer ** 2 - r_inner ** 2))

    return _uniform_annulus(count, r_inner, r_outer, rng)


def _uniform_annulus(count: int, r_inner: float, r_outer: float, rng: np.random.Generator) -> np.ndarray:
    # uniform in area: r^2 is uniform on (r_inner^2, r_outer^2]
    radii = np.sqrt(r_outer ** 2 - (r_outer ** 2 - r_inner ** 2) * rng.random(count))
    angles = 2 * np.pi * rng.random(count)

    return np.column_stack((radii * np.cos(angles), radii * np.sin(angles)))


def sample_conditioned_topology(
        r0: float,
        lambda_bs: float,
        window_radius: float,
        rng: np.random.Generator,
) -> Topology:
    """
    One BS at distance `r0` with a uniform angle plus a PPP on the annulus `(r0, window_radius]`.
    """

    if not r0 > 0:
        raise errors.DomainError(f"conditioning distance must be positive, got {r0!r}")
    if r0 >= window_radius:
        raise errors.ConfigError(f"conditioning distance {r0} must be below the window radius {window_radius}")

    angle = 2 * np.pi * rng.random()
    nearest = np.array([[r0 * math.cos(angle), r0 * math.sin(angle)]])
    others = sample_ppp_annulus(lambda_bs, r0, window_radius, rng)

    return Topology(
        points=np.vstack((nearest, others)),
        window_radius=window_radius,
        lambda_bs=lambda_bs,
        conditioned_point=0,
    )


def sample_nearest_in_sector_distance(
        lambda_bs: float,
        m_beams: int,
        rng: np.random.Generator,
        size: Optional[int] = None,
) -> Union[float, np.ndarray]:
    """
    Inverse-CDF draw of the nearest BS distance inside one sector, CCDF `exp(-lambda pi r^2 / M)`.
    """

    if not lambda_bs > 0:
        raise errors.DomainError(f"intensity must be positive, got {lambda_bs!r}")

    uniform = 1.0 - rng.random(size)  # (0, 1]
    distances = np.sqrt(-m_beams * np.log(uniform) / (lambda_bs * math.pi))

    return float(distances) if size is None else distances


def sample_r0(lambda_bs: float, rng: np.random.Generator, size: Optional[int] = None) -> Union[float, np.ndarray]:
    """
    Nearest BS distance overall, PDF `2 pi lambda r exp(-lambda pi r^2)`.
    """

    return sample_nearest_in_sector_distance(lambda_bs, 1, rng, size)


def nearest_in_sector_ccdf(r: Union[float, np.ndarray], lambda_bs: float, m_beams: int) -> Union[float, np.ndarray]:
    return np.exp(-lambda_bs * math.pi * np.square(r) / m_beams)


def default_window_radius(lambda_bs: float, m_beams: int, r_inner: float = 0.0) -> float:
    """
    Radius leaving a sector empty with probability below 1e-6, beyond the void of radius `r_inner`.
    """

    return math.hypot(r_inner, math.sqrt(m_beams * math.log(1e6 * m_beams) / (lambda_bs * math.pi)))


def _log_attenuation_antiderivative(x: float, delta: float) -> float:
    # integral of log(1 + t) t^(-delta - 1) over (0, x], 0 < delta < 1
    if x == 0:
        return 0.0
    if math.isinf(x):
        return math.pi / (delta * math.sin(math.pi * delta))

    y = x / (1 + x)
    incomplete = special.betainc(1 - delta, delta, y) * special.beta(1 - delta, delta)

    return (incomplete - math.log1p(x) * x ** -delta) / delta


def far_field_attenuation(l0: float, cfg: NetworkConfig, plm: PathLossModel, window_radius: float) -> float:
    """
    Log-attenuation of the detection probability of a candidate with path loss `l0` caused by the PPP
    interferers of its sector outside the window: `(2 pi lambda / M) int_R^inf log(1 + Gamma l0 / l(r)) r dr`.
    """

    if not cfg.has_interference or l0 == 0:
        return 0.0

    total = 0.0
    for segment in plm.segments(window_radius):
        k = cfg.sinr_threshold * l0 / segment.c
        a = segment.alpha

        if a <= 2:
            if math.isinf(segment.r_hi):
                return math.inf

            value, _ = integrate.quad(lambda r: math.log1p(k * r ** -a) * r, segment.r_lo, segment.r_hi)
            total += value
        else:
            delta = 2 / a
            x_lo = k * segment.r_lo ** -a if segment.r_lo > 0 else math.inf
            x_hi = k * segment.r_hi ** -a if math.isfinite(segment.r_hi) else 0.0
            total += k ** delta / a * (
                _log_attenuation_antiderivative(x_lo, delta) - _log_attenuation_antiderivative(x_hi, delta)
            )

    return 2 * math.pi * cfg.lambda_bs / cfg.m_beams * total


def sector_attenuations(
        topology: Topology,
        cfg: NetworkConfig,
        plm: PathLossModel,
        nearest: Sequence[Optional[SectorNearest]],
) -> List[float]:
    """
    Far-field log-attenuations for the nearest BS of every sector, zero for hand-built topologies.
    """

    result = []
    for entry in nearest:
        if entry is None or not topology.is_ppp_sample:
            result.append(0.0)
        else:
            result.append(far_field_attenuation(path_loss(plm, entry.distance), cfg, plm, topology.window_radius))

    return result


def save_topology(path: Union[str, pathlib.Path], topology: Topology) -> None:
    """
    Writes a topology as tab-separated `x_m`, `y_m` rows; metadata goes to comment lines.
    """

    header = '\n'.join((
        f"window_radius={topology.window_radius!r}",
        f"lambda_bs={topology.lambda_bs!r}",
        f"conditioned_point={topology.conditioned_point!r}",
    ))

    with open(path, 'w') as stream:
        stream.write(''.join(f"# {line}\n" for line in header.splitlines()))
        stream.write("x_m\ty_m\n")
        np.savetxt(stream, topology.points, delimiter='\t', fmt='%.17g')


def load_topology(path: Union[str, pathlib.Path]) -> Topology:
    meta = {}
    comment_lines = 0
    with open(path) as stream:
        for line in stream:
            if not line.startswith('#'):
                break
            comment_lines += 1
            key, _, value = line[1:].strip().partition('=')
            meta[key] = value

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', UserWarning)  # empty topology
        points = np.loadtxt(path, comments='#', delimiter='\t', skiprows=comment_lines + 1, ndmin=2)

    lambda_bs = meta.get('lambda_bs', 'None')
    conditioned = meta.get('conditioned_point', 'None')

    return Topology(
        points=points.reshape(-1, 2),
        window_radius=float(meta['window_radius']),
        lambda_bs=None if lambda_bs == 'None' else float(lambda_bs),
        conditioned_point=None if conditioned == 'None' else int(conditioned),
    )
