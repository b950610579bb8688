import logging

import numpy as np

from network.params import CellularParams

report = logging.getLogger('cc.net')

SQRT3 = np.sqrt(3)


def cell_centers(K: int, r_c: float) -> np.ndarray:
    """Flat-topped hexagons stacked along y; neighbours share an edge."""
    return np.array([[0.0, k * SQRT3 * r_c] for k in range(K)])


def in_hexagon(points: np.ndarray, center: np.ndarray, r_c: float) -> np.ndarray:
    x, y = np.abs(np.atleast_2d(points) - center).T
    return (y <= SQRT3 / 2 * r_c) & (SQRT3 * x + y <= SQRT3 * r_c)


def place_receivers(p: CellularParams, rng: np.random.Generator) -> np.ndarray:
    """One RX per cell, uniform over the hexagon minus the disc of radius d_0."""
    centers = cell_centers(p.K, p.r_c)
    rx = np.empty_like(centers)
    for k, c in enumerate(centers):
        while True:
            cand = c + rng.uniform(-p.r_c, p.r_c, size=2)
            if in_hexagon(cand, c, p.r_c)[0] and np.linalg.norm(cand - c) >= p.d_0:
                rx[k] = cand
                break
    return rx


def angular_windows(p: CellularParams, rng: np.random.Generator) -> np.ndarray:
    """(theta_min, theta_max) per RX around a uniformly drawn centre."""
    centre = rng.uniform(0, 2 * np.pi, size=p.L)
    return np.stack([centre - p.phi / 2, centre + p.phi / 2], axis=1)


def distances(tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
    """d[l, k] in km between RX l and TX k."""
    return np.linalg.norm(rx[:, None, :] - tx[None, :, :], axis=-1)


class Geometry:
    def __init__(self, tx: np.ndarray, rx: np.ndarray, windows: np.ndarray):
        self.tx = np.asarray(tx, dtype=float)
        self.rx = np.asarray(rx, dtype=float)
        self.windows = np.asarray(windows, dtype=float)

    @property
    def distances(self) -> np.ndarray:
        return distances(self.tx, self.rx)

    @classmethod
    def random(cls, p: CellularParams, rng: np.random.Generator) -> 'Geometry':
        geo = cls(cell_centers(p.K, p.r_c), place_receivers(p, rng), angular_windows(p, rng))
        report.debug(f'RX positions {geo.rx.round(4).tolist()}')
        return geo

    def to_dict(self) -> dict:
        return {
            'tx_positions_km': self.tx.tolist(),
            'rx_positions_km': self.rx.tolist(),
            'theta_windows_rad': self.windows.tolist(),
        }
