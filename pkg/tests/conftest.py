import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lplaw import PopulationSpectralMeasure
from lplaw.mp import default_profile

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def quadratic_m(z: complex, phi: float) -> complex:
    """Independent oracle for the point-mass population: the upper
    half-plane root of z m^2 + (z + 1 - phi) m + 1 = 0, taken as the limit
    from above for real z."""
    a, b, c = complex(z), complex(z) + 1.0 - phi, 1.0
    disc = np.sqrt(b * b - 4.0 * a * c + 0j)
    roots = [(-b + disc) / (2 * a), (-b - disc) / (2 * a)]
    in_h = [r for r in roots if r.imag > 1e-14]
    if in_h:
        return complex(in_h[0])
    # real z below the support: both roots real, the branch continuous
    # with m ~ -1/z is the positive one
    return complex(max(roots, key=lambda r: r.real).real)


def mp_density_S(x, phi: float):
    """Closed-form limiting sample-spectrum density for Sigma = I."""
    lm, lp = (1 - np.sqrt(phi)) ** 2, (1 + np.sqrt(phi)) ** 2
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x > lm) & (x < lp)
    xi = x[inside]
    out[inside] = np.sqrt((lp - xi) * (xi - lm)) / (2 * np.pi * phi * xi)
    return out


def mp_cdf_S(x, phi: float) -> float:
    """Analytic antiderivative of the identity-population density."""
    lm, lp = (1 - np.sqrt(phi)) ** 2, (1 + np.sqrt(phi)) ** 2
    x = float(np.clip(x, lm, lp))
    r = np.sqrt(max((lp - x) * (x - lm), 0.0))
    t1 = (1 + phi) * np.arcsin(np.clip((x - 1 - phi) / (2 * np.sqrt(phi)), -1, 1))
    t2 = (1 - phi) * np.arcsin(
        np.clip(((1 + phi) * x - (1 - phi) ** 2) / (2 * np.sqrt(phi) * x), -1, 1)
    )
    raw = (r + t1 - t2) / (2 * np.pi * phi)
    low = (
        (1 + phi) * np.arcsin(-1.0)
        - (1 - phi)
        * np.arcsin(np.clip(((1 + phi) * lm - (1 - phi) ** 2) / (2 * np.sqrt(phi) * lm), -1, 1))
    ) / (2 * np.pi * phi)
    return float(raw - low)


@pytest.fixture(scope="session")
def identity_psm():
    return PopulationSpectralMeasure.point_mass(1.0)


@pytest.fixture(scope="session")
def two_atom_psm():
    return PopulationSpectralMeasure.from_atoms([(1.0, 0.5), (3.0, 0.5)])


@pytest.fixture(scope="session")
def identity_profile(identity_psm):
    return default_profile(identity_psm, 0.5)


@pytest.fixture(scope="session")
def two_atom_profile(two_atom_psm):
    return default_profile(two_atom_psm, 0.5)
