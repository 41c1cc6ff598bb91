import numpy as np
import pytest


def grid_coords(nx, ny, nz):
    return np.array([(x, y, z) for x in range(nx) for y in range(ny)
                     for z in range(nz)], dtype=int)


def simulate_ar2(phi1, phi2, sigma2, T, rng, burn=300):
    innov = rng.standard_normal(T + burn) * np.sqrt(sigma2)
    e = np.zeros(T + burn)
    for t in range(2, T + burn):
        e[t] = phi1 * e[t - 1] + phi2 * e[t - 2] + innov[t]
    return e[burn:]


@pytest.fixture(scope="session")
def design_144():
    from mrvox.design import canonical_hrf, design_matrix
    from mrvox.simulate import make_design
    bd = make_design(144, 2.0, 8)
    return bd, design_matrix(bd, canonical_hrf(2.0))
