"""Deterministic random streams.

The reproducibility contract is: PCG64 seeded from the run seed, Gaussian
variates produced by an explicit Box-Muller transform over the generator's
uniforms. The generator and transform names are recorded in run metadata so
any result can be regenerated from its own files.
"""

import math

import numpy as np

GENERATOR_NAME = "pcg64"
TRANSFORM_NAME = "box-muller"


def make_generator(seed: int, key: int | None = None) -> np.random.Generator:
    """Seeded generator; ``key`` selects an independent child stream.

    The main truth-simulation stream uses ``key=None``; consumers that must
    not perturb it (the particle filter) pass a fixed small integer key.
    """
    if key is None:
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(key)])))


def standard_normal(gen: np.random.Generator, shape) -> np.ndarray:
    """Standard normals via Box-Muller over uniforms.

    z0 = sqrt(-2 ln(1-u1)) cos(2 pi u2), z1 = sqrt(-2 ln(1-u1)) sin(2 pi u2).
    Pairs are consumed in order, so the stream position after a draw depends
    only on the number of variates requested.
    """
    if isinstance(shape, int):
        shape = (shape,)
    count = math.prod(shape)
    if count == 0:
        return np.zeros(shape)
    pairs = (count + 1) // 2
    u = gen.random((pairs, 2))
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(theta)
    z[1::2] = r * np.sin(theta)
    return z[:count].reshape(shape)
