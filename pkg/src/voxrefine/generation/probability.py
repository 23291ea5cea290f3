# Seeding: every module draws from its own stream split off one root seed
import numpy as np
import zlib


def module_seed(root_seed: int, name: str) -> int:
    # Stable 64-bit seed for the stream called `name`
    seq = np.random.SeedSequence(entropy=int(root_seed),
                                 spawn_key=(zlib.crc32(name.encode("utf-8")),))
    hi, lo = seq.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def module_rng(root_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(module_seed(root_seed, name))


def seeded_linear(rng: np.random.Generator, n_in: int, n_out: int,
                  bias=True):
    # (weights, bias) for a dense layer, variance-scaled by fan-in
    weights = rng.normal(0.0, 1.0 / np.sqrt(max(n_in, 1)), size=(n_in, n_out))
    b = rng.normal(0.0, 0.1, size=n_out) if bias else np.zeros(n_out)
    return weights, b
