import numpy as np

from mwlab import rng


def test_uniforms_reproducible():
    a = rng.uniforms(7, 3, 0, 1000)
    b = rng.uniforms(7, 3, 0, 1000)
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a < 1))


def test_step_offset_matches_slice():
    full = rng.uniforms(11, 2, 0, 503)
    for step in (1, 2, 3, 4, 5, 17, 400):
        assert np.array_equal(rng.uniforms(11, 2, step, 503 - step), full[step:])


def test_streams_differ_and_block_matches():
    blk = rng.uniform_block(5, [0, 1, 9], 0, 64)
    assert not np.array_equal(blk[0], blk[1])
    for r, s in enumerate([0, 1, 9]):
        assert np.array_equal(blk[r], rng.uniforms(5, s, 0, 64))
