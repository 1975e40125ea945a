#  Copyright (c) 2021. Harvard University
#
#  Developed by Research Software Engineering,
#  Faculty of Arts and Sciences, Research Computing (FAS RC)
#  Author: Michael A Bouzinier
#
#  Licensed under the Apache License, Version 2.0 (the "License");
#  you may not use this file except in compliance with the License.
#  You may obtain a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#  Unless required by applicable law or agreed to in writing, software
#  distributed under the License is distributed on an "AS IS" BASIS,
#  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#  See the License for the specific language governing permissions and
#  limitations under the License.
#

"""
Deterministic seeding and replica fan-out.

Streams are derived from a master seed with the splitmix64 finalizer
(constants below). Replicas are processed in fixed-size blocks, block
``k`` drawing from ``derive_seed(seed, k)``, and block results are
returned in block order, so the output does not depend on the number
of worker threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, NamedTuple, TypeVar

import numpy as np

from hitandrun.errors import BadInputs


MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MULTIPLIER_1 = 0xBF58476D1CE4E5B9
MIX_MULTIPLIER_2 = 0x94D049BB133111EB

RNG_NAME = "numpy.random.PCG64"
BLOCK_SIZE = 2048

T = TypeVar("T")


class Block(NamedTuple):
    index: int
    start: int
    size: int


def mix64(z: int) -> int:
    """splitmix64 finalizer, a bijection of 64-bit integers"""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_MULTIPLIER_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MULTIPLIER_2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, stream_index: int) -> int:
    """
    Seed of an independent stream.

    ``master_seed + (stream_index + 1) * GOLDEN_GAMMA`` is injective in
    the index modulo 2^64 (the multiplier is odd) and ``mix64`` is a
    bijection, hence distinct indices never collide.

    :param master_seed: any integer, reduced modulo 2^64
    :param stream_index: non-negative index of the stream
    :return: 64-bit unsigned stream seed
    """

    if stream_index < 0:
        raise BadInputs("Stream index must be non-negative: {:d}"
                        .format(stream_index))
    z = (int(master_seed) + (int(stream_index) + 1) * GOLDEN_GAMMA) & MASK64
    return mix64(z)


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def rng_description() -> str:
    return "{} (numpy {})".format(RNG_NAME, np.__version__)


def blocks(n: int, block_size: int = BLOCK_SIZE) -> List[Block]:
    result = []
    start = 0
    index = 0
    while start < n:
        size = min(block_size, n - start)
        result.append(Block(index, start, size))
        start += size
        index += 1
    return result


def map_blocks(fn: Callable[[Block, np.random.Generator], T], n: int,
               seed: int, workers: int = 1,
               block_size: int = BLOCK_SIZE) -> List[T]:
    """
    Applies ``fn`` to every block of ``n`` replicas.

    :param fn: callable receiving the block and its own generator
    :param n: total number of replicas
    :param seed: stream seed, blocks derive their seeds from it
    :param workers: number of threads
    :param block_size: replicas per block
    :return: list of results in block order
    """

    work = blocks(n, block_size)

    def task(block: Block) -> T:
        return fn(block, generator(derive_seed(seed, block.index)))

    if workers is None or workers <= 1 or len(work) <= 1:
        return [task(b) for b in work]
    logging.debug("Fan-out of {:d} blocks over {:d} workers"
                  .format(len(work), workers))
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(task, work))
