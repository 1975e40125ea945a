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
Exceptions raised by the hitandrun package.

Validation problems are reported as subclasses of :class:`ValueError`
so that callers which only know about ``ValueError`` keep working.
"""

from typing import Dict, Optional


class HitAndRunError(Exception):
    """Base class for all errors raised by this package"""


class InvalidInput(HitAndRunError, ValueError):
    """Base class for errors caused by invalid arguments"""


class NonSymmetric(InvalidInput):
    pass


class NotPositiveDefinite(InvalidInput):
    pass


class DimensionZero(InvalidInput):
    pass


class DimensionMismatch(InvalidInput):
    pass


class EmptySupport(InvalidInput):
    pass


class ZeroVector(InvalidInput):
    pass


class UnsupportedEstimator(InvalidInput):
    pass


class CoincidentPoints(InvalidInput):
    pass


class UnsupportedLaw(InvalidInput):
    pass


class ZeroDirection(InvalidInput):
    pass


class InsufficientReplicas(InvalidInput):
    pass


class BadKappa(InvalidInput):
    pass


class BadDimensions(InvalidInput):
    pass


class BadEpsilon(InvalidInput):
    pass


class UnsupportedDimension(InvalidInput):
    pass


class BadInputs(InvalidInput):
    pass


class RankDeficient(InvalidInput):
    pass


class Inconsistent(InvalidInput):
    pass


class DegenerateDirection(InvalidInput):
    pass


class BadA(InvalidInput):
    pass


class ConfigInvalid(InvalidInput):
    """
    Raised when an experiment configuration cannot be resolved:
    unknown keys, keys that do not apply to the experiment
    or values that cannot be parsed
    """


class NumericalFailure(HitAndRunError, ArithmeticError):
    """
    Raised when a computation produces non-finite values or
    fails an internal consistency check.

    :param message: human readable description
    :param payload: diagnostic values, serialized by the command
        line tool
    """

    def __init__(self, message: str, payload: Optional[Dict] = None):
        super().__init__(message)
        self.payload = payload if payload is not None else dict()
