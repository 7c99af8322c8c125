#!/usr/bin/python3

#     Copyright 2021. FastyBird s.r.o.
#
#     Licensed under the Apache License, Version 2.0 (the "License");
#     you may not use this file except in compliance with the License.
#     You may obtain a copy of the License at
#
#         http://www.apache.org/licenses/LICENSE-2.0
#
#     Unless required by applicable law or agreed to in writing, software
#     distributed under the License is distributed on an "AS IS" BASIS,
#     WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#     See the License for the specific language governing permissions and
#     limitations under the License.

"""
FastyBird diffusion editor exceptions
"""

# Python base dependencies
from typing import Dict, Optional


class DomainException(ValueError):
    """
    Value is outside of its mathematical domain

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """


class ShapeMismatchException(ValueError):
    """
    Tensors geometry is not compatible

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """


class InvalidConfigurationException(Exception):
    """
    Configuration or backend metadata is not valid

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """


class BackendException(Exception):
    """
    Backend call failed

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """

    __step: Optional[int]

    # -----------------------------------------------------------------------------

    def __init__(self, message: str, step: Optional[int] = None) -> None:
        super().__init__(message if step is None else f"{message} (step: {step})")

        self.__step = step

    # -----------------------------------------------------------------------------

    @property
    def step(self) -> Optional[int]:
        """Index of the step during which backend failed"""
        return self.__step


class BackendLoadException(Exception):
    """
    Backend weights or implementation could not be loaded

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """


class MaskException(Exception):
    """
    Editing region could not be located

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """


class NonFiniteException(ArithmeticError):
    """
    Loss or gradient is not finite

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """


class DistillationException(Exception):
    """
    Latent twin training failed

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """

    __diagnostics: Dict

    # -----------------------------------------------------------------------------

    def __init__(self, message: str, diagnostics: Optional[Dict] = None) -> None:
        super().__init__(message)

        self.__diagnostics = diagnostics if diagnostics is not None else {}

    # -----------------------------------------------------------------------------

    @property
    def diagnostics(self) -> Dict:
        """Training state at the time of failure"""
        return self.__diagnostics


class EvaluationException(Exception):
    """
    Evaluation harness could not be executed

    @package        FastyBird:DiffusionEditor!
    @module         exceptions
    """
