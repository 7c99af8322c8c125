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
FastyBird diffusion editor diffusion module noise schedule
"""

# Python base dependencies
import math
from typing import Dict, Optional, Sequence, Union

# Library dependencies
import torch

# Library libs
from fastybird_diffusion_editor.exceptions import (
    DomainException,
    InvalidConfigurationException,
)
from fastybird_diffusion_editor.types import ALPHA_MAX, ALPHA_MIN, ScheduleKind


class Schedule:
    """
    Differentiable noise level function alpha(t) on t in [0, 1]

    The cosine kind evaluates cos^2(pi * t / 2). The interpolated table kind evaluates
    piecewise-linear interpolation of S + 1 discrete values placed at t = k / S, at knots
    the right-hand segment is used. Both kinds are clamped to [alpha_min, alpha_max].

    @package        FastyBird:DiffusionEditor!
    @module         diffusion/schedule
    """

    __kind: ScheduleKind
    __table: Optional[torch.Tensor] = None

    __alpha_min: float
    __alpha_max: float

    # -----------------------------------------------------------------------------

    def __init__(
        self,
        kind: ScheduleKind = ScheduleKind.COSINE,
        table: Union[Sequence[float], torch.Tensor, None] = None,
        alpha_min: float = ALPHA_MIN,
        alpha_max: float = ALPHA_MAX,
    ) -> None:
        if not 0 < alpha_min < alpha_max <= 1:
            raise InvalidConfigurationException(
                f"Schedule clamp bounds must satisfy 0 < alpha_min < alpha_max <= 1, got ({alpha_min}, {alpha_max})"
            )

        self.__kind = kind

        self.__alpha_min = float(alpha_min)
        self.__alpha_max = float(alpha_max)

        if kind == ScheduleKind.INTERPOLATED_TABLE:
            if table is None:
                raise InvalidConfigurationException("Interpolated schedule requires table of alpha values")

            values = torch.as_tensor(table, dtype=torch.float64).detach().flatten()

            if values.numel() < 2:
                raise InvalidConfigurationException("Schedule table must contain at least two values")

            if not torch.isfinite(values).all() or values.min() < 0 or values.max() > 1:
                raise InvalidConfigurationException("Schedule table values must be finite and within [0, 1]")

            if (values[1:] > values[:-1]).any():
                raise InvalidConfigurationException("Schedule table must be monotonically non-increasing")

            self.__table = values

        else:
            self.__table = None

    # -----------------------------------------------------------------------------

    @classmethod
    def cosine(cls, alpha_min: float = ALPHA_MIN, alpha_max: float = ALPHA_MAX) -> "Schedule":
        """Create closed form cosine schedule"""
        return cls(kind=ScheduleKind.COSINE, alpha_min=alpha_min, alpha_max=alpha_max)

    # -----------------------------------------------------------------------------

    @classmethod
    def from_table(
        cls,
        table: Union[Sequence[float], torch.Tensor],
        alpha_min: float = ALPHA_MIN,
        alpha_max: float = ALPHA_MAX,
    ) -> "Schedule":
        """Create schedule interpolating backbone trained alpha table"""
        return cls(kind=ScheduleKind.INTERPOLATED_TABLE, table=table, alpha_min=alpha_min, alpha_max=alpha_max)

    # -----------------------------------------------------------------------------

    @property
    def kind(self) -> ScheduleKind:
        """Schedule kind"""
        return self.__kind

    # -----------------------------------------------------------------------------

    @property
    def table(self) -> Optional[torch.Tensor]:
        """Discrete alpha values of interpolated schedule"""
        return None if self.__table is None else self.__table.clone()

    # -----------------------------------------------------------------------------

    @property
    def steps_count(self) -> Optional[int]:
        """Number of training timesteps S"""
        return None if self.__table is None else int(self.__table.numel()) - 1

    # -----------------------------------------------------------------------------

    @property
    def alpha_min(self) -> float:
        """Lower clamping bound"""
        return self.__alpha_min

    # -----------------------------------------------------------------------------

    @property
    def alpha_max(self) -> float:
        """Upper clamping bound"""
        return self.__alpha_max

    # -----------------------------------------------------------------------------

    def alpha(self, t: Union[float, torch.Tensor]) -> torch.Tensor:
        """Evaluate clamped alpha(t), differentiable with respect to t"""
        if not isinstance(t, torch.Tensor):
            t = torch.tensor(t, dtype=torch.get_default_dtype())

        if not torch.is_floating_point(t):
            t = t.to(torch.get_default_dtype())

        with torch.no_grad():
            if bool(((t < 0) | (t > 1)).any()) or not bool(torch.isfinite(t).all()):
                raise DomainException(f"Timestep must be within [0, 1], got {t.detach().flatten().tolist()}")

        if self.__kind == ScheduleKind.INTERPOLATED_TABLE and self.__table is not None:
            raw = self.__interpolate(t)

        else:
            raw = torch.cos(t * (math.pi / 2)) ** 2

        return torch.clamp(raw, min=self.__alpha_min, max=self.__alpha_max)

    # -----------------------------------------------------------------------------

    def to_dict(self) -> Dict[str, Union[str, float, int, None]]:
        """Transform schedule to dictionary"""
        return {
            "kind": self.__kind.value,
            "alpha_min": self.__alpha_min,
            "alpha_max": self.__alpha_max,
            "steps_count": self.steps_count,
        }

    # -----------------------------------------------------------------------------

    def __interpolate(self, t: torch.Tensor) -> torch.Tensor:
        assert self.__table is not None

        table = self.__table.to(dtype=t.dtype, device=t.device)
        segments = table.numel() - 1

        position = t * segments
        # Index from detached position, gradient flows only through the fractional part
        index = torch.clamp(torch.floor(position.detach()), 0, segments - 1).long()
        fraction = position - index.to(t.dtype)

        lower = table[index]
        upper = table[index + 1]

        return lower + fraction * (upper - lower)
