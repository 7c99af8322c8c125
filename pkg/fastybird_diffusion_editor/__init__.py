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
FastyBird diffusion editor module
"""

from .bootstrap import create_editor

__version__ = "0.1.0"

__all__ = ["editor", "bootstrap", "cli", "__editor_version__"]

__editor_name__ = "FastyBird diffusion editor"

__editor_version__ = __version__
