# Copyright 2026 The recist2vol Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.


from __future__ import print_function, division, absolute_import

try:
    from ._version import version as __version__
except ImportError:
    __version__ = "0.0.0+unknown"

from .errors import Error
from .imaging import Volume, RoiImage, load_volume, window_intensity, crop_roi
from .recist import RecistAnnotation, propagate, extract_recist_from_mask
from .grabcut import GrabCutParams, grabcut
from .wsss import Dataset, WsssConfig, grabcut_3de, wsss_train, segment_volume
