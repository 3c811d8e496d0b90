# Copyright 2026 The imvae Authors.
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

"""Variational autoencoders with a mutual-information regulariser.

Thin re-export of the compiled ``_imvae`` extension.
"""

from ._imvae import (  # noqa: F401
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    IoError,
    Model,
    ModelShape,
    NumericError,
    active_units,
    binarize,
    config_text,
    encode_checkpoint,
    estimate_mi,
    init_params,
    kl_term,
    load_checkpoint,
    load_idx,
    mi_lower_bound,
    probe_accuracy,
    save_checkpoint,
    synth_correlated_gaussian,
    train,
    version,
)

__version__ = "0.1.0"
