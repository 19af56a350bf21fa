# SPDX-License-Identifier: MIT

version = "0.1.0"
copyright = "Copyright (c) 2025 darca-ncs-tuning Contributors"
author = "Roel Kist"
