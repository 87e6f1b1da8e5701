# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

import sys
from .cli import main

__author__ = "EdgeFace Lite developers"
__copyright__ = "Copyright 2022, EdgeFace Lite contributors"
__email__ = "edgeface-lite@users.noreply.github.com"


sys.exit(main())
