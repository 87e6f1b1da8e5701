# Copyright (C) 2022 EdgeFace Lite contributors
#
# SPDX-License-Identifier: BSD-3-Clause

# Configuration file for the Sphinx documentation builder.
#
# This file only contains a selection of the most common options. For a full
# list see the documentation:
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import os
import sys
sys.path.insert(0, os.path.abspath('../../'))

import edgeface_lite

# -- Project information -----------------------------------------------------

project = 'EdgeFace Lite'
copyright = '2022, EdgeFace Lite contributors'
author = 'EdgeFace Lite developers'

# The short X.Y version.
version = edgeface_lite.__version__
# The full version, including alpha/beta/rc tags.
release = edgeface_lite.__version__


# -- General configuration ---------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.napoleon',
    'sphinx.ext.mathjax',
    'myst_parser',
    'sphinx_copybutton'
]

templates_path = ['_templates']

source_suffix = '.rst'

# The master toctree document.
master_doc = 'index'

exclude_patterns = []


# -- Options for HTML output -------------------------------------------------

html_theme = 'sphinx_rtd_theme'

html_static_path = []

# If false, no module index is generated.
html_domain_indices = False

# If false, no index is generated.
html_use_index = False

# If true, links to the reST sources are added to the pages.
html_show_sourcelink = True

# If true, "(C) Copyright ..." is shown in the HTML footer. Default is True.
html_show_copyright = True

# Output file base name for HTML help builder.
htmlhelp_basename = 'EdgeFace_Docs'

# -- Options for manual page output ---------------------------------------

man_pages = [
    (master_doc, 'edgeface', 'EdgeFace Lite', [author], 1)
]
