import os, sys
sys.path.insert(0, os.path.abspath(".."))

import advgrad

project = "advgrad"
version = release = advgrad.__version__
master_doc = "index"

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
]
autodoc_member_order = "bysource"
