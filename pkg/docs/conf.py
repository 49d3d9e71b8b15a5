# Configuration file for the Sphinx documentation builder.
#
# https://www.sphinx-doc.org/en/master/usage/configuration.html

import os
import sys
sys.path.insert(0, os.path.abspath('..'))

# -- Project information -----------------------------------------------------

project = 'flucsim'
author = 'flucsim developers'

version = '0.1'
release = '0.1.0'
extensions = ['sphinx.ext.autodoc', 'sphinx.ext.napoleon']
napoleon_numpy_docstring = True
templates_path = ['_templates']
source_suffix = ".rst"
language = 'en'
exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']
master_doc = "index"
html_theme = 'sphinx_rtd_theme'
html_static_path = ['_static']
