#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# hybridslam documentation build configuration file.

import os
import sys

cwd = os.getcwd()
project_root = os.path.dirname(cwd)
sys.path.insert(0, project_root)

import hybridslam  # noqa: E402

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.viewcode', 'sphinx.ext.mathjax']
templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'HybridSLAM'
copyright = u"hybridslam developers"
version = hybridslam.__version__
release = hybridslam.__version__

exclude_patterns = ['_build']
pygments_style = 'sphinx'

html_theme = 'default'
htmlhelp_basename = 'hybridslamdoc'

latex_documents = [
    ('index', 'hybridslam.tex', u'HybridSLAM Documentation', u'hybridslam developers', 'manual'),
]
man_pages = [
    ('index', 'hybridslam', u'HybridSLAM Documentation', [u'hybridslam developers'], 1)
]
