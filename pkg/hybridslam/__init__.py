# -*- coding: utf-8 -*-
from pkgutil import get_data

__name__ = 'hybridslam'
__shortName__ = 'HybridSLAM'
__version__ = get_data(__name__, 'VERSION').decode('ascii').strip()
__summary__ = 'Dynamic SLAM back end with object-centric points and world-centric motions.'
__description__ = __summary__
