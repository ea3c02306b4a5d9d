#!/usr/bin/env python
# -*- coding: utf-8 -*-

from setuptools import setup

with open('README.rst') as readme_file:
    readme = readme_file.read()

with open('HISTORY.rst') as history_file:
    history = history_file.read()

requirements = [
    'numpy>=1.17',
    'scipy>=1.4',
    'Twisted>=18.9',
    'zope.interface>=4.4',
    'PyYAML>=5.1',
]

test_requirements = [
    'pytest>=4.6',
]

setup(
    name='hybridslam',
    version='0.1.0',
    description="Dynamic SLAM back end with object-centric points and world-centric motions.",
    long_description=readme + '\n\n' + history,
    author="hybridslam developers",
    packages=[
        'hybridslam',
        'hybridslam.solvers',
    ],
    package_dir={'hybridslam':
                 'hybridslam'},
    package_data={'hybridslam': ['VERSION', 'default_hybridslam.yaml', 'presets/*.yaml']},
    entry_points={
        'console_scripts': [
            'hybridslam=hybridslam.cli:main'
        ]
    },
    include_package_data=True,
    install_requires=requirements,
    python_requires='>=3.6',
    license="MIT license",
    zip_safe=False,
    keywords='hybridslam slam factor-graph isam2 dynamic-slam',
    classifiers=[
        'Development Status :: 2 - Pre-Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: MIT License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.6',
        'Programming Language :: Python :: 3.7',
        'Programming Language :: Python :: 3.8',
    ],
    test_suite='tests',
    tests_require=test_requirements
)
