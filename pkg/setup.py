#!/usr/bin/env python

"""
Run `pip install -e .` to install local git version.
"""

import os
import re
from setuptools import setup, find_packages

# parse version from init.py
with open("flucsim/__init__.py") as init:
    CUR_VERSION = re.search(
        r"^__version__ = ['\"]([^'\"]*)['\"]",
        init.read(),
        re.M,
    ).group(1)


# nasty workaround for RTD low memory limits
on_rtd = os.environ.get('READTHEDOCS') == 'True'
if on_rtd:
    install_requires = []
else:
    install_requires = [
        "numpy",
        "pandas",
        "numba",
        "scipy",
        "loguru"
    ]


# setup installation
setup(
    name="flucsim",
    packages=find_packages(exclude=["tests", "tests.*"]),
    version=CUR_VERSION,
    description="Federated traffic steering simulator for dual-RAT radio access networks",
    install_requires=install_requires,
    extras_require={"test": ["pytest"]},
    entry_points={"console_scripts": ["fluc-sim = flucsim.cli:main"]},
    license='GPL',
    classifiers=[
        'Programming Language :: Python',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
    ],
)
