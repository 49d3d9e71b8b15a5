#!/usr/bin/env python

"""
I/O operations for writing run results to disk.
"""

from flucsim.io.writer import Writer
