#!/usr/bin/env python

"""
General utilities for flucsim
"""
