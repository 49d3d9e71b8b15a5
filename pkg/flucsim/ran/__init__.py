#!/usr/bin/env python

"""
Two-tier radio access network: channel model, entities and the
TTI-stepped world.
"""

from flucsim.ran.channel import ChannelParams, channel_gain
from flucsim.ran.entities import BaseStation, UserEquipment, Packet, GBR, NON_GBR
from flucsim.ran.world import RanWorld, StepResult
