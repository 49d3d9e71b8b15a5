#!/usr/bin/env python

"""
Per-UE DQN agents, their replay buffers and the centralized baseline agent.
"""

from flucsim.agents.replay import Experience, ReplayBuffer
from flucsim.agents.dqn import UeAgent, td_loss
from flucsim.agents.central import CentralAgent, encode_joint_action, decode_joint_action
