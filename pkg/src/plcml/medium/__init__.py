"""Power-line medium: topologies, line transfer functions, multipath
channels, noise, capacity and anomaly injection."""

from .topology import (DEFAULT_CABLE, CableParams, ConcentratedFault, DistributedFault, Edge,
                       LoadChange, Node, Topology, load_topology, perturb, save_topology,
                       topo_random)
from .line import (Z0_DEFAULT, ChannelResponse, FrequencyGrid, LineState, NetworkSolver, abcd,
                   input_admittance, line_constants, nodal_transfer, reflection, tl_transfer)
from .multipath import MultipathConfig, MultipathParams, random_multipath, topdown_channel
from .noise import Bursts, Impulsive, Narrowband, NoiseSpec, Stationary, noise_synthesize
from .capacity import NOISE_FLOOR_DBM_HZ, capacity, dbm_hz_to_w_hz, waterfill
