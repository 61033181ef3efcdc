"""Grant-free NOMA uplink simulator with DQN-based resource configuration."""

__version__ = "0.1.0"
