"""Decoding of action observation, motor imagery and movement-related
cortical potentials for lower-limb transitions from EEG, EOG and EMG."""

__version__ = "0.1.0"
