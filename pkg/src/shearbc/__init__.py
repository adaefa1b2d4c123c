"""shearbc: planar tactile collaboration workbench.

Impedance-controlled planar simulation, synthetic two-finger tactile
sensing with a shear-field representation, diffusion behavior cloning,
cross-embodiment rollout and the measurement suite around them.
"""

__version__ = "0.1.0"
