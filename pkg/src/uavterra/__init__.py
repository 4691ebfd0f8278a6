"""uavterra: deterministic terrain-aware UAV network simulator.

Modules
-------
terrain      random cylinder scenes, exact line-of-sight, shadows, features
channel      air-to-ground path loss, Nakagami fading, SINR
los_model    elevation-angle LoS probability: sampling, curve fits, azimuth
coverage     Monte Carlo downlink coverage, terrain vs. model blockage
search       relay placement search on the bisector plane, budget sweeps
reconstruct  terrain height bounds carved from link power measurements
tracking     crowd tracking on a reconstructed height field
runner/cli   seeded experiment scenarios with manifests and CSV outputs
kernels      compiled blockage kernel with numpy fallback
"""

__version__ = "0.1.0"
