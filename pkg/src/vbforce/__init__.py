"""vbforce: a desk-scale lab for estimating tool-tissue interaction
forces from monocular video and tool kinematics.

Subsystems: signal/data model (:mod:`vbforce.data`), video preprocessing
(:mod:`vbforce.video`), from-scratch neural blocks (:mod:`vbforce.nnet`),
composite regression losses (:mod:`vbforce.losses`), training loops
(:mod:`vbforce.training`), evaluation metrics (:mod:`vbforce.metrics`),
a linear time-series baseline (:mod:`vbforce.armax`), a synthetic scene
generator with a known force oracle (:mod:`vbforce.synth`), and a CLI
(:mod:`vbforce.cli`).
"""

__version__ = "0.1.0"
