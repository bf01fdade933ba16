"""Typed feature vectors fed to the recurrent stage.

Three kinds exist: ``tool`` (normalized kinematics, 4 or 8 wide),
``video`` (tanh-bounded CNN features), and their concatenation
``combined`` in [video || tool] order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class FeatureVector:
    kind: str                        # "tool" | "video" | "combined"
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("tool", "video", "combined"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return self.values.shape[-1]


def concat_features(video: FeatureVector, tool: FeatureVector) -> FeatureVector:
    """[video || tool] concatenation along the last axis."""
    if video.kind != "video" or tool.kind != "tool":
        raise ValueError(f"need (video, tool) kinds, got ({video.kind}, {tool.kind})")
    return FeatureVector("combined",
                         np.concatenate([video.values, tool.values], axis=-1))
