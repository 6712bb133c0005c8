from .motion import (
    ChannelSlice,
    FeatureLayout,
    MotionSequence,
    WindowSample,
    make_layout,
)

__all__ = [
    "ChannelSlice",
    "FeatureLayout",
    "MotionSequence",
    "WindowSample",
    "make_layout",
]
